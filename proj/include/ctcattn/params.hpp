#ifndef CTCATTN_PARAMS_HPP_
#define CTCATTN_PARAMS_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctcattn/tape.hpp"

namespace ctcattn {

using Rng = std::mt19937_64;

// Named parameter tensors in insertion order.
class ParamSet {
 public:
  Tensor& add(const std::string& name, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const {
    return index_.count(name) != 0;
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  const std::string& name(std::size_t i) const { return entries_[i].first; }
  Tensor& value(std::size_t i) { return entries_[i].second; }
  const Tensor& value(std::size_t i) const { return entries_[i].second; }

  // Same names and shapes, all zeros.
  ParamSet zeros_like() const;
  void axpy(double alpha, const ParamSet& x);  // this += alpha * x
  void scale(double s);
  double squared_norm() const;
  bool same_layout(const ParamSet& other) const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng);

// Parameters of one ParamSet bound to a tape as tracked leaves.
class Bindings {
 public:
  Bindings(Tape& tape, const ParamSet& params, bool track = true);

  Var operator()(const std::string& name) const;
  bool contains(const std::string& name) const {
    return vars_.count(name) != 0;
  }
  Tape& tape() const { return *tape_; }

  // Copies d(loss)/d(param) into `out` (same layout as the bound set);
  // call after Tape::backward.
  void gradients(ParamSet& out) const;

 private:
  Tape* tape_;
  const ParamSet* params_;
  std::unordered_map<std::string, Var> vars_;
};

}  // namespace ctcattn

#endif  // CTCATTN_PARAMS_HPP_
