#include "ctcattn/params.hpp"

#include <cmath>
#include <stdexcept>

namespace ctcattn {

Tensor& ParamSet::add(const std::string& name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate param " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, std::move(value));
  return entries_.back().second;
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no param named " + name);
  return entries_[it->second].second;
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no param named " + name);
  return entries_[it->second].second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& [name, t] : entries_) out.add(name, Tensor::zeros_like(t));
  return out;
}

void ParamSet::axpy(double alpha, const ParamSet& x) {
  if (!same_layout(x)) throw DimensionError("axpy: parameter layout mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto dst = entries_[i].second.data();
    auto src = x.entries_[i].second.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += alpha * src[k];
  }
}

void ParamSet::scale(double s) {
  for (auto& [_, t] : entries_) {
    for (double& v : t.data()) v *= s;
  }
}

double ParamSet::squared_norm() const {
  double s = 0.0;
  for (const auto& [_, t] : entries_) {
    for (double v : t.data()) s += v * v;
  }
  return s;
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first ||
        entries_[i].second.shape() != other.entries_[i].second.shape()) {
      return false;
    }
  }
  return true;
}

Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Bindings::Bindings(Tape& tape, const ParamSet& params, bool track)
    : tape_(&tape), params_(&params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    vars_.emplace(params.name(i), track ? tape.variable(params.value(i))
                                        : tape.constant(params.value(i)));
  }
}

Var Bindings::operator()(const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw std::out_of_range("unbound param " + name);
  return it->second;
}

void Bindings::gradients(ParamSet& out) const {
  if (!out.same_layout(*params_)) {
    throw DimensionError("gradients: output layout mismatch");
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Var v = vars_.at(params_->name(i));
    if (!v.tracked()) {
      out.value(i).fill(0.0);
      continue;
    }
    out.value(i) = v.grad();
  }
}

}  // namespace ctcattn
