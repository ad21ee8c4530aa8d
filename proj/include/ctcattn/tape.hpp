#ifndef CTCATTN_TAPE_HPP_
#define CTCATTN_TAPE_HPP_

#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string_view>

#include "ctcattn/tensor.hpp"

namespace ctcattn {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  // dLoss/dThis after Tape::backward; throws if the node is untracked.
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool tracked() const;
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Wengert list for reverse-mode differentiation. Nodes are appended in
// execution order; backward() replays them in reverse exactly once each and
// accumulates gradients additively across fan-out. A tape belongs to one
// thread for its whole life.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  // Appends an op result. The node is tracked iff any input is tracked, and
  // `backward` is kept only in that case.
  Var record(Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and propagates to every tracked node. Gradients
  // from a previous call are discarded first.
  void backward(Var loss);

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::uint32_t id) const;
  bool tracked(std::uint32_t id) const { return nodes_[id].tracked; }
  // Gradient accumulator for `id`, or nullptr when the node is untracked.
  Tensor* grad_acc(std::uint32_t id) {
    Node& n = nodes_[id];
    return n.tracked ? &n.grad : nullptr;
  }

  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool tracked = false;
    BackwardFn backward;
  };

  Var push(Tensor value, bool tracked, BackwardFn backward);
  void check_owned(const Var& v) const;

  std::deque<Node> nodes_;
  bool have_grads_ = false;
};

namespace testing {

// Scales the backward rule of the named op while in scope on this thread.
// Only for negative-control tests of gradient checking.
class ScopedGradientFault {
 public:
  ScopedGradientFault(std::string_view op, double scale);
  ~ScopedGradientFault();
  ScopedGradientFault(const ScopedGradientFault&) = delete;
  ScopedGradientFault& operator=(const ScopedGradientFault&) = delete;

 private:
  std::string_view prev_op_;
  double prev_scale_;
};

double gradient_fault_scale(std::string_view op);

}  // namespace testing

}  // namespace ctcattn

#endif  // CTCATTN_TAPE_HPP_
