#include "ctcattn/tape.hpp"

#include <limits>
#include <stdexcept>

namespace ctcattn {

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("value() on an unbound Var");
  return tape_->value(id_);
}

const Tensor& Var::grad() const {
  if (!tape_) throw std::logic_error("grad() on an unbound Var");
  return tape_->grad(id_);
}

bool Var::tracked() const { return tape_ && tape_->tracked(id_); }

Var Tape::constant(Tensor value) { return push(std::move(value), false, {}); }

Var Tape::variable(Tensor value) { return push(std::move(value), true, {}); }

Var Tape::record(Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(),
                                                       inputs.size()),
                std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs,
                 BackwardFn backward) {
  bool tracked = false;
  for (const Var& v : inputs) {
    check_owned(v);
    tracked = tracked || nodes_[v.id()].tracked;
  }
  return push(std::move(value), tracked,
              tracked ? std::move(backward) : BackwardFn{});
}

Var Tape::push(Tensor value, bool tracked, BackwardFn backward) {
  if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) {
    throw std::length_error("tape full");
  }
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{std::move(value), Tensor{}, tracked,
                        std::move(backward)});
  return Var(this, id);
}

void Tape::check_owned(const Var& v) const {
  if (v.tape() != this) {
    throw std::logic_error("Var used with a tape that does not own it");
  }
}

const Tensor& Tape::grad(std::uint32_t id) const {
  const Node& n = nodes_[id];
  if (!n.tracked) throw std::logic_error("grad() on an untracked node");
  if (!have_grads_) throw std::logic_error("grad() before backward()");
  return n.grad;
}

void Tape::backward(Var loss) {
  check_owned(loss);
  if (loss.value().size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " +
                         shape_str(loss.shape()));
  }
  for (Node& n : nodes_) {
    if (n.tracked) {
      n.grad = Tensor::zeros_like(n.value);
    } else {
      n.grad = Tensor{};
    }
  }
  have_grads_ = true;
  Node& root = nodes_[loss.id()];
  if (!root.tracked) return;
  root.grad[0] = 1.0;
  for (std::uint32_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.tracked && n.backward) n.backward(*this, id);
  }
}

void Tape::clear() {
  nodes_.clear();
  have_grads_ = false;
}

namespace testing {

namespace {
thread_local std::string_view g_fault_op;
thread_local double g_fault_scale = 1.0;
}  // namespace

ScopedGradientFault::ScopedGradientFault(std::string_view op, double scale)
    : prev_op_(g_fault_op), prev_scale_(g_fault_scale) {
  g_fault_op = op;
  g_fault_scale = scale;
}

ScopedGradientFault::~ScopedGradientFault() {
  g_fault_op = prev_op_;
  g_fault_scale = prev_scale_;
}

double gradient_fault_scale(std::string_view op) {
  return (!g_fault_op.empty() && op == g_fault_op) ? g_fault_scale : 1.0;
}

}  // namespace testing

}  // namespace ctcattn
