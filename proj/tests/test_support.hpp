#ifndef CTCATTN_TESTS_TEST_SUPPORT_HPP_
#define CTCATTN_TESTS_TEST_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "ctcattn/ops.hpp"
#include "ctcattn/params.hpp"
#include "ctcattn/train.hpp"

namespace ctcattn::test {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(shape);
  for (double& v : t.data()) v = d(rng);
  return t;
}

inline std::size_t random_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

using VarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct FdResult {
  double max_rel = 0.0;
  double max_abs = 0.0;
};

// Compares tape gradients of <f(inputs), r> for a fixed random r against
// central differences, over every input element.
inline FdResult finite_difference(const VarFn& f, std::vector<Tensor> inputs,
                                  Rng& rng, double eps = 1e-5,
                                  double floor = 1e-6) {
  auto evaluate = [&](const std::vector<Tensor>& in, Tensor* weights,
                      std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : in) {
      vars.push_back(grads ? tape.variable(t) : tape.constant(t));
    }
    Var out = f(tape, vars);
    if (weights->empty()) *weights = random_tensor(out.shape(), rng);
    Var loss = sum(mul(out, tape.constant(*weights)));
    if (grads) {
      tape.backward(loss);
      for (const Var& v : vars) grads->push_back(v.grad());
    }
    return loss.value().item();
  };
  Tensor weights;
  std::vector<Tensor> grads;
  evaluate(inputs, &weights, &grads);
  FdResult r;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double saved = inputs[i][j];
      inputs[i][j] = saved + eps;
      const double up = evaluate(inputs, &weights, nullptr);
      inputs[i][j] = saved - eps;
      const double down = evaluate(inputs, &weights, nullptr);
      inputs[i][j] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      r.max_abs = std::max(r.max_abs, std::abs(numeric - grads[i][j]));
      r.max_rel = std::max(r.max_rel, relative_error(grads[i][j], numeric, floor));
    }
  }
  return r;
}

inline bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace ctcattn::test

#endif  // CTCATTN_TESTS_TEST_SUPPORT_HPP_
