#include <cmath>
#include <cstring>
#include <numeric>

#include "doctest.h"

#include "ctcattn/kernels.hpp"
#include "ctcattn/lstm.hpp"
#include "oracles/reference_nets.hpp"
#include "test_support.hpp"

using namespace ctcattn;
using test::finite_difference;
using test::random_size;
using test::random_tensor;

namespace {

Tensor mat(std::size_t r, std::size_t c, std::vector<double> v) {
  return Tensor({r, c}, std::move(v));
}

double eval(const test::VarFn& f, const std::vector<Tensor>& in, std::size_t i) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : in) vars.push_back(tape.constant(t));
  return f(tape, vars).value()[i];
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("construction checks length against shape") {
    CHECK(Tensor({2, 3}).size() == 6);
    CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
    CHECK(Tensor::scalar(2.5).item() == 2.5);
    CHECK_THROWS_AS(Tensor({2}).item(), DimensionError);
  }
}

TEST_SUITE("matmul") {
  TEST_CASE("identity") {
    Tape t;
    Var r = matmul(t.constant(mat(2, 2, {1, 0, 0, 1})),
                   t.constant(mat(2, 2, {1, 2, 3, 4})));
    CHECK(r.value().storage() == std::vector<double>{1, 2, 3, 4});
  }

  TEST_CASE("zero annihilator") {
    Tape t;
    Var r = matmul(t.constant(mat(1, 1, {0})), t.constant(mat(1, 1, {5})));
    CHECK(r.value().shape() == Shape{1, 1});
    CHECK(r.value()[0] == 0.0);
  }

  TEST_CASE("random 3x4 by 4x2 against triple loop") {
    Rng rng(7);
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    Tape t;
    Var r = matmul(t.constant(a), t.constant(b));
    double worst = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < 4; ++k) s += a.at(i, k) * b.at(k, j);
        worst = std::max(worst, std::abs(s - r.value().at(i, j)));
      }
    }
    CHECK(worst < 1e-12);
  }

  TEST_CASE("mismatch names both shapes") {
    Tape t;
    try {
      matmul(t.constant(Tensor({2, 3})), t.constant(Tensor({4, 2})));
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
      CHECK(msg.find("[4x2]") != std::string::npos);
    }
  }
}

TEST_SUITE("elementwise") {
  TEST_CASE("examples") {
    Tape t;
    CHECK(tanh(t.constant(Tensor::vector({0.0}))).value()[0] == 0.0);
    Var s = add(t.constant(Tensor::vector({1, 2})), t.constant(Tensor::vector({3, 4})));
    CHECK(s.value().storage() == std::vector<double>{4, 6});
  }

  TEST_CASE("tanh derivative at 0.3 matches central difference") {
    Tape t;
    Var x = t.variable(Tensor::scalar(0.3));
    Var y = tanh(x);
    t.backward(y);
    const double eps = 1e-5;
    const double fd = (std::tanh(0.3 + eps) - std::tanh(0.3 - eps)) / (2 * eps);
    CHECK(std::abs(x.grad().item() - fd) < 1e-8);
  }

  TEST_CASE("errors") {
    Tape t;
    CHECK_THROWS_AS(add(t.constant(Tensor({2})), t.constant(Tensor({3}))),
                    DimensionError);
    CHECK_THROWS_AS(mul(t.constant(Tensor({2, 1})), t.constant(Tensor({2}))),
                    DimensionError);
    CHECK_THROWS_AS(log(t.constant(Tensor::vector({1.0, 0.0}))), DomainError);
    CHECK_THROWS_AS(log(t.constant(Tensor::vector({-2.0}))), DomainError);
  }

  TEST_CASE("sigmoid is stable at extremes") {
    Tape t;
    Var y = sigmoid(t.constant(Tensor::vector({-800.0, 0.0, 800.0})));
    CHECK(y.value()[0] == 0.0);
    CHECK(y.value()[1] == 0.5);
    CHECK(y.value()[2] == 1.0);
  }
}

TEST_SUITE("softmax") {
  TEST_CASE("uniform") {
    Tape t;
    Var y = softmax(t.constant(Tensor({3})));
    for (double v : y.value().data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }

  TEST_CASE("overflow safety") {
    Tape t;
    Var y = softmax(t.constant(Tensor::vector({1000.0, 0.0})));
    CHECK(test::all_finite(y.value()));
    CHECK(std::abs(y.value()[0] + y.value()[1] - 1.0) < 1e-12);
    CHECK(y.value()[0] == 1.0);
  }

  TEST_CASE("random 5-vector against extended-precision formula") {
    Rng rng(11);
    Tensor x = random_tensor({5}, rng, -5, 5);
    Tape t;
    Var y = softmax(t.constant(x));
    long double s = 0;
    for (double v : x.data()) s += std::exp(static_cast<long double>(v));
    for (std::size_t i = 0; i < 5; ++i) {
      const long double ref = std::exp(static_cast<long double>(x[i])) / s;
      CHECK(std::abs(static_cast<double>(ref) - y.value()[i]) < 1e-12);
    }
  }

  TEST_CASE("sums to one and is permutation equivariant") {
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t k = random_size(rng, 1, 12);
      Tensor x = random_tensor({k}, rng, -30, 30);
      std::vector<std::size_t> perm(k);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      Tensor px({k});
      for (std::size_t i = 0; i < k; ++i) px[i] = x[perm[i]];
      Tape t;
      const Tensor y = softmax(t.constant(x)).value();
      const Tensor py = softmax(t.constant(px)).value();
      double s = 0.0;
      for (double v : y.data()) s += v;
      CHECK(std::abs(s - 1.0) <= 1e-12);
      for (std::size_t i = 0; i < k; ++i) CHECK(py[i] == doctest::Approx(y[perm[i]]).epsilon(1e-14));
    }
  }

  TEST_CASE("axis variants normalize columns or rows") {
    Rng rng(13);
    Tensor x = random_tensor({3, 4}, rng, -3, 3);
    Tape t;
    const Tensor cols = softmax(t.constant(x), 0).value();
    const Tensor rows = softmax(t.constant(x), 1).value();
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < 3; ++i) s += cols.at(i, j);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    for (std::size_t i = 0; i < 3; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < 4; ++j) s += rows.at(i, j);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    const Tensor ls = log_softmax(t.constant(x)).value();
    for (std::size_t i = 0; i < 12; ++i) CHECK(std::abs(std::exp(ls[i]) - rows[i]) < 1e-14);
  }
}

TEST_SUITE("backward") {
  TEST_CASE("x dot x at 3") {
    Tape t;
    Var x = t.variable(Tensor::scalar(3.0));
    t.backward(mul(x, x));
    CHECK(x.grad().item() == 6.0);
  }

  TEST_CASE("fan-out accumulates") {
    Tape t;
    Var x = t.variable(Tensor::scalar(1.5));
    t.backward(add(x, x));
    CHECK(x.grad().item() == 2.0);
  }

  TEST_CASE("non-scalar loss is rejected") {
    Tape t;
    Var x = t.variable(Tensor({2}));
    CHECK_THROWS_AS(t.backward(x), DimensionError);
  }

  TEST_CASE("sum(tanh(Wx)) against finite differences") {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t m = random_size(rng, 1, 6), k = random_size(rng, 1, 6);
      auto r = finite_difference(
          [](Tape&, const std::vector<Var>& v) {
            return sum(tanh(matmul(v[0], v[1])));
          },
          {random_tensor({m, k}, rng), random_tensor({k}, rng)}, rng);
      CHECK(r.max_rel < 1e-4);
    }
  }

  TEST_CASE("constants receive no gradient") {
    Tape t;
    Var c = t.constant(Tensor::scalar(2.0));
    Var x = t.variable(Tensor::scalar(3.0));
    t.backward(mul(c, x));
    CHECK(x.grad().item() == 2.0);
    CHECK_FALSE(c.tracked());
    CHECK_THROWS(c.grad());
  }

  TEST_CASE("replay is bit-identical") {
    auto run = [] {
      Rng rng(5);
      Tape t;
      Var w = t.variable(random_tensor({6, 5}, rng));
      Var x = t.variable(random_tensor({4, 5}, rng));
      Var y = log_softmax(tanh(linear(x, w)));
      t.backward(sum(mul(y, y)));
      std::vector<double> g = w.grad().storage();
      g.insert(g.end(), x.grad().data().begin(), x.grad().data().end());
      return g;
    };
    const auto a = run(), b = run();
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  }

  TEST_CASE("a second backward pass reproduces the first") {
    Rng rng(6);
    Tape t;
    Var x = t.variable(random_tensor({3}, rng));
    Var loss = sum(exp(x));
    t.backward(loss);
    const Tensor g1 = x.grad();
    t.backward(loss);
    CHECK(max_abs_diff(g1, x.grad()) == 0.0);
  }
}

namespace {

struct OpCase {
  const char* name;
  std::function<std::vector<Tensor>(Rng&)> inputs;
  test::VarFn fn;
};

std::vector<OpCase> op_cases() {
  auto sz = [](Rng& r) { return random_size(r, 1, 5); };
  return {
      {"add", [sz](Rng& r) { Shape s{sz(r), sz(r)}; return std::vector{random_tensor(s, r), random_tensor(s, r)}; },
       [](Tape&, auto& v) { return add(v[0], v[1]); }},
      {"sub", [sz](Rng& r) { Shape s{sz(r)}; return std::vector{random_tensor(s, r), random_tensor(s, r)}; },
       [](Tape&, auto& v) { return sub(v[0], v[1]); }},
      {"mul", [sz](Rng& r) { Shape s{sz(r), sz(r)}; return std::vector{random_tensor(s, r), random_tensor(s, r)}; },
       [](Tape&, auto& v) { return mul(v[0], v[1]); }},
      {"scale", [sz](Rng& r) { return std::vector{random_tensor({sz(r)}, r)}; },
       [](Tape&, auto& v) { return scale(v[0], -1.7); }},
      {"tanh", [sz](Rng& r) { return std::vector{random_tensor({sz(r)}, r, -2, 2)}; },
       [](Tape&, auto& v) { return tanh(v[0]); }},
      {"sigmoid", [sz](Rng& r) { return std::vector{random_tensor({sz(r)}, r, -4, 4)}; },
       [](Tape&, auto& v) { return sigmoid(v[0]); }},
      {"exp", [sz](Rng& r) { return std::vector{random_tensor({sz(r)}, r, -2, 2)}; },
       [](Tape&, auto& v) { return exp(v[0]); }},
      {"log", [sz](Rng& r) { return std::vector{random_tensor({sz(r)}, r, 0.2, 3)}; },
       [](Tape&, auto& v) { return log(v[0]); }},
      {"add_row", [sz](Rng& r) { auto a = sz(r), b = sz(r); return std::vector{random_tensor({a, b}, r), random_tensor({b}, r)}; },
       [](Tape&, auto& v) { return add_row(v[0], v[1]); }},
      {"matmul", [sz](Rng& r) { auto a = sz(r), b = sz(r), c = sz(r); return std::vector{random_tensor({a, b}, r), random_tensor({b, c}, r)}; },
       [](Tape&, auto& v) { return matmul(v[0], v[1]); }},
      {"matvec", [sz](Rng& r) { auto a = sz(r), b = sz(r); return std::vector{random_tensor({a, b}, r), random_tensor({b}, r)}; },
       [](Tape&, auto& v) { return matmul(v[0], v[1]); }},
      {"linear", [sz](Rng& r) { auto a = sz(r), b = sz(r), c = sz(r); return std::vector{random_tensor({a, b}, r), random_tensor({c, b}, r), random_tensor({c}, r)}; },
       [](Tape&, auto& v) { return linear(v[0], v[1], v[2]); }},
      {"linear_vec", [sz](Rng& r) { auto b = sz(r), c = sz(r); return std::vector{random_tensor({b}, r), random_tensor({c, b}, r)}; },
       [](Tape&, auto& v) { return linear(v[0], v[1]); }},
      {"softmax", [sz](Rng& r) { return std::vector{random_tensor({sz(r)}, r, -3, 3)}; },
       [](Tape&, auto& v) { return softmax(v[0]); }},
      {"softmax_axis0", [sz](Rng& r) { return std::vector{random_tensor({sz(r), sz(r)}, r, -3, 3)}; },
       [](Tape&, auto& v) { return softmax(v[0], 0); }},
      {"softmax_axis1", [sz](Rng& r) { return std::vector{random_tensor({sz(r), sz(r)}, r, -3, 3)}; },
       [](Tape&, auto& v) { return softmax(v[0], 1); }},
      {"log_softmax", [sz](Rng& r) { return std::vector{random_tensor({sz(r), sz(r)}, r, -3, 3)}; },
       [](Tape&, auto& v) { return log_softmax(v[0]); }},
      {"sum", [sz](Rng& r) { return std::vector{random_tensor({sz(r), sz(r)}, r)}; },
       [](Tape&, auto& v) { return sum(v[0]); }},
      {"dot", [sz](Rng& r) { Shape s{sz(r)}; return std::vector{random_tensor(s, r), random_tensor(s, r)}; },
       [](Tape&, auto& v) { return dot(v[0], v[1]); }},
      {"colsum", [sz](Rng& r) { return std::vector{random_tensor({sz(r), sz(r)}, r)}; },
       [](Tape&, auto& v) { return colsum(v[0]); }},
      {"concat", [sz](Rng& r) { return std::vector{random_tensor({sz(r)}, r), random_tensor({sz(r)}, r)}; },
       [](Tape&, auto& v) { return concat(v); }},
      {"hconcat", [sz](Rng& r) { auto a = sz(r); return std::vector{random_tensor({a, sz(r)}, r), random_tensor({a, sz(r)}, r)}; },
       [](Tape&, auto& v) { return hconcat(v); }},
      {"stack", [sz](Rng& r) { Shape s{sz(r)}; return std::vector{random_tensor(s, r), random_tensor(s, r), random_tensor(s, r)}; },
       [](Tape&, auto& v) { return stack(v); }},
      {"select", [sz](Rng& r) { return std::vector{random_tensor({3, sz(r)}, r)}; },
       [](Tape&, auto& v) { return select(v[0], 1); }},
      {"slice", [sz](Rng& r) { return std::vector{random_tensor({5}, r)}; },
       [](Tape&, auto& v) { return slice(v[0], 1, 3); }},
      {"reshape", [sz](Rng& r) { return std::vector{random_tensor({2, 3}, r)}; },
       [](Tape&, auto& v) { return reshape(v[0], {3, 2}); }},
      {"shift_rows", [sz](Rng& r) { return std::vector{random_tensor({4, sz(r)}, r)}; },
       [](Tape&, auto& v) { return shift_rows(v[0], -2); }},
      {"lstm_pointwise", [sz](Rng& r) { auto c = sz(r); return std::vector{random_tensor({4 * c}, r, -2, 2), random_tensor({c}, r)}; },
       [](Tape&, auto& v) { return lstm_pointwise(v[0], v[1]); }},
      {"location_conv", [sz](Rng& r) { return std::vector{random_tensor({5}, r), random_tensor({sz(r), 3}, r)}; },
       [](Tape&, auto& v) { return location_conv(v[0], v[1], 1); }},
  };
}

}  // namespace

TEST_CASE("every op passes finite differences on 100 random instances") {
  Rng rng(31);
  for (const auto& op : op_cases()) {
    CAPTURE(op.name);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      worst = std::max(worst, finite_difference(op.fn, op.inputs(rng), rng).max_rel);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("gradient fault fixture breaks the checked rule") {
  Rng rng(32);
  const test::VarFn f = [](Tape&, const std::vector<Var>& v) { return tanh(v[0]); };
  const std::vector<Tensor> in{random_tensor({4}, rng)};
  CHECK(finite_difference(f, in, rng).max_rel < 1e-4);
  testing::ScopedGradientFault fault("tanh", 1.5);
  CHECK(finite_difference(f, in, rng).max_rel > 0.1);
}

TEST_CASE("shift_rows and location_conv semantics") {
  Tape t;
  Var m = t.constant(mat(3, 1, {1, 2, 3}));
  CHECK(shift_rows(m, 1).value().storage() == std::vector<double>{2, 3, 0});
  CHECK(shift_rows(m, -1).value().storage() == std::vector<double>{0, 1, 2});
  // Delta kernel of width one reads the input back.
  Var x = t.constant(Tensor::vector({0.1, 0.2, 0.7}));
  Var delta = t.constant(mat(1, 1, {1.0}));
  CHECK(location_conv(x, delta, 0).value().storage() == std::vector<double>{0.1, 0.2, 0.7});
  CHECK(location_conv(x, delta, 1).value().storage() == std::vector<double>{0.2, 0.7, 0.0});
  CHECK_THROWS_AS(location_conv(x, t.constant(Tensor({1, 4})), 0), DimensionError);
}

TEST_SUITE("lstm_cell") {
  TEST_CASE("zero params and state give zero output") {
    ParamSet ps;
    Rng rng(1);
    add_lstm_params(ps, "l", 3, 4, rng);
    for (std::size_t i = 0; i < ps.size(); ++i) ps.value(i).fill(0.0);
    Tape t;
    Bindings b(t, ps);
    LstmState s = lstm_cell(t.constant(Tensor({3})), zero_lstm_state(t, 4),
                            LstmParams::bind(b, "l"));
    for (double v : s.h.value().data()) CHECK(v == 0.0);
    for (double v : s.c.value().data()) CHECK(v == 0.0);
  }

  TEST_CASE("saturated forget gate keeps the cell and adds i*g") {
    Rng rng(2);
    ParamSet ps;
    const std::size_t n = 3;
    add_lstm_params(ps, "l", 2, n, rng);
    for (std::size_t j = 0; j < n; ++j) ps.at("l.b")[n + j] = 50.0;
    Tensor x = random_tensor({2}, rng), h0 = random_tensor({n}, rng),
           c0 = random_tensor({n}, rng);
    Tape t;
    Bindings b(t, ps);
    LstmState s = lstm_cell(t.constant(x), {t.constant(h0), t.constant(c0)},
                            LstmParams::bind(b, "l"));
    const auto [h_ref, c_ref] = oracle::lstm_step(
        ps.at("l.Wx"), ps.at("l.Wh"), ps.at("l.b"), x.storage(), h0.storage(),
        c0.storage());
    for (std::size_t j = 0; j < n; ++j) {
      double gi = ps.at("l.b")[j], gg = ps.at("l.b")[2 * n + j];
      for (std::size_t i = 0; i < 2; ++i) {
        gi += ps.at("l.Wx").at(j, i) * x[i];
        gg += ps.at("l.Wx").at(2 * n + j, i) * x[i];
      }
      for (std::size_t i = 0; i < n; ++i) {
        gi += ps.at("l.Wh").at(j, i) * h0[i];
        gg += ps.at("l.Wh").at(2 * n + j, i) * h0[i];
      }
      const double expected = c0[j] + oracle::sigm(gi) * std::tanh(gg);
      CHECK(std::abs(s.c.value()[j] - expected) < 1e-12);
      CHECK(std::abs(s.c.value()[j] - c_ref[j]) < 1e-12);
    }
  }

  TEST_CASE("random step against scalar loop") {
    Rng rng(3);
    ParamSet ps;
    add_lstm_params(ps, "l", 5, 4, rng);
    Tensor x = random_tensor({5}, rng), h0 = random_tensor({4}, rng),
           c0 = random_tensor({4}, rng);
    Tape t;
    Bindings b(t, ps);
    LstmState s = lstm_cell(t.constant(x), {t.constant(h0), t.constant(c0)},
                            LstmParams::bind(b, "l"));
    const auto [h_ref, c_ref] = oracle::lstm_step(
        ps.at("l.Wx"), ps.at("l.Wh"), ps.at("l.b"), x.storage(), h0.storage(),
        c0.storage());
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(std::abs(s.h.value()[j] - h_ref[j]) < 1e-12);
      CHECK(std::abs(s.c.value()[j] - c_ref[j]) < 1e-12);
    }
  }

  TEST_CASE("shape mismatch") {
    Rng rng(4);
    ParamSet ps;
    add_lstm_params(ps, "l", 3, 2, rng);
    Tape t;
    Bindings b(t, ps);
    CHECK_THROWS_AS(lstm_cell(t.constant(Tensor({4})), zero_lstm_state(t, 2),
                              LstmParams::bind(b, "l")),
                    DimensionError);
    CHECK_THROWS_AS(lstm_cell(t.constant(Tensor({3})), zero_lstm_state(t, 3),
                              LstmParams::bind(b, "l")),
                    DimensionError);
  }
}

TEST_SUITE("kernels") {
  TEST_CASE("parallel gemm is bit-identical to the serial reference") {
    Rng rng(41);
    for (int trial = 0; trial < 40; ++trial) {
      kernels::GemmDims d{random_size(rng, 1, 70), random_size(rng, 1, 70),
                          random_size(rng, 1, 70), trial % 2 == 1, trial % 4 >= 2};
      Tensor a = random_tensor({d.m * d.k}, rng), b = random_tensor({d.k * d.n}, rng);
      Tensor c1 = random_tensor({d.m * d.n}, rng), c2 = c1;
      kernels::serial::gemm(d, a.data(), b.data(), c1.data());
      kernels::parallel::gemm(d, a.data(), b.data(), c2.data());
      CHECK(std::memcmp(c1.data().data(), c2.data().data(), c1.size() * sizeof(double)) == 0);
    }
  }

  TEST_CASE("transposed operands") {
    // A^T [2x3] from a stored 3x2, B^T [3x2] from a stored 2x3.
    const std::vector<double> a{1, 2, 3, 4, 5, 6}, b{1, 0, 2, 0, 1, 3};
    std::vector<double> c(4, 0.0);
    kernels::serial::gemm({2, 2, 3, true, true}, a, b, c);
    // A^T = [[1,3,5],[2,4,6]], B^T = [[1,0],[0,1],[2,3]].
    CHECK(c == std::vector<double>{11, 18, 14, 22});
  }
}

TEST_CASE("ops evaluate example values") {
  const test::VarFn f = [](Tape& t, const std::vector<Var>& v) {
    return linear(v[0], v[1], t.constant(Tensor::vector({1.0, -1.0})));
  };
  CHECK(eval(f, {Tensor::vector({1, 2}), mat(2, 2, {1, 0, 0, 1})}, 0) == 2.0);
  CHECK(eval(f, {Tensor::vector({1, 2}), mat(2, 2, {1, 0, 0, 1})}, 1) == 1.0);
}
