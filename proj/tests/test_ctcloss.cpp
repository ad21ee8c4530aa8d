#include <cmath>
#include <limits>

#include "doctest.h"

#include "ctcattn/ctc.hpp"
#include "test_support.hpp"

using namespace ctcattn;
using test::random_size;
using test::random_tensor;

namespace {

LogPosteriorLattice lattice_from_probs(std::size_t t, std::size_t k,
                                       std::vector<double> probs,
                                       std::size_t blank) {
  for (double& p : probs) p = std::log(p);
  return {Tensor({t, k}, std::move(probs)), blank};
}

LogPosteriorLattice random_lattice(std::size_t t, std::size_t k, Rng& rng) {
  Tape tape;
  Var lp = log_softmax(tape.constant(random_tensor({t, k}, rng, -3, 3)));
  return {lp.value(), 0};
}

LabelSequence random_labels(std::size_t len, std::size_t k, Rng& rng) {
  LabelSequence l;
  for (std::size_t i = 0; i < len; ++i) l.ids.push_back(random_size(rng, 1, k - 1));
  return l;
}

}  // namespace

TEST_SUITE("ctc_loss") {
  TEST_CASE("single frame single label") {
    auto lat = lattice_from_probs(1, 3, {0.2, 0.5, 0.3}, 0);
    CHECK(ctc_loss(lat, LabelSequence{{1}}) == doctest::Approx(-std::log(0.5)).epsilon(1e-14));
  }

  TEST_CASE("six valid paths under uniform posteriors") {
    std::vector<double> p(9, 1.0 / 3.0);
    auto lat = lattice_from_probs(3, 3, p, 2);
    const double expected = -std::log(6.0 / 27.0);
    CHECK(std::abs(ctc_loss(lat, LabelSequence{{0}}) - expected) < 1e-12);
    CHECK(std::abs(ctc_loss_bruteforce(lat, LabelSequence{{0}}).nll - expected) < 1e-12);
  }

  TEST_CASE("hand enumerated two-frame lattice") {
    // Column 0 is the label, column 1 the blank.
    auto lat = lattice_from_probs(2, 2, {0.9, 0.1, 0.9, 0.1}, 1);
    CHECK(std::abs(ctc_loss(lat, LabelSequence{{0}}) + std::log(0.99)) < 1e-12);
    CHECK(std::abs(ctc_loss_bruteforce(lat, LabelSequence{{0}}).nll + std::log(0.99)) < 1e-12);
  }

  TEST_CASE("repeated label needs a separating blank") {
    auto lat = lattice_from_probs(2, 3, {0.2, 0.5, 0.3, 0.2, 0.5, 0.3}, 0);
    CHECK_THROWS_AS(ctc_loss(lat, LabelSequence{{1, 1}}), InfeasibleLabelsError);
    CHECK(min_frames(LabelSequence{{1, 1}}) == 3);
    CHECK(feasible(3, LabelSequence{{1, 1}}));
    CHECK_FALSE(feasible(2, LabelSequence{{1, 2, 2}}));
  }

  TEST_CASE("labels equal to blank are rejected") {
    auto lat = lattice_from_probs(2, 2, {0.5, 0.5, 0.5, 0.5}, 0);
    CHECK_THROWS_AS(ctc_loss(lat, LabelSequence{{0}}), std::invalid_argument);
  }

  TEST_CASE("empty label sequence is the all-blank path") {
    auto lat = lattice_from_probs(2, 2, {0.25, 0.75, 0.5, 0.5}, 0);
    CHECK(std::abs(ctc_loss(lat, LabelSequence{}) + std::log(0.125)) < 1e-14);
  }

  TEST_CASE("matches exhaustive enumeration on random instances") {
    Rng rng(101);
    int checked = 0;
    double worst = 0.0;
    while (checked < 200) {
      const std::size_t t = random_size(rng, 1, 5), k = random_size(rng, 2, 4);
      LabelSequence lab = random_labels(random_size(rng, 0, 3), k, rng);
      if (!feasible(t, lab)) continue;
      auto lat = random_lattice(t, k, rng);
      const auto bf = ctc_loss_bruteforce(lat, lab);
      REQUIRE_FALSE(bf.zero_probability);
      worst = std::max(worst, std::abs(ctc_loss(lat, lab) - bf.nll));
      ++checked;
    }
    CHECK(worst < 1e-9);
  }

  TEST_CASE("gradient with respect to logits matches finite differences") {
    Rng rng(102);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t t = random_size(rng, 1, 6), k = random_size(rng, 2, 5);
      LabelSequence lab = random_labels(random_size(rng, 1, 3), k, rng);
      if (!feasible(t, lab)) continue;
      auto r = test::finite_difference(
          [&](Tape&, const std::vector<Var>& v) {
            return ctc_loss(log_softmax(v[0]), lab, 0);
          },
          {random_tensor({t, k}, rng, -2, 2)}, rng);
      CHECK(r.max_rel < 1e-4);
    }
  }

  TEST_CASE("loss is non-negative and zero only for a certain path") {
    Rng rng(103);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t t = random_size(rng, 1, 6), k = random_size(rng, 2, 5);
      LabelSequence lab = random_labels(random_size(rng, 0, 3), k, rng);
      if (!feasible(t, lab)) continue;
      CHECK(ctc_loss(random_lattice(t, k, rng), lab) > 0.0);
    }
    auto sure = lattice_from_probs(3, 2, {1e-300, 1.0, 1.0, 1e-300, 1.0, 1e-300}, 0);
    CHECK(std::abs(ctc_loss(sure, LabelSequence{{1}})) < 1e-12);
  }

  TEST_CASE("raising the label probability never raises the loss") {
    double prev = std::numeric_limits<double>::infinity();
    for (double p = 0.05; p < 1.0; p += 0.05) {
      const double rest = (1.0 - p) / 2.0;
      auto lat = lattice_from_probs(1, 3, {rest, p, rest}, 0);
      const double loss = ctc_loss(lat, LabelSequence{{1}});
      CHECK(loss <= prev);
      prev = loss;
    }
  }

  TEST_CASE("shape checks") {
    auto lat = lattice_from_probs(2, 2, {0.5, 0.5, 0.5, 0.5}, 0);
    CHECK_THROWS_AS(ctc_loss(lat, LabelSequence{{2}}), std::invalid_argument);
    LogPosteriorLattice bad{Tensor({2, 2}), 0};
    CHECK_THROWS(bad.validate());
  }
}

TEST_SUITE("ctc_loss_bruteforce") {
  TEST_CASE("infeasible labels give the sentinel") {
    auto lat = lattice_from_probs(2, 3, {0.2, 0.5, 0.3, 0.2, 0.5, 0.3}, 0);
    const auto r = ctc_loss_bruteforce(lat, LabelSequence{{1, 1}});
    CHECK(r.zero_probability);
    CHECK(r.nll == kInfiniteLoss);
  }

  TEST_CASE("refuses oversized instances") {
    LogPosteriorLattice lat{Tensor({11, 4}), 0};
    lat.logp.fill(-std::log(4.0));
    CHECK_THROWS_AS(ctc_loss_bruteforce(lat, LabelSequence{{1}}), std::length_error);
  }
}

TEST_SUITE("collapse") {
  TEST_CASE("examples") {
    const std::size_t a = 1, b = 2, blank = 0;
    CHECK(collapse(std::vector<std::size_t>{a, a, blank, b}, blank).ids ==
          std::vector<std::size_t>{a, b});
    CHECK(collapse(std::vector<std::size_t>{blank, blank, blank}, blank).ids.empty());
    CHECK(collapse(std::vector<std::size_t>{a, blank, a}, blank).ids ==
          std::vector<std::size_t>{a, a});
  }
}
