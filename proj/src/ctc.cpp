#include "ctcattn/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ctcattn/ops.hpp"

namespace ctcattn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Blank-interleaved labels: blank, l1, blank, l2, ..., blank.
std::vector<std::size_t> extend(const LabelSequence& labels,
                                std::size_t blank) {
  std::vector<std::size_t> ext(2 * labels.size() + 1, blank);
  for (std::size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels.ids[i];
  return ext;
}

// Predecessor states of s in the previous frame, at most three.
struct Preds {
  std::size_t s[3];
  std::size_t count = 0;
};

Preds predecessors(const std::vector<std::size_t>& ext, std::size_t s,
                   std::size_t blank) {
  Preds p;
  p.s[p.count++] = s;
  if (s >= 1) p.s[p.count++] = s - 1;
  if (s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]) p.s[p.count++] = s - 2;
  return p;
}

void check_labels(const LabelSequence& labels, std::size_t k,
                  std::size_t blank) {
  for (std::size_t id : labels.ids) {
    if (id >= k || id == blank) {
      throw std::invalid_argument("label id " + std::to_string(id) +
                                  " invalid for K = " + std::to_string(k) +
                                  " with blank " + std::to_string(blank));
    }
  }
}

}  // namespace

void LogPosteriorLattice::validate(double tol) const {
  if (logp.rank() != 2 || logp.dim(0) == 0) {
    throw DimensionError("lattice must be non-empty T x K, got " +
                         shape_str(logp.shape()));
  }
  if (blank >= labels()) throw std::invalid_argument("blank id out of range");
  for (std::size_t t = 0; t < frames(); ++t) {
    double acc = kNegInf;
    for (std::size_t k = 0; k < labels(); ++k) acc = lse2(acc, logp.at(t, k));
    if (!(std::abs(acc) <= tol)) {
      throw std::invalid_argument("lattice row " + std::to_string(t) +
                                  " is not normalized (logsumexp " +
                                  std::to_string(acc) + ")");
    }
  }
}

std::size_t min_frames(const LabelSequence& labels) {
  std::size_t n = labels.size();
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (labels.ids[i] == labels.ids[i - 1]) ++n;
  }
  return n;
}

bool feasible(std::size_t frames, const LabelSequence& labels) {
  return frames >= min_frames(labels);
}

Var ctc_loss(Var logp, const LabelSequence& labels, std::size_t blank) {
  const Tensor& lp = logp.value();
  if (lp.rank() != 2 || lp.dim(0) == 0) {
    throw DimensionError("ctc_loss: lattice must be T x K, got " +
                         shape_str(lp.shape()));
  }
  const std::size_t frames = lp.dim(0), k = lp.dim(1);
  if (blank >= k) throw std::invalid_argument("ctc_loss: blank out of range");
  check_labels(labels, k, blank);
  if (!feasible(frames, labels)) {
    throw InfeasibleLabelsError(
        "ctc_loss: " + std::to_string(labels.size()) + " labels need " +
        std::to_string(min_frames(labels)) + " frames, have " +
        std::to_string(frames));
  }
  Tape& tape = *logp.tape();
  const auto ext = extend(labels, blank);
  const std::size_t states = ext.size();

  Var row0 = select(logp, 0);
  Tensor a0({states});
  a0.fill(kNegInf);
  a0[0] = row0.value()[ext[0]];
  if (states > 1) a0[1] = row0.value()[ext[1]];
  const auto ir0 = row0.id();
  Var alpha = tape.record(std::move(a0), {row0},
                          [ir0, ext](Tape& t, std::uint32_t self) {
                            Tensor* gr = t.grad_acc(ir0);
                            const Tensor& g = t.grad(self);
                            (*gr)[ext[0]] += g[0];
                            if (ext.size() > 1) (*gr)[ext[1]] += g[1];
                          });

  for (std::size_t f = 1; f < frames; ++f) {
    Var row = select(logp, f);
    const Tensor& prev = alpha.value();
    const Tensor& rv = row.value();
    Tensor next({states});
    for (std::size_t s = 0; s < states; ++s) {
      const Preds p = predecessors(ext, s, blank);
      double m = kNegInf;
      for (std::size_t i = 0; i < p.count; ++i) m = lse2(m, prev[p.s[i]]);
      next[s] = m == kNegInf ? kNegInf : m + rv[ext[s]];
    }
    const auto ia = alpha.id(), ir = row.id();
    alpha = tape.record(
        std::move(next), {alpha, row},
        [ia, ir, ext, blank](Tape& t, std::uint32_t self) {
          const Tensor& prev = t.value(ia);
          const Tensor& cur = t.value(self);
          const Tensor& g = t.grad(self);
          Tensor* gp = t.grad_acc(ia);
          Tensor* gr = t.grad_acc(ir);
          for (std::size_t s = 0; s < ext.size(); ++s) {
            if (cur[s] == kNegInf || g[s] == 0.0) continue;
            if (gr) (*gr)[ext[s]] += g[s];
            if (!gp) continue;
            const Preds p = predecessors(ext, s, blank);
            double m = kNegInf;
            for (std::size_t i = 0; i < p.count; ++i) m = lse2(m, prev[p.s[i]]);
            for (std::size_t i = 0; i < p.count; ++i) {
              const double a = prev[p.s[i]];
              if (a == kNegInf) continue;
              (*gp)[p.s[i]] += g[s] * std::exp(a - m);
            }
          }
        });
  }

  const Tensor& last = alpha.value();
  double total = last[states - 1];
  if (states > 1) total = lse2(total, last[states - 2]);
  const auto ia = alpha.id();
  return tape.record(Tensor::scalar(-total), {alpha},
                     [ia, states](Tape& t, std::uint32_t self) {
                       const Tensor& a = t.value(ia);
                       Tensor* ga = t.grad_acc(ia);
                       const double total = -t.value(self)[0];
                       const double g = t.grad(self)[0];
                       for (std::size_t s = states >= 2 ? states - 2 : 0;
                            s < states; ++s) {
                         if (a[s] == kNegInf) continue;
                         (*ga)[s] -= g * std::exp(a[s] - total);
                       }
                     });
}

double ctc_loss(const LogPosteriorLattice& lattice,
                const LabelSequence& labels) {
  Tape tape;
  Var lp = tape.constant(lattice.logp);
  return ctc_loss(lp, labels, lattice.blank).value().item();
}

BruteForceResult ctc_loss_bruteforce(const LogPosteriorLattice& lattice,
                                     const LabelSequence& labels) {
  const std::size_t frames = lattice.frames(), k = lattice.labels();
  check_labels(labels, k, lattice.blank);
  double count = 1.0;
  for (std::size_t t = 0; t < frames; ++t) {
    count *= static_cast<double>(k);
    if (count > 1e6) {
      throw std::length_error("ctc_loss_bruteforce: K^T exceeds 1e6");
    }
  }
  std::vector<std::size_t> path(frames, 0);
  long double total = 0.0L;
  for (;;) {
    if (collapse(path, lattice.blank) == labels) {
      long double logp = 0.0L;
      for (std::size_t t = 0; t < frames; ++t) logp += lattice.logp.at(t, path[t]);
      total += std::exp(logp);
    }
    std::size_t t = 0;
    while (t < frames && ++path[t] == k) path[t++] = 0;
    if (t == frames) break;
  }
  if (total <= 0.0L) return {kInfiniteLoss, true};
  return {static_cast<double>(-std::log(total)), false};
}

LabelSequence collapse(std::span<const std::size_t> path, std::size_t blank) {
  LabelSequence out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i > 0 && path[i] == path[i - 1]) continue;
    if (path[i] != blank) out.ids.push_back(path[i]);
  }
  return out;
}

}  // namespace ctcattn
