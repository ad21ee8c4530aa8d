#ifndef CTCATTN_CTC_HPP_
#define CTCATTN_CTC_HPP_

#include <span>
#include <stdexcept>
#include <vector>

#include "ctcattn/tape.hpp"

namespace ctcattn {

// T x K log posteriors, one row per frame.
struct LogPosteriorLattice {
  Tensor logp;
  std::size_t blank = 0;

  std::size_t frames() const { return logp.dim(0); }
  std::size_t labels() const { return logp.dim(1); }
  // Each row must log-sum-exp to 0 within `tol`.
  void validate(double tol = 1e-9) const;
};

struct LabelSequence {
  std::vector<std::size_t> ids;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }
  bool operator==(const LabelSequence&) const = default;
};

// The label sequence cannot be aligned to the available frames.
class InfeasibleLabelsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// |ids| plus one blank for every adjacent equal pair.
std::size_t min_frames(const LabelSequence& labels);
bool feasible(std::size_t frames, const LabelSequence& labels);

// -log p(labels | x): log-space forward recursion over the blank-interleaved
// state sequence, one tape node per frame, so gradients w.r.t. logp flow
// back through the recursion itself.
Var ctc_loss(Var logp, const LabelSequence& labels, std::size_t blank);
double ctc_loss(const LogPosteriorLattice& lattice,
                const LabelSequence& labels);

inline constexpr double kInfiniteLoss = 1e30;

struct BruteForceResult {
  double nll = 0.0;              // kInfiniteLoss when probability is 0
  bool zero_probability = false;
};

// Sums prod_t p(pi_t) over all K^T paths collapsing to `labels`.
// Throws std::length_error when K^T > 1e6.
BruteForceResult ctc_loss_bruteforce(const LogPosteriorLattice& lattice,
                                     const LabelSequence& labels);

// Merge consecutive duplicates, then drop blanks.
LabelSequence collapse(std::span<const std::size_t> path, std::size_t blank);

}  // namespace ctcattn

#endif  // CTCATTN_CTC_HPP_
