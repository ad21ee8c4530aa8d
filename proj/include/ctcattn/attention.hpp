#ifndef CTCATTN_ATTENTION_HPP_
#define CTCATTN_ATTENTION_HPP_

#include <array>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "ctcattn/lstm.hpp"

// Output head mapping encoder features h (T x n) to per-frame logits z_u.
//
// The head looks at a window of C = 2*tau + 1 frames around each output
// frame u. Each frame in the window is first filtered by its own n x n slice
// of a rank-3 time-convolution tensor:
//
//   g_{u,t} = W'_{u-t} h_t,          t in [u - tau, u + tau]
//   c_u     = gamma * sum_t alpha_{u,t} g_{u,t}
//   z_u     = W_soft c_u + b_soft,   y_u = softmax(z_u)
//
// With alpha uniform (1/C) and gamma = C this is a plain time convolution.
// Attention replaces the uniform weights with
//
//   e_{u,t} = v^T tanh(U s + W g_{u,t} [+ V f_{u,t}] + b)
//   alpha_u = softmax_t(e_u)
//
// where s is the previous logit vector z_{u-1} or, with the implicit LM, the
// hidden state of an LSTM fed [z_{u-1}; c_{u-1}]. f_{u,t} are location
// features from convolving alpha_{u-1}. Component attention drops v and
// normalizes each of the n components over the window separately, weighting
// g by Hadamard product.
namespace ctcattn {

enum class AttnMode { kVanilla, kTc, kCa, kHa, kLm, kComa };

inline constexpr std::array<AttnMode, 6> kAllModes = {
    AttnMode::kVanilla, AttnMode::kTc, AttnMode::kCa,
    AttnMode::kHa,      AttnMode::kLm, AttnMode::kComa};

// Short CLI name: vanilla, tc, ca, ha, lm, coma.
std::string_view mode_name(AttnMode mode);
// Table label: "Vanilla CTC", "TC", "+CA", ...
std::string_view mode_label(AttnMode mode);
// Accepts the short names, optionally with a leading '+' or "tc+" prefix.
AttnMode parse_mode(std::string_view text);

struct AttnFeatures {
  bool time_conv = false;
  bool content = false;
  bool location = false;
  bool implicit_lm = false;
  bool component = false;

  // Ablation stages are cumulative: coma implies lm, ha, ca and tc.
  static AttnFeatures for_mode(AttnMode mode);
  bool operator==(const AttnFeatures&) const = default;
};

struct AttnConfig {
  std::size_t tau = 2;
  std::size_t n = 64;
  std::size_t labels = 9;  // K, blank included
  std::size_t filters = 4;
  std::size_t filter_width = 3;
  std::optional<double> gamma;  // defaults to C
  AttnFeatures features;

  static AttnConfig make(AttnMode mode, std::size_t n, std::size_t labels,
                         std::size_t tau = 2);
  void set_mode(AttnMode mode) { features = AttnFeatures::for_mode(mode); }
  // The preset whose features match, if any.
  std::optional<AttnMode> mode() const;

  std::size_t window() const { return 2 * tau + 1; }
  double scale() const {
    return gamma.value_or(static_cast<double>(window()));
  }
  // Width of the content vector fed to U.
  std::size_t state_dim() const { return features.implicit_lm ? n : labels; }
  void validate() const;
};

// Raised when a normalized quantity is found unnormalized.
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Registers head parameters for the enabled features:
//   head.soft.W [K x n], head.soft.b [K]
//   head.tc.W [C x n x n]   slice k + tau holds W'_k, applied to h_{u-k}
//   head.att.U [n x state_dim], head.att.W [n x n], head.att.b [n]
//   head.att.v [n]          scalar attention only
//   head.att.V [n x filters], head.att.F [filters x filter_width]
//   head.lm.{Wx,Wh,b}       LSTM with K + n inputs and n cells
void add_head_params(ParamSet& params, const AttnConfig& cfg, Rng& rng);

struct HeadParams {
  Var w_soft, b_soft;
  Var w_tc;
  Var u, w, b, v;
  Var v_loc, f_loc;
  std::optional<LstmParams> lm;

  static HeadParams bind(const Bindings& p, const AttnConfig& cfg);
};

// Per-step carry between output frames.
struct AttentionState {
  Var alpha_prev;  // [C], or [C x n] under component attention
  Var z_prev;      // [K]
  LstmState lm;    // [n] each
  Var c_prev;      // [n]
};

// alpha uniform 1/C, z, c and LM state zero.
AttentionState initial_state(Tape& tape, const AttnConfig& cfg);

// Filtered window around u, one n-vector per slot t = u - tau + j; frames
// outside [0, T) contribute zero vectors.
std::vector<Var> tc_filter(Var h, Var w_tc, std::size_t u, std::size_t tau);

// gamma * sum_t alpha_t g_t for alpha [C], or the Hadamard form for alpha
// [C x n]. g is [C x n]. Throws InvariantError when alpha is off by > 1e-6.
Var annotate(Var alpha, Var g, double gamma);

// Location features for the current window from alpha_{u-1} (mean over
// components if 2-D), aligned by absolute time: [C x filters].
Var location_features(Var alpha_prev, const HeadParams& p);

// Single-slot scores. `state` is z_{u-1} (K) or the LM state (n).
Var score_content(Var state, Var g_t, const HeadParams& p);
Var score_hybrid(Var state, Var alpha_prev, Var g_t, std::size_t slot,
                 const HeadParams& p);
// Component score vector in (-1, 1)^n; hybrid when location params exist.
Var coma_score(Var state, Var alpha_prev, Var g_t, std::size_t slot,
               const HeadParams& p);

Var normalize_scores(Var e);  // softmax over the window
Var coma_normalize(Var e);    // [C x n], softmax over t for each component

// One implicit-LM step on x = [z_prev; c_prev]; result.h is z^LM.
LstmState lm_step(Var z_prev, Var c_prev, const LstmState& state,
                  const LstmParams& p);

// Precomputed per-sequence quantities shared by all head steps.
class HeadContext {
 public:
  HeadContext(Var h, const AttnConfig& cfg, const HeadParams& params);

  const AttnConfig& config() const { return cfg_; }
  const HeadParams& params() const { return params_; }
  Var hidden() const { return h_; }
  std::size_t frames() const { return frames_; }

  // [C x n] filtered window g_{u, u-tau..u+tau}.
  Var window(std::size_t u) const;
  // [C x n] W g for the same window.
  Var projected_window(std::size_t u) const;
  // Per-slot filtered sequences, slot j row u = g_{u, u-tau+j}: [T x n] each.
  const std::vector<Var>& slot_features() const { return slots_; }

 private:
  AttnConfig cfg_;
  HeadParams params_;
  Var h_;
  std::size_t frames_;
  std::vector<Var> slots_;
  Var all_g_;   // [T x C*n]
  Var all_wg_;  // [T x C*n]
};

struct StepOutput {
  Var z;      // [K] logits
  Var y;      // [K] posteriors
  Var alpha;  // weights used at this step
  Var c;      // context vector (h_u in vanilla mode)
  AttentionState next;
};

StepOutput head_step(const HeadContext& ctx, std::size_t u,
                     const AttentionState& state);

// All frames; returns logits [T x K]. Vanilla and tc run batched.
Var run_head(Var h, const AttnConfig& cfg, const HeadParams& params);

}  // namespace ctcattn

#endif  // CTCATTN_ATTENTION_HPP_
