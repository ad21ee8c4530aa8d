#include "ctcattn/attention.hpp"

#include <cctype>
#include <cmath>
#include <string>

namespace ctcattn {

namespace {

struct ModeInfo {
  AttnMode mode;
  std::string_view name;
  std::string_view label;
};

constexpr std::array<ModeInfo, 6> kModeInfo = {{
    {AttnMode::kVanilla, "vanilla", "Vanilla CTC"},
    {AttnMode::kTc, "tc", "TC"},
    {AttnMode::kCa, "ca", "+CA"},
    {AttnMode::kHa, "ha", "+HA"},
    {AttnMode::kLm, "lm", "+LM"},
    {AttnMode::kComa, "coma", "+COMA"},
}};

const ModeInfo& info(AttnMode mode) {
  for (const auto& i : kModeInfo) {
    if (i.mode == mode) return i;
  }
  throw std::invalid_argument("unknown attention mode");
}

Var uniform_weights(Tape& tape, std::size_t window) {
  Tensor t({window});
  t.fill(1.0 / static_cast<double>(window));
  return tape.constant(std::move(t));
}

// tanh(U s + W g + [V f] + b) for every slot of the window: [C x n].
Var window_scores(const HeadContext& ctx, std::size_t u, Var state_vec,
                  Var alpha_prev) {
  const HeadParams& p = ctx.params();
  Var pre = add_row(ctx.projected_window(u), linear(state_vec, p.u, p.b));
  if (ctx.config().features.location) {
    pre = add(pre, linear(location_features(alpha_prev, p), p.v_loc));
  }
  return tanh(pre);
}

Var slot_preactivation(Var state, Var alpha_prev, Var g_t, std::size_t slot,
                       const HeadParams& p) {
  Var pre = add(linear(state, p.u, p.b), linear(g_t, p.w));
  if (p.f_loc.valid() && alpha_prev.valid()) {
    Var f = select(location_features(alpha_prev, p), slot);
    pre = add(pre, linear(f, p.v_loc));
  }
  return pre;
}

}  // namespace

std::string_view mode_name(AttnMode mode) { return info(mode).name; }
std::string_view mode_label(AttnMode mode) { return info(mode).label; }

AttnMode parse_mode(std::string_view text) {
  std::string s(text);
  for (char& ch : s) ch = static_cast<char>(std::tolower(ch));
  if (s.rfind("tc+", 0) == 0) s = s.substr(3);
  if (!s.empty() && s[0] == '+') s = s.substr(1);
  for (const auto& i : kModeInfo) {
    if (s == i.name) return i.mode;
  }
  throw std::invalid_argument("unknown attention mode '" + std::string(text) +
                              "' (vanilla, tc, ca, ha, lm, coma)");
}

AttnFeatures AttnFeatures::for_mode(AttnMode mode) {
  const int stage = static_cast<int>(mode);
  AttnFeatures f;
  f.time_conv = stage >= static_cast<int>(AttnMode::kTc);
  f.content = stage >= static_cast<int>(AttnMode::kCa);
  f.location = stage >= static_cast<int>(AttnMode::kHa);
  f.implicit_lm = stage >= static_cast<int>(AttnMode::kLm);
  f.component = stage >= static_cast<int>(AttnMode::kComa);
  return f;
}

AttnConfig AttnConfig::make(AttnMode mode, std::size_t n, std::size_t labels,
                            std::size_t tau) {
  AttnConfig cfg;
  cfg.n = n;
  cfg.labels = labels;
  cfg.tau = tau;
  cfg.set_mode(mode);
  return cfg;
}

std::optional<AttnMode> AttnConfig::mode() const {
  for (AttnMode m : kAllModes) {
    if (AttnFeatures::for_mode(m) == features) return m;
  }
  return std::nullopt;
}

void AttnConfig::validate() const {
  if (n == 0 || labels < 2) {
    throw std::invalid_argument("attention config: need n >= 1 and K >= 2");
  }
  const auto& f = features;
  if ((f.content && !f.time_conv) ||
      ((f.location || f.implicit_lm || f.component) && !f.content)) {
    throw std::invalid_argument(
        "attention config: attention features require tc and content");
  }
  if (f.location && (filters == 0 || filter_width == 0)) {
    throw std::invalid_argument("attention config: empty location filters");
  }
  if (f.location && filter_width > window()) {
    throw std::invalid_argument(
        "attention config: location filter width " +
        std::to_string(filter_width) + " exceeds window " +
        std::to_string(window()));
  }
  if (gamma && !(*gamma > 0.0)) {
    throw std::invalid_argument("attention config: gamma must be positive");
  }
}

void add_head_params(ParamSet& params, const AttnConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t n = cfg.n, k = cfg.labels, c = cfg.window();
  const auto& f = cfg.features;
  if (f.time_conv) params.add("head.tc.W", uniform_init({c, n, n}, c * n, rng));
  if (f.content) {
    params.add("head.att.U", uniform_init({n, cfg.state_dim()},
                                          cfg.state_dim(), rng));
    params.add("head.att.W", uniform_init({n, n}, n, rng));
    params.add("head.att.b", uniform_init({n}, n, rng));
    if (!f.component) params.add("head.att.v", uniform_init({n}, n, rng));
  }
  if (f.location) {
    params.add("head.att.V", uniform_init({n, cfg.filters}, cfg.filters, rng));
    params.add("head.att.F", uniform_init({cfg.filters, cfg.filter_width},
                                          cfg.filter_width, rng));
  }
  if (f.implicit_lm) add_lstm_params(params, "head.lm", k + n, n, rng);
  params.add("head.soft.W", uniform_init({k, n}, n, rng));
  params.add("head.soft.b", uniform_init({k}, n, rng));
}

HeadParams HeadParams::bind(const Bindings& p, const AttnConfig& cfg) {
  HeadParams hp;
  const auto& f = cfg.features;
  hp.w_soft = p("head.soft.W");
  hp.b_soft = p("head.soft.b");
  if (f.time_conv) hp.w_tc = p("head.tc.W");
  if (f.content) {
    hp.u = p("head.att.U");
    hp.w = p("head.att.W");
    hp.b = p("head.att.b");
    if (!f.component) hp.v = p("head.att.v");
  }
  if (f.location) {
    hp.v_loc = p("head.att.V");
    hp.f_loc = p("head.att.F");
  }
  if (f.implicit_lm) hp.lm = LstmParams::bind(p, "head.lm");
  return hp;
}

AttentionState initial_state(Tape& tape, const AttnConfig& cfg) {
  const std::size_t c = cfg.window();
  AttentionState s;
  if (cfg.features.component) {
    Tensor a({c, cfg.n});
    a.fill(1.0 / static_cast<double>(c));
    s.alpha_prev = tape.constant(std::move(a));
  } else {
    s.alpha_prev = uniform_weights(tape, c);
  }
  s.z_prev = tape.constant(Tensor({cfg.labels}));
  s.lm = zero_lstm_state(tape, cfg.n);
  s.c_prev = tape.constant(Tensor({cfg.n}));
  return s;
}

std::vector<Var> tc_filter(Var h, Var w_tc, std::size_t u, std::size_t tau) {
  const std::size_t frames = h.value().dim(0);
  const std::size_t n = h.value().dim(1);
  const std::size_t c = 2 * tau + 1;
  if (u >= frames) {
    throw DimensionError("tc_filter: frame " + std::to_string(u) +
                         " outside sequence of " + std::to_string(frames));
  }
  if (w_tc.shape() != Shape{c, n, n}) {
    throw DimensionError("tc_filter: filter " + shape_str(w_tc.shape()) +
                         " does not fit h " + shape_str(h.shape()));
  }
  std::vector<Var> g;
  g.reserve(c);
  for (std::size_t j = 0; j < c; ++j) {
    const long t = static_cast<long>(u) - static_cast<long>(tau) +
                   static_cast<long>(j);
    if (t < 0 || t >= static_cast<long>(frames)) {
      g.push_back(h.tape()->constant(Tensor({n})));
      continue;
    }
    // Offset u - t = tau - j lives at slice (tau - j) + tau.
    g.push_back(matmul(select(w_tc, c - 1 - j),
                       select(h, static_cast<std::size_t>(t))));
  }
  return g;
}

Var annotate(Var alpha, Var g, double gamma) {
  const Tensor& a = alpha.value();
  if (g.value().rank() != 2) {
    throw DimensionError("annotate: g must be [C x n], got " +
                         shape_str(g.shape()));
  }
  const std::size_t c = g.value().dim(0), n = g.value().dim(1);
  constexpr double kTol = 1e-6;
  if (a.rank() == 1) {
    if (a.dim(0) != c) {
      throw DimensionError("annotate: alpha " + shape_str(a.shape()) +
                           " vs g " + shape_str(g.shape()));
    }
    double s = 0.0;
    for (double v : a.data()) s += v;
    if (std::abs(s - 1.0) > kTol) {
      throw InvariantError("annotate: attention weights sum to " +
                           std::to_string(s));
    }
    return scale(reshape(matmul(reshape(alpha, {1, c}), g), {n}), gamma);
  }
  if (a.shape() != g.shape()) {
    throw DimensionError("annotate: alpha " + shape_str(a.shape()) + " vs g " +
                         shape_str(g.shape()));
  }
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t t = 0; t < c; ++t) s += a.at(t, j);
    if (std::abs(s - 1.0) > kTol) {
      throw InvariantError("annotate: component " + std::to_string(j) +
                           " weights sum to " + std::to_string(s));
    }
  }
  return scale(colsum(mul(alpha, g)), gamma);
}

Var location_features(Var alpha_prev, const HeadParams& p) {
  Var a = alpha_prev;
  if (a.value().rank() == 2) {
    const std::size_t n = a.value().dim(1);
    Tensor ones({n});
    ones.fill(1.0);
    a = scale(matmul(a, a.tape()->constant(std::move(ones))),
              1.0 / static_cast<double>(n));
  }
  // Slot j of the current window is slot j + 1 of the previous one.
  return location_conv(a, p.f_loc, 1);
}

Var score_content(Var state, Var g_t, const HeadParams& p) {
  return dot(p.v, tanh(slot_preactivation(state, Var{}, g_t, 0, p)));
}

Var score_hybrid(Var state, Var alpha_prev, Var g_t, std::size_t slot,
                 const HeadParams& p) {
  if (!p.f_loc.valid()) {
    throw std::invalid_argument("score_hybrid: location parameters not bound");
  }
  return dot(p.v, tanh(slot_preactivation(state, alpha_prev, g_t, slot, p)));
}

Var coma_score(Var state, Var alpha_prev, Var g_t, std::size_t slot,
               const HeadParams& p) {
  return tanh(slot_preactivation(state, alpha_prev, g_t, slot, p));
}

Var normalize_scores(Var e) { return softmax(e); }

Var coma_normalize(Var e) { return softmax(e, 0); }

LstmState lm_step(Var z_prev, Var c_prev, const LstmState& state,
                  const LstmParams& p) {
  const Var parts[] = {z_prev, c_prev};
  return lstm_cell(concat(parts), state, p);
}

HeadContext::HeadContext(Var h, const AttnConfig& cfg,
                         const HeadParams& params)
    : cfg_(cfg), params_(params), h_(h), frames_(h.value().dim(0)) {
  cfg_.validate();
  if (h.value().rank() != 2 || h.value().dim(1) != cfg_.n) {
    throw DimensionError("head: hidden features " + shape_str(h.shape()) +
                         " do not have n = " + std::to_string(cfg_.n));
  }
  if (!cfg_.features.time_conv) return;
  const std::size_t c = cfg_.window();
  const long tau = static_cast<long>(cfg_.tau);
  slots_.reserve(c);
  for (std::size_t j = 0; j < c; ++j) {
    slots_.push_back(linear(shift_rows(h, static_cast<long>(j) - tau),
                            select(params_.w_tc, c - 1 - j)));
  }
  if (!cfg_.features.content) return;
  std::vector<Var> wg;
  wg.reserve(c);
  for (const Var& s : slots_) wg.push_back(linear(s, params_.w));
  all_g_ = hconcat(slots_);
  all_wg_ = hconcat(wg);
}

Var HeadContext::window(std::size_t u) const {
  const std::size_t c = cfg_.window();
  if (all_g_.valid()) return reshape(select(all_g_, u), {c, cfg_.n});
  std::vector<Var> rows;
  rows.reserve(c);
  for (const Var& s : slots_) rows.push_back(select(s, u));
  return stack(rows);
}

Var HeadContext::projected_window(std::size_t u) const {
  return reshape(select(all_wg_, u), {cfg_.window(), cfg_.n});
}

StepOutput head_step(const HeadContext& ctx, std::size_t u,
                     const AttentionState& state) {
  const AttnConfig& cfg = ctx.config();
  const HeadParams& p = ctx.params();
  const auto& f = cfg.features;
  if (u >= ctx.frames()) {
    throw DimensionError("head_step: frame " + std::to_string(u) +
                         " outside sequence of " +
                         std::to_string(ctx.frames()));
  }
  Tape& tape = *ctx.hidden().tape();
  StepOutput out;
  out.next = state;
  if (!f.time_conv) {
    out.c = select(ctx.hidden(), u);
    out.alpha = state.alpha_prev;
  } else {
    Var g = ctx.window(u);
    if (!f.content) {
      out.alpha = uniform_weights(tape, cfg.window());
    } else {
      Var content = state.z_prev;
      if (f.implicit_lm) {
        out.next.lm = lm_step(state.z_prev, state.c_prev, state.lm, *p.lm);
        content = out.next.lm.h;
      }
      Var e = window_scores(ctx, u, content, state.alpha_prev);
      out.alpha = f.component ? coma_normalize(e)
                              : normalize_scores(matmul(e, p.v));
    }
    out.c = annotate(out.alpha, g, cfg.scale());
  }
  out.z = linear(out.c, p.w_soft, p.b_soft);
  out.y = softmax(out.z);
  out.next.alpha_prev = out.alpha;
  out.next.z_prev = out.z;
  out.next.c_prev = out.c;
  return out;
}

Var run_head(Var h, const AttnConfig& cfg, const HeadParams& params) {
  if (!cfg.features.time_conv) {
    cfg.validate();
    return linear(h, params.w_soft, params.b_soft);
  }
  HeadContext ctx(h, cfg, params);
  if (!cfg.features.content) {
    Var acc = ctx.slot_features().front();
    for (std::size_t j = 1; j < ctx.slot_features().size(); ++j) {
      acc = add(acc, ctx.slot_features()[j]);
    }
    const double factor = cfg.scale() / static_cast<double>(cfg.window());
    if (factor != 1.0) acc = scale(acc, factor);
    return linear(acc, params.w_soft, params.b_soft);
  }
  AttentionState state = initial_state(*h.tape(), cfg);
  std::vector<Var> logits;
  logits.reserve(ctx.frames());
  for (std::size_t u = 0; u < ctx.frames(); ++u) {
    StepOutput step = head_step(ctx, u, state);
    logits.push_back(step.z);
    state = std::move(step.next);
  }
  return stack(logits);
}

}  // namespace ctcattn
