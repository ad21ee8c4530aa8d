#include "ctcattn/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace ctcattn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("train: momentum must be in [0, 1)");
  if (!(decay > 0.0 && decay <= 1.0)) throw std::invalid_argument("train: decay must be in (0, 1]");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (eval_every < 1) throw std::invalid_argument("train: eval_every must be >= 1");
  if (clip_norm < 0.0) throw std::invalid_argument("train: clip_norm must be >= 0");
}

void to_json(Json& j, const TrainConfig& c) {
  j = Json{{"learning_rate", c.learning_rate},
           {"momentum", c.momentum},
           {"decay", c.decay},
           {"patience", c.patience},
           {"min_learning_rate", c.min_learning_rate},
           {"batch_size", c.batch_size},
           {"epochs", c.epochs},
           {"clip_norm", c.clip_norm},
           {"eval_every", c.eval_every},
           {"checkpoint", c.checkpoint},
           {"seed", c.seed}};
}

void from_json(const Json& j, TrainConfig& c) {
  auto opt = [&](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  opt("learning_rate", c.learning_rate);
  opt("momentum", c.momentum);
  opt("decay", c.decay);
  opt("patience", c.patience);
  opt("min_learning_rate", c.min_learning_rate);
  opt("batch_size", c.batch_size);
  opt("epochs", c.epochs);
  opt("clip_norm", c.clip_norm);
  opt("eval_every", c.eval_every);
  opt("checkpoint", c.checkpoint);
  opt("seed", c.seed);
}

std::vector<Example> prepare_examples(const Dataset& data,
                                      const ModelConfig& cfg,
                                      std::ostream* log) {
  std::vector<Example> out;
  out.reserve(data.size());
  for (const Utterance& u : data) {
    if (u.features.dim() != cfg.encoder.input_dim) {
      throw DimensionError("utterance " + u.id + ": feature dim " +
                           std::to_string(u.features.dim()) + ", expected " +
                           std::to_string(cfg.encoder.input_dim));
    }
    LabelSequence labels = cfg.charset.encode(u.text);
    const std::size_t frames = cfg.encoder.output_frames(u.features.length());
    if (!feasible(frames, labels)) {
      if (log) {
        *log << "warning: skipping " << u.id << ": " << labels.ids.size()
             << " labels need " << min_frames(labels) << " frames, have "
             << frames << '\n';
      }
      continue;
    }
    out.push_back(
        {u.id, u.features, std::move(labels), Transcript::from_text(u.text)});
  }
  return out;
}

double utterance_loss(const Model& model, const Example& ex, ParamSet* grad) {
  Tape tape;
  Bindings p(tape, model.params(), grad != nullptr);
  Var loss = ctc_loss(model.log_posteriors(p, ex.features), ex.labels,
                      model.config().charset.blank_id());
  if (grad) {
    tape.backward(loss);
    p.gradients(*grad);
  }
  return loss.value().item();
}

namespace {

void rethrow_first(const std::vector<std::exception_ptr>& errors) {
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Per-utterance losses; grads[i] filled when `grads` is non-null.
std::vector<double> batch_losses(const Model& model,
                                 std::span<const Example> batch,
                                 std::vector<ParamSet>* grads) {
  const auto n = static_cast<std::ptrdiff_t>(batch.size());
  std::vector<double> losses(batch.size());
  if (grads) {
    if (grads->size() < batch.size()) {
      grads->resize(batch.size(), model.params().zeros_like());
    }
  }
  // Exceptions may not leave a parallel region; the first by batch index is
  // rethrown afterwards.
  std::vector<std::exception_ptr> errors(batch.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      losses[i] = utterance_loss(model, batch[i], grads ? &(*grads)[i] : nullptr);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  rethrow_first(errors);
  return losses;
}

double batch_gradient_impl(const Model& model, std::span<const Example> batch,
                           ParamSet& grad, std::vector<ParamSet>& scratch,
                           std::vector<double>* losses_out) {
  auto losses = batch_losses(model, batch, &scratch);
  grad.scale(0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    grad.axpy(1.0, scratch[i]);
    total += losses[i];
  }
  if (losses_out) *losses_out = std::move(losses);
  return total;
}

}  // namespace

double batch_gradient(const Model& model, std::span<const Example> batch,
                      ParamSet& grad) {
  std::vector<ParamSet> scratch;
  return batch_gradient_impl(model, batch, grad, scratch, nullptr);
}

double mean_loss(const Model& model, std::span<const Example> data) {
  if (data.empty()) throw std::invalid_argument("mean_loss: empty data");
  const auto losses = batch_losses(model, data, nullptr);
  return std::accumulate(losses.begin(), losses.end(), 0.0) /
         static_cast<double>(data.size());
}

EvalResult evaluate(const Model& model, std::span<const Example> data) {
  const auto n = static_cast<std::ptrdiff_t>(data.size());
  std::vector<Transcript> hyps(data.size());
  std::vector<std::exception_ptr> errors(data.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      hyps[i] = model.transcribe(data[i].features);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  rethrow_first(errors);
  EvalResult r;
  for (std::size_t i = 0; i < data.size(); ++i) {
    r.chars += char_errors(data[i].reference, hyps[i]);
    r.words += word_errors(data[i].reference, hyps[i]);
  }
  return r;
}

std::string format_metrics(const EpochMetrics& m) {
  char buf[128];
  auto field = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char b[32];
    std::snprintf(b, sizeof b, "%.6f", *v);
    return std::string(b);
  };
  std::snprintf(buf, sizeof buf, "%zu\t%.6f\t", m.epoch, m.train_loss);
  return buf + field(m.dev_cer) + '\t' + field(m.dev_wer);
}

TrainResult train(Model& model, std::span<const Example> train_set,
                  std::span<const Example> dev_set, const TrainConfig& tc,
                  std::ostream* metrics, std::ostream* log) {
  tc.validate();
  if (train_set.empty()) throw std::invalid_argument("train: no training data");

  // Length buckets: sort by frame count, then chunk.
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return train_set[a].features.length() < train_set[b].features.length();
  });
  std::vector<std::vector<Example>> batches;
  for (std::size_t i = 0; i < order.size(); i += tc.batch_size) {
    std::vector<Example> b;
    for (std::size_t j = i; j < std::min(order.size(), i + tc.batch_size); ++j) {
      b.push_back(train_set[order[j]]);
    }
    batches.push_back(std::move(b));
  }
  std::vector<std::size_t> batch_order(batches.size());
  std::iota(batch_order.begin(), batch_order.end(), std::size_t{0});

  Rng rng(tc.seed);
  ParamSet& params = model.params();
  ParamSet grad = params.zeros_like();
  ParamSet velocity = params.zeros_like();
  std::vector<ParamSet> scratch;
  std::vector<double> losses;

  TrainResult result;
  result.initial_loss = mean_loss(model, train_set);
  if (log) *log << "initial train loss " << result.initial_loss << '\n';

  ParamSet best = params;
  double best_cer = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  double lr = tc.learning_rate;

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::shuffle(batch_order.begin(), batch_order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t bi : batch_order) {
      const auto& batch = batches[bi];
      const double total =
          batch_gradient_impl(model, batch, grad, scratch, &losses);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (!std::isfinite(losses[i])) {
          std::ostringstream msg;
          msg << "training diverged: epoch " << epoch << ", utterance "
              << batch[i].id << ", loss " << losses[i] << ", lr " << lr;
          throw DivergenceError(msg.str());
        }
      }
      epoch_loss += total;
      grad.scale(1.0 / static_cast<double>(batch.size()));
      const double norm = std::sqrt(grad.squared_norm());
      if (!std::isfinite(norm)) {
        throw DivergenceError("training diverged: non-finite gradient in epoch " +
                              std::to_string(epoch));
      }
      if (tc.clip_norm > 0.0 && norm > tc.clip_norm) grad.scale(tc.clip_norm / norm);
      velocity.scale(tc.momentum);
      velocity.axpy(-lr, grad);
      params.axpy(1.0, velocity);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = epoch_loss / static_cast<double>(train_set.size());
    m.learning_rate = lr;
    const bool eval_now = epoch % tc.eval_every == 0 || epoch == tc.epochs;
    if (eval_now && !dev_set.empty()) {
      const EvalResult r = evaluate(model, dev_set);
      m.dev_cer = r.cer();
      m.dev_wer = r.wer();
      if (*m.dev_cer < best_cer) {
        best_cer = *m.dev_cer;
        best = params;
        result.best_epoch = epoch;
        stale = 0;
        if (!tc.checkpoint.empty()) save_checkpoint(tc.checkpoint, model);
      } else if (++stale >= tc.patience) {
        lr = std::max(lr * tc.decay, tc.min_learning_rate);
        stale = 0;
      }
    }
    result.history.push_back(m);
    if (metrics) *metrics << format_metrics(m) << std::endl;
    if (log) {
      *log << "epoch " << epoch << " loss " << m.train_loss;
      if (m.dev_cer) *log << " dev CER " << *m.dev_cer << " WER " << *m.dev_wer;
      *log << " lr " << lr << std::endl;
    }
  }

  if (dev_set.empty()) {
    result.best_epoch = tc.epochs;
    if (!tc.checkpoint.empty()) save_checkpoint(tc.checkpoint, model);
  } else {
    params = std::move(best);
    result.best_dev_cer = best_cer;
  }
  return result;
}

std::vector<AblationRow> ablate(const ModelConfig& base, const Dataset& train_data,
                                const Dataset& dev_data, const Dataset& test_data,
                                const TrainConfig& tc,
                                std::span<const AttnMode> modes,
                                std::ostream* log) {
  std::vector<AblationRow> rows;
  for (AttnMode mode : modes) {
    ModelConfig cfg = base;
    cfg.attn.set_mode(mode);
    cfg.validate();
    const auto tr = prepare_examples(train_data, cfg, log);
    const auto dv = prepare_examples(dev_data, cfg, log);
    const auto te = prepare_examples(test_data, cfg, log);
    if (log) *log << "== " << mode_label(mode) << '\n';
    Model model(cfg, tc.seed);
    TrainConfig run = tc;
    run.checkpoint.clear();
    train(model, tr, dv, run, nullptr, log);
    const EvalResult r = evaluate(model, te);
    rows.push_back({mode, r.cer(), r.wer()});
  }
  return rows;
}

double relative_improvement(double baseline, double value) {
  if (baseline == 0.0) {
    return value == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  return (baseline - value) / baseline * 100.0;
}

std::string format_ablation_table(std::span<const AblationRow> rows) {
  const AblationRow* base = nullptr;
  for (const auto& r : rows) {
    if (r.mode == AttnMode::kVanilla) base = &r;
  }
  auto cell = [&](double v, double b) {
    char buf[48];
    const double rel = base ? relative_improvement(b, v) : 0.0;
    if (std::isinf(rel)) {
      std::snprintf(buf, sizeof buf, "%6.2f (-inf)", v * 100.0);
    } else {
      std::snprintf(buf, sizeof buf, "%6.2f (%.2f)", v * 100.0, rel);
    }
    return std::string(buf);
  };
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s  %-18s  %-18s\n", "Model", "CER %",
                "WER %");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-12s  %-18s  %-18s\n",
                  std::string(mode_label(r.mode)).c_str(),
                  cell(r.cer, base ? base->cer : 0.0).c_str(),
                  cell(r.wer, base ? base->wer : 0.0).c_str());
    os << line;
  }
  return os.str();
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

GradCheckReport grad_check(const ModelConfig& cfg, std::uint64_t seed,
                           const GradCheckOptions& opt) {
  Model model(cfg, seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor frames({opt.frames, cfg.encoder.input_dim});
  for (double& v : frames.data()) v = normal(rng);

  Example ex;
  ex.id = "grad-check";
  ex.features = FeatureSequence{std::move(frames)};
  std::uniform_int_distribution<std::size_t> pick(0, cfg.charset.size() - 2);
  for (std::size_t i = 0; i < opt.label_count; ++i) {
    std::size_t k = pick(rng);
    if (k >= cfg.charset.blank_id()) ++k;
    ex.labels.ids.push_back(k);
  }
  if (!feasible(model.output_frames(opt.frames), ex.labels)) {
    throw InfeasibleLabelsError("grad_check: labels do not fit the frames");
  }

  ParamSet analytic = model.params().zeros_like();
  GradCheckReport report;
  report.loss = utterance_loss(model, ex, &analytic);

  ParamSet& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    GradCheckGroup g{params.name(i)};
    auto values = params.value(i).data();
    const auto grads = analytic.value(i).data();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      auto at = [&](double offset) {
        values[j] = saved + offset;
        return utterance_loss(model, ex);
      };
      const double h = opt.epsilon;
      const double numeric =
          (8.0 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12.0 * h);
      values[j] = saved;
      g.max_abs_error = std::max(g.max_abs_error, std::abs(numeric - grads[j]));
      g.max_rel_error =
          std::max(g.max_rel_error, relative_error(grads[j], numeric, opt.floor));
      ++g.checked;
    }
    report.max_rel_error = std::max(report.max_rel_error, g.max_rel_error);
    report.groups.push_back(std::move(g));
  }
  report.passed = report.max_rel_error < opt.tolerance;
  return report;
}

std::string format_grad_check(const GradCheckReport& report) {
  std::ostringstream os;
  char line[160];
  for (const auto& g : report.groups) {
    std::snprintf(line, sizeof line, "%-22s n=%-6zu max_rel=%.3e max_abs=%.3e\n",
                  g.name.c_str(), g.checked, g.max_rel_error, g.max_abs_error);
    os << line;
  }
  std::snprintf(line, sizeof line, "loss=%.6f max_rel=%.3e %s\n", report.loss,
                report.max_rel_error, report.passed ? "PASS" : "FAIL");
  os << line;
  return os.str();
}

}  // namespace ctcattn
