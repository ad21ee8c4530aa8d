#ifndef CTCATTN_TRAIN_HPP_
#define CTCATTN_TRAIN_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctcattn/model.hpp"
#include "ctcattn/synth.hpp"

namespace ctcattn {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double decay = 0.5;            // learning-rate factor on a dev plateau
  std::size_t patience = 2;      // evaluations without improvement
  double min_learning_rate = 1e-5;
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  double clip_norm = 5.0;        // global norm; 0 disables clipping
  std::size_t eval_every = 1;    // epochs between dev evaluations
  std::string checkpoint;        // best-dev checkpoint path, empty = none
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(Json& j, const TrainConfig& c);
void from_json(const Json& j, TrainConfig& c);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Example {
  std::string id;
  FeatureSequence features;
  LabelSequence labels;
  Transcript reference;
};

// Encodes transcripts and drops utterances whose label sequence cannot fit
// in the encoder's output frames, writing one warning line per drop to `log`.
std::vector<Example> prepare_examples(const Dataset& data,
                                      const ModelConfig& cfg,
                                      std::ostream* log = nullptr);

// Per-utterance CTC loss. When `grad` is given it receives d(loss)/d(params)
// (overwritten, same layout as model.params()).
double utterance_loss(const Model& model, const Example& ex,
                      ParamSet* grad = nullptr);

// Sum of per-utterance losses and gradients. Utterances run on parallel
// workers, each with its own tape; partial gradients are summed in batch
// order so the result does not depend on the thread count.
double batch_gradient(const Model& model, std::span<const Example> batch,
                      ParamSet& grad);

double mean_loss(const Model& model, std::span<const Example> data);

struct EvalResult {
  ErrorCounts chars;
  ErrorCounts words;
  double cer() const { return chars.rate(); }
  double wer() const { return words.rate(); }
};

EvalResult evaluate(const Model& model, std::span<const Example> data);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> dev_cer;
  std::optional<double> dev_wer;
  double learning_rate = 0.0;
};

// "epoch\ttrain_loss\tdev_cer\tdev_wer"; dev fields are "-" when skipped.
std::string format_metrics(const EpochMetrics& m);

struct TrainResult {
  std::vector<EpochMetrics> history;
  double initial_loss = 0.0;
  double best_dev_cer = 1.0;
  std::size_t best_epoch = 0;
};

// Minibatch SGD with momentum on mean CTC loss. Batches are buckets of
// length-sorted utterances visited in a seeded random order. The model ends
// holding the best-dev parameters. `metrics` gets one format_metrics line
// per epoch; `log` gets human-readable progress.
TrainResult train(Model& model, std::span<const Example> train_set,
                  std::span<const Example> dev_set, const TrainConfig& tc,
                  std::ostream* metrics = nullptr, std::ostream* log = nullptr);

struct AblationRow {
  AttnMode mode;
  double cer = 0.0;
  double wer = 0.0;
};

// Trains one model per mode from the same seed and budget and scores each
// on `test_set`.
std::vector<AblationRow> ablate(const ModelConfig& base, const Dataset& train,
                                const Dataset& dev, const Dataset& test,
                                const TrainConfig& tc,
                                std::span<const AttnMode> modes = kAllModes,
                                std::ostream* log = nullptr);

// Rows of "mode  CER (rel%)  WER (rel%)" with deltas relative to the vanilla
// row, e.g. "18.75" for a reduction and "-4.00" for a regression.
std::string format_ablation_table(std::span<const AblationRow> rows);
double relative_improvement(double baseline, double value);

struct GradCheckOptions {
  // Five-point central stencil; at this step its truncation and rounding
  // errors are both near 1e-12 for unit-scale losses.
  double epsilon = 1e-3;
  double tolerance = 1e-4;
  double floor = 1e-6;    // denominator floor for near-zero gradients
  std::size_t frames = 6;
  std::size_t label_count = 2;
};

struct GradCheckGroup {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double loss = 0.0;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Central differences on every parameter of a freshly initialized model
// against the tape gradient of the CTC loss on one seeded random utterance.
GradCheckReport grad_check(const ModelConfig& cfg, std::uint64_t seed,
                           const GradCheckOptions& opt = {});

std::string format_grad_check(const GradCheckReport& report);

// |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor);

}  // namespace ctcattn

#endif  // CTCATTN_TRAIN_HPP_
