#ifndef CTCATTN_SYNTH_HPP_
#define CTCATTN_SYNTH_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctcattn/config.hpp"
#include "ctcattn/decode.hpp"
#include "ctcattn/encoder.hpp"
#include "ctcattn/params.hpp"

namespace ctcattn {

// Toy sequence task: every non-blank label owns a Gaussian prototype vector;
// an utterance is a run of prototypes with random durations plus noise.
// Identical neighbouring labels are separated by a short gap of blank-
// prototype (all-zero) frames so the repeat stays recoverable.
struct SynthTaskSpec {
  Charset vocab = Charset::toy(7);
  std::size_t feature_dim = 16;
  std::size_t min_duration = 2;
  std::size_t max_duration = 5;
  std::size_t min_gap = 1;
  std::size_t max_gap = 2;
  double sigma = 0.3;
  std::size_t min_labels = 3;
  std::size_t max_labels = 8;
  std::uint64_t seed = 1;

  void validate() const;
  // [K x feature_dim]; the blank row is zero. Depends only on seed.
  Tensor prototypes() const;
};

struct Utterance {
  std::string id;
  FeatureSequence features;
  std::string text;
};

using Dataset = std::vector<Utterance>;

// Labels drawn i.i.d. uniform over the non-blank symbols; length uniform in
// [min_labels, max_labels].
LabelSequence sample_labels(const SynthTaskSpec& spec, Rng& rng);

FeatureSequence render(const SynthTaskSpec& spec, const Tensor& prototypes,
                       const LabelSequence& labels, Rng& rng);

// `stream` separates splits drawn from one spec (train = 0, dev = 1, ...).
Dataset gen_dataset(const SynthTaskSpec& spec, std::size_t count,
                    std::uint64_t stream = 0);

// Split directory: feats/<id>.bin plus a "text" file of "<id>\t<text>" lines.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
Dataset read_dataset(const std::filesystem::path& dir);

// "<id>\t<text>" per line; a line without a tab is an id with empty text.
std::vector<std::pair<std::string, std::string>> read_transcripts(
    const std::filesystem::path& path);
void write_transcripts(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::string>>& lines);

void to_json(Json& j, const SynthTaskSpec& s);
void from_json(const Json& j, SynthTaskSpec& s);

}  // namespace ctcattn

#endif  // CTCATTN_SYNTH_HPP_
