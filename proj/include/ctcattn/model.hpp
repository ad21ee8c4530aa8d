#ifndef CTCATTN_MODEL_HPP_
#define CTCATTN_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "ctcattn/attention.hpp"
#include "ctcattn/ctc.hpp"
#include "ctcattn/decode.hpp"
#include "ctcattn/encoder.hpp"

namespace ctcattn {

struct ModelConfig {
  EncoderConfig encoder;
  AttnConfig attn;
  Charset charset = Charset::toy(7);

  // Checks cross-module agreement: attn.n == encoder.proj_dim and
  // attn.labels == charset.size().
  void validate() const;
  // Sets attn.n and attn.labels from the encoder and charset.
  void sync();
};

ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed);

// Encoder + attention head + charset. Parameters are plain values; a forward
// pass binds them to a caller-owned tape, so one Model can serve many
// threads as long as nobody writes its parameters meanwhile.
class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);
  Model(ModelConfig cfg, ParamSet params);

  const ModelConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // [T x K] logits / log posteriors for one utterance.
  Var logits(const Bindings& p, const FeatureSequence& f) const;
  Var log_posteriors(const Bindings& p, const FeatureSequence& f) const;

  LogPosteriorLattice lattice(const FeatureSequence& f) const;
  Transcript transcribe(const FeatureSequence& f) const;
  std::size_t output_frames(std::size_t input_frames) const {
    return cfg_.encoder.output_frames(input_frames);
  }

 private:
  ModelConfig cfg_;
  ParamSet params_;
};

// Binary container: "CTCK", u32 version, config JSON string, u32 tensor
// count, then per tensor: name, u8 dtype (0 = float64, 1 = float32), u32
// rank, u64 extents, little-endian values.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void write_checkpoint(std::ostream& os, const Model& model);
Model read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace ctcattn

#endif  // CTCATTN_MODEL_HPP_
