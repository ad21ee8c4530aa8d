#ifndef CTCATTN_ENCODER_HPP_
#define CTCATTN_ENCODER_HPP_

#include <filesystem>
#include <iosfwd>

#include "ctcattn/lstm.hpp"

namespace ctcattn {

// T' x d_base feature frames.
struct FeatureSequence {
  Tensor frames;
  double frame_period_ms = 10.0;

  std::size_t length() const { return frames.rank() ? frames.dim(0) : 0; }
  std::size_t dim() const { return frames.rank() == 2 ? frames.dim(1) : 0; }
  // Throws std::invalid_argument on empty input or non-finite entries.
  void validate() const;
};

struct EncoderConfig {
  std::size_t input_dim = 16;  // d_base
  std::size_t layers = 2;
  std::size_t cells = 64;      // per direction
  bool bidirectional = false;
  std::size_t stack = 1;
  std::size_t skip = 1;
  std::size_t proj_dim = 64;   // n

  void validate() const;
  std::size_t stacked_dim() const { return input_dim * stack; }
  std::size_t output_frames(std::size_t input_frames) const;
};

// Output frame t concatenates input frames [t*skip, t*skip + stack), zero
// padded past the end. Output length is ceil(T'/skip).
FeatureSequence stack_and_skip(const FeatureSequence& f, std::size_t stack,
                               std::size_t skip);

// Parameter names: enc.l<i>.fw.*, enc.l<i>.bw.* (bidirectional only),
// enc.proj.W, enc.proj.b.
void add_encoder_params(ParamSet& params, const EncoderConfig& cfg, Rng& rng);

// Stacks/skips `f` and runs the LSTM stack; returns the final-layer outputs
// before projection, [T x cells] or [T x 2*cells] (forward half first).
Var encode_hidden(Tape& tape, const FeatureSequence& f,
                  const EncoderConfig& cfg, const Bindings& p);

// encode_hidden followed by the single affine projection to proj_dim.
Var encode(Tape& tape, const FeatureSequence& f, const EncoderConfig& cfg,
           const Bindings& p);

// Runs one LSTM layer over the rows of x, optionally right to left.
Var run_lstm_layer(Var x, const LstmParams& p, bool reverse);

// Feature files. Binary: "CTCF", u32 version, u32 T', u32 d_base, then
// row-major little-endian float32. Text: "# ctcattn-features T d" header
// then one frame per line.
void write_features_binary(std::ostream& os, const FeatureSequence& f);
FeatureSequence read_features_binary(std::istream& is);
void write_features_text(std::ostream& os, const FeatureSequence& f);
FeatureSequence read_features_text(std::istream& is);
// Chooses the text format for a ".txt" extension, binary otherwise.
void save_features(const std::filesystem::path& path, const FeatureSequence& f);
FeatureSequence load_features(const std::filesystem::path& path);

inline constexpr std::uint32_t kFeatureFileVersion = 1;

}  // namespace ctcattn

#endif  // CTCATTN_ENCODER_HPP_
