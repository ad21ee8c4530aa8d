#include "ctcattn/encoder.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "binary_io.hpp"

namespace ctcattn {

void FeatureSequence::validate() const {
  if (frames.rank() != 2 || frames.dim(0) == 0 || frames.dim(1) == 0) {
    throw std::invalid_argument("feature sequence is empty: shape " +
                                shape_str(frames.shape()));
  }
  for (double v : frames.data()) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("feature sequence has non-finite entries");
    }
  }
}

void EncoderConfig::validate() const {
  if (input_dim == 0 || layers == 0 || cells == 0 || stack == 0 ||
      skip == 0 || proj_dim == 0) {
    throw std::invalid_argument(
        "encoder config: dims, layers, stack and skip must be >= 1");
  }
}

std::size_t EncoderConfig::output_frames(std::size_t input_frames) const {
  return (input_frames + skip - 1) / skip;
}

FeatureSequence stack_and_skip(const FeatureSequence& f, std::size_t stack,
                               std::size_t skip) {
  if (stack == 0 || skip == 0) {
    throw std::invalid_argument("stack and skip must be >= 1");
  }
  if (f.length() == 0) throw std::invalid_argument("stack_and_skip: empty input");
  const std::size_t in_len = f.length(), d = f.dim();
  const std::size_t out_len = (in_len + skip - 1) / skip;
  Tensor out({out_len, d * stack});
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t s = 0; s < stack; ++s) {
      const std::size_t src = t * skip + s;
      if (src >= in_len) break;
      for (std::size_t k = 0; k < d; ++k) out.at(t, s * d + k) = f.frames.at(src, k);
    }
  }
  return {std::move(out), f.frame_period_ms * static_cast<double>(skip)};
}

void add_encoder_params(ParamSet& params, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  std::size_t in = cfg.stacked_dim();
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string prefix = "enc.l" + std::to_string(l);
    add_lstm_params(params, prefix + ".fw", in, cfg.cells, rng);
    if (cfg.bidirectional) add_lstm_params(params, prefix + ".bw", in, cfg.cells, rng);
    in = cfg.cells * (cfg.bidirectional ? 2 : 1);
  }
  params.add("enc.proj.W", uniform_init({cfg.proj_dim, in}, in, rng));
  params.add("enc.proj.b", uniform_init({cfg.proj_dim}, in, rng));
}

Var run_lstm_layer(Var x, const LstmParams& p, bool reverse) {
  const std::size_t steps = x.value().dim(0);
  Var proj = linear(x, p.wx, p.b);
  LstmState st = zero_lstm_state(*x.tape(), p.cells());
  std::vector<Var> outs(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    st = lstm_cell_projected(select(proj, t), st, p.wh);
    outs[t] = st.h;
  }
  return stack(outs);
}

Var encode_hidden(Tape& tape, const FeatureSequence& f,
                  const EncoderConfig& cfg, const Bindings& p) {
  cfg.validate();
  f.validate();
  if (f.dim() != cfg.input_dim) {
    throw DimensionError("encoder: feature dim " + std::to_string(f.dim()) +
                         " does not match input_dim " +
                         std::to_string(cfg.input_dim));
  }
  FeatureSequence s = stack_and_skip(f, cfg.stack, cfg.skip);
  Var x = tape.constant(std::move(s.frames));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string prefix = "enc.l" + std::to_string(l);
    Var fw = run_lstm_layer(x, LstmParams::bind(p, prefix + ".fw"), false);
    if (cfg.bidirectional) {
      Var bw = run_lstm_layer(x, LstmParams::bind(p, prefix + ".bw"), true);
      const Var parts[] = {fw, bw};
      x = hconcat(parts);
    } else {
      x = fw;
    }
  }
  return x;
}

Var encode(Tape& tape, const FeatureSequence& f, const EncoderConfig& cfg,
           const Bindings& p) {
  return linear(encode_hidden(tape, f, cfg, p), p("enc.proj.W"),
                p("enc.proj.b"));
}

void write_features_binary(std::ostream& os, const FeatureSequence& f) {
  f.validate();
  os.write("CTCF", 4);
  io::put_le<std::uint32_t>(os, kFeatureFileVersion);
  io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.length()));
  io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(f.dim()));
  for (double v : f.frames.data()) io::put_f32(os, static_cast<float>(v));
  if (!os) throw std::runtime_error("failed writing feature stream");
}

FeatureSequence read_features_binary(std::istream& is) {
  io::expect_magic(is, "CTCF");
  const auto version = io::get_le<std::uint32_t>(is);
  if (version != kFeatureFileVersion) {
    throw io::FormatError("unsupported feature file version " +
                          std::to_string(version));
  }
  const auto frames = io::get_le<std::uint32_t>(is);
  const auto dim = io::get_le<std::uint32_t>(is);
  if (frames == 0 || dim == 0 || std::uint64_t{frames} * dim > (1u << 28)) {
    throw io::FormatError("feature header out of range");
  }
  Tensor t({frames, dim});
  for (double& v : t.data()) v = io::get_f32(is);
  FeatureSequence f{std::move(t)};
  f.validate();
  return f;
}

void write_features_text(std::ostream& os, const FeatureSequence& f) {
  f.validate();
  os << "# ctcattn-features " << f.length() << ' ' << f.dim() << '\n';
  os.precision(std::numeric_limits<float>::max_digits10);
  for (std::size_t t = 0; t < f.length(); ++t) {
    for (std::size_t k = 0; k < f.dim(); ++k) {
      if (k) os << ' ';
      os << static_cast<float>(f.frames.at(t, k));
    }
    os << '\n';
  }
}

FeatureSequence read_features_text(std::istream& is) {
  std::vector<double> data;
  std::size_t dim = 0, rows = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::size_t n = 0;
    float v;
    while (ls >> v) {
      data.push_back(v);
      ++n;
    }
    if (!ls.eof()) throw io::FormatError("bad number in feature text");
    if (rows == 0) dim = n;
    if (n != dim) throw io::FormatError("ragged feature text rows");
    ++rows;
  }
  FeatureSequence f{Tensor({rows, dim}, std::move(data))};
  f.validate();
  return f;
}

void save_features(const std::filesystem::path& path,
                   const FeatureSequence& f) {
  const bool text = path.extension() == ".txt";
  std::ofstream os(path, text ? std::ios::out : std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  if (text) {
    write_features_text(os, f);
  } else {
    write_features_binary(os, f);
  }
}

FeatureSequence load_features(const std::filesystem::path& path) {
  const bool text = path.extension() == ".txt";
  std::ifstream is(path, text ? std::ios::in : std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return text ? read_features_text(is) : read_features_binary(is);
}

}  // namespace ctcattn
