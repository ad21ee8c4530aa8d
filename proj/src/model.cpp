#include "ctcattn/model.hpp"

#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "ctcattn/config.hpp"

namespace ctcattn {

void ModelConfig::validate() const {
  encoder.validate();
  attn.validate();
  if (attn.n != encoder.proj_dim) {
    throw std::invalid_argument("model config: attention n " +
                                std::to_string(attn.n) + " != encoder proj " +
                                std::to_string(encoder.proj_dim));
  }
  if (attn.labels != charset.size()) {
    throw std::invalid_argument("model config: K " +
                                std::to_string(attn.labels) +
                                " != charset size " +
                                std::to_string(charset.size()));
  }
}

void ModelConfig::sync() {
  attn.n = encoder.proj_dim;
  attn.labels = charset.size();
}

ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParamSet p;
  add_encoder_params(p, cfg.encoder, rng);
  add_head_params(p, cfg.attn, rng);
  return p;
}

Model::Model(ModelConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), params_(init_params(cfg_, seed)) {}

Model::Model(ModelConfig cfg, ParamSet params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  if (!params_.same_layout(init_params(cfg_, 0))) {
    throw std::invalid_argument("model: parameters do not match config");
  }
}

Var Model::logits(const Bindings& p, const FeatureSequence& f) const {
  Var h = encode(p.tape(), f, cfg_.encoder, p);
  return run_head(h, cfg_.attn, HeadParams::bind(p, cfg_.attn));
}

Var Model::log_posteriors(const Bindings& p, const FeatureSequence& f) const {
  return log_softmax(logits(p, f));
}

LogPosteriorLattice Model::lattice(const FeatureSequence& f) const {
  Tape tape;
  Bindings p(tape, params_, false);
  return {log_posteriors(p, f).value(), cfg_.charset.blank_id()};
}

Transcript Model::transcribe(const FeatureSequence& f) const {
  return greedy_decode(lattice(f), cfg_.charset);
}

void write_checkpoint(std::ostream& os, const Model& model) {
  os.write("CTCK", 4);
  io::put_le<std::uint32_t>(os, kCheckpointVersion);
  io::put_str(os, Json(model.config()).dump());
  const ParamSet& p = model.params();
  io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Tensor& t = p.value(i);
    io::put_str(os, p.name(i));
    io::put_le<std::uint8_t>(os, 0);
    io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) io::put_le<std::uint64_t>(os, d);
    for (double v : t.data()) io::put_f64(os, v);
  }
  if (!os) throw std::runtime_error("failed writing checkpoint");
}

Model read_checkpoint(std::istream& is) {
  io::expect_magic(is, "CTCK");
  const auto version = io::get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw io::FormatError("unsupported checkpoint version " +
                          std::to_string(version));
  }
  ModelConfig cfg = Json::parse(io::get_str(is, 1u << 24)).get<ModelConfig>();
  const auto count = io::get_le<std::uint32_t>(is);
  ParamSet params;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = io::get_str(is, 1024);
    const auto dtype = io::get_le<std::uint8_t>(is);
    if (dtype > 1) throw io::FormatError("unknown dtype in " + name);
    const auto rank = io::get_le<std::uint32_t>(is);
    if (rank > 8) throw io::FormatError("rank out of range in " + name);
    Shape shape(rank);
    for (auto& d : shape) d = io::get_le<std::uint64_t>(is);
    if (shape_numel(shape) > (1ull << 30)) {
      throw io::FormatError("tensor too large: " + name);
    }
    Tensor t(shape);
    for (double& v : t.data()) {
      v = dtype == 0 ? io::get_f64(is) : static_cast<double>(io::get_f32(is));
    }
    params.add(name, std::move(t));
  }
  return Model(std::move(cfg), std::move(params));
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  write_checkpoint(os, model);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_checkpoint(is);
}

}  // namespace ctcattn
