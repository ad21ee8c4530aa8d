#include "ctcattn/synth.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

namespace ctcattn {

namespace {

std::size_t uniform_size(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Rng stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

std::string utterance_id(std::uint64_t stream, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%llu-%06zu",
                static_cast<unsigned long long>(stream), i);
  return buf;
}

}  // namespace

void SynthTaskSpec::validate() const {
  if (feature_dim == 0) throw std::invalid_argument("synth: feature_dim = 0");
  if (min_duration < 1 || max_duration < min_duration) {
    throw std::invalid_argument("synth: need 1 <= min_duration <= max_duration");
  }
  if (max_gap < min_gap) throw std::invalid_argument("synth: max_gap < min_gap");
  if (!(sigma >= 0.0)) throw std::invalid_argument("synth: sigma < 0");
  if (min_labels < 1 || max_labels < min_labels) {
    throw std::invalid_argument("synth: need 1 <= min_labels <= max_labels");
  }
}

Tensor SynthTaskSpec::prototypes() const {
  validate();
  Rng rng = stream_rng(seed, ~std::uint64_t{0});
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor p({vocab.size(), feature_dim});
  for (std::size_t k = 0; k < vocab.size(); ++k) {
    if (k == vocab.blank_id()) continue;
    for (std::size_t j = 0; j < feature_dim; ++j) p.at(k, j) = normal(rng);
  }
  return p;
}

LabelSequence sample_labels(const SynthTaskSpec& spec, Rng& rng) {
  std::vector<std::size_t> pool;
  for (std::size_t k = 0; k < spec.vocab.size(); ++k) {
    if (k != spec.vocab.blank_id()) pool.push_back(k);
  }
  LabelSequence out;
  const std::size_t len = uniform_size(rng, spec.min_labels, spec.max_labels);
  for (std::size_t i = 0; i < len; ++i) {
    out.ids.push_back(pool[uniform_size(rng, 0, pool.size() - 1)]);
  }
  return out;
}

FeatureSequence render(const SynthTaskSpec& spec, const Tensor& prototypes,
                       const LabelSequence& labels, Rng& rng) {
  const std::size_t d = spec.feature_dim;
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> frames;
  auto emit = [&](std::size_t row, std::size_t count) {
    for (std::size_t r = 0; r < count; ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        const double n = spec.sigma > 0.0 ? spec.sigma * noise(rng) : 0.0;
        frames.push_back(prototypes.at(row, j) + n);
      }
    }
  };
  for (std::size_t i = 0; i < labels.ids.size(); ++i) {
    if (i > 0 && labels.ids[i] == labels.ids[i - 1]) {
      emit(spec.vocab.blank_id(), uniform_size(rng, spec.min_gap, spec.max_gap));
    }
    emit(labels.ids[i],
         uniform_size(rng, spec.min_duration, spec.max_duration));
  }
  const std::size_t t = frames.size() / d;
  return FeatureSequence{Tensor({t, d}, std::move(frames))};
}

Dataset gen_dataset(const SynthTaskSpec& spec, std::size_t count,
                    std::uint64_t stream) {
  const Tensor protos = spec.prototypes();
  Rng rng = stream_rng(spec.seed, stream);
  Dataset out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const LabelSequence labels = sample_labels(spec, rng);
    FeatureSequence f = render(spec, protos, labels, rng);
    out.push_back({utterance_id(stream, i), std::move(f),
                   spec.vocab.decode(labels)});
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> read_transcripts(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      out.emplace_back(line, "");
    } else {
      out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
  }
  return out;
}

void write_transcripts(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::string>>& lines) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  for (const auto& [id, text] : lines) os << id << '\t' << text << '\n';
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir / "feats");
  std::vector<std::pair<std::string, std::string>> lines;
  for (const Utterance& u : data) {
    save_features(dir / "feats" / (u.id + ".bin"), u.features);
    lines.emplace_back(u.id, u.text);
  }
  write_transcripts(dir / "text", lines);
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset out;
  for (auto& [id, text] : read_transcripts(dir / "text")) {
    out.push_back({id, load_features(dir / "feats" / (id + ".bin")), text});
  }
  return out;
}

void to_json(Json& j, const SynthTaskSpec& s) {
  j = Json{{"charset", s.vocab.symbols()},
           {"feature_dim", s.feature_dim},
           {"min_duration", s.min_duration},
           {"max_duration", s.max_duration},
           {"min_gap", s.min_gap},
           {"max_gap", s.max_gap},
           {"sigma", s.sigma},
           {"min_labels", s.min_labels},
           {"max_labels", s.max_labels},
           {"seed", s.seed}};
}

void from_json(const Json& j, SynthTaskSpec& s) {
  if (j.contains("charset")) {
    s.vocab = Charset(j.at("charset").get<std::vector<std::string>>());
  }
  auto opt = [&](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  opt("feature_dim", s.feature_dim);
  opt("min_duration", s.min_duration);
  opt("max_duration", s.max_duration);
  opt("min_gap", s.min_gap);
  opt("max_gap", s.max_gap);
  opt("sigma", s.sigma);
  opt("min_labels", s.min_labels);
  opt("max_labels", s.max_labels);
  opt("seed", s.seed);
}

}  // namespace ctcattn
