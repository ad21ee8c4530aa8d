#include "ctcattn/config.hpp"

#include <fstream>

namespace ctcattn {

namespace {

template <typename T>
void read_opt(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void to_json(Json& j, const EncoderConfig& c) {
  j = Json{{"input_dim", c.input_dim}, {"layers", c.layers},
           {"cells", c.cells},         {"bidirectional", c.bidirectional},
           {"stack", c.stack},         {"skip", c.skip},
           {"proj_dim", c.proj_dim}};
}

void from_json(const Json& j, EncoderConfig& c) {
  read_opt(j, "input_dim", c.input_dim);
  read_opt(j, "layers", c.layers);
  read_opt(j, "cells", c.cells);
  read_opt(j, "bidirectional", c.bidirectional);
  read_opt(j, "stack", c.stack);
  read_opt(j, "skip", c.skip);
  read_opt(j, "proj_dim", c.proj_dim);
}

void to_json(Json& j, const AttnConfig& c) {
  const auto& f = c.features;
  j = Json{{"tau", c.tau},
           {"n", c.n},
           {"labels", c.labels},
           {"filters", c.filters},
           {"filter_width", c.filter_width},
           {"features",
            {{"time_conv", f.time_conv},
             {"content", f.content},
             {"location", f.location},
             {"implicit_lm", f.implicit_lm},
             {"component", f.component}}}};
  if (auto m = c.mode()) j["mode"] = std::string(mode_name(*m));
  if (c.gamma) j["gamma"] = *c.gamma;
}

void from_json(const Json& j, AttnConfig& c) {
  read_opt(j, "tau", c.tau);
  read_opt(j, "n", c.n);
  read_opt(j, "labels", c.labels);
  read_opt(j, "filters", c.filters);
  read_opt(j, "filter_width", c.filter_width);
  if (j.contains("gamma") && !j.at("gamma").is_null()) {
    c.gamma = j.at("gamma").get<double>();
  }
  if (j.contains("mode")) c.set_mode(parse_mode(j.at("mode").get<std::string>()));
  if (j.contains("features")) {
    const Json& f = j.at("features");
    read_opt(f, "time_conv", c.features.time_conv);
    read_opt(f, "content", c.features.content);
    read_opt(f, "location", c.features.location);
    read_opt(f, "implicit_lm", c.features.implicit_lm);
    read_opt(f, "component", c.features.component);
  }
}

void to_json(Json& j, const ModelConfig& c) {
  j = Json{{"encoder", c.encoder},
           {"attention", c.attn},
           {"charset", c.charset.symbols()}};
}

void from_json(const Json& j, ModelConfig& c) {
  read_opt(j, "encoder", c.encoder);
  read_opt(j, "attention", c.attn);
  if (j.contains("charset")) {
    c.charset = Charset(j.at("charset").get<std::vector<std::string>>());
  }
}

Json load_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return Json::parse(is, nullptr, true, true);
}

}  // namespace ctcattn
