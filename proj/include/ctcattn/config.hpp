#ifndef CTCATTN_CONFIG_HPP_
#define CTCATTN_CONFIG_HPP_

#include <filesystem>

#include "json.hpp"

#include "ctcattn/model.hpp"

// JSON mapping of the configuration structs. Missing keys keep their
// defaults, so a config file only needs to list what it overrides.
namespace ctcattn {

using Json = nlohmann::json;

void to_json(Json& j, const EncoderConfig& c);
void from_json(const Json& j, EncoderConfig& c);
void to_json(Json& j, const AttnConfig& c);
void from_json(const Json& j, AttnConfig& c);
void to_json(Json& j, const ModelConfig& c);
void from_json(const Json& j, ModelConfig& c);

Json load_json(const std::filesystem::path& path);

}  // namespace ctcattn

#endif  // CTCATTN_CONFIG_HPP_
