#pragma once

#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "alkd/finetune.hpp"
#include "alkd/model.hpp"
#include "alkd/training.hpp"

namespace alkd {

/// Every configurable setting of a run. Keys mirror the struct field names;
/// fine-tuning keys carry a "finetune." prefix.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    FinetuneConfig finetune;
};

struct ConfigKey {
    std::string name;
    std::string section;        // model | train | finetune
    std::string published_default;  // empty when no published value exists
    std::string help;
    std::function<void(const std::string&)> set;
    std::function<nlohmann::ordered_json()> get;
};

/// Accessors bound to `run`; the table outlives nothing but `run`.
std::vector<ConfigKey> config_keys(RunConfig& run);

/// Parses `value` into the named field. "model.x" / "train.x" resolve to x.
/// Unknown keys and unparsable values raise ConfigError.
void apply_setting(RunConfig& run, const std::string& key, const std::string& value);

/// Reads "key=value".
std::pair<std::string, std::string> split_override(const std::string& text);

/// Flattened key/value pairs from either a JSON object or a TOML-style file
/// (`key = value` lines, `[section]` headers, `#` comments).
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text,
                                                                   const std::string& source = "<config>");

RunConfig load_config(const std::string& path);

/// {"model": {...}, "train": {...}, "finetune": {...}} restricted to `sections`.
nlohmann::ordered_json config_json(RunConfig& run,
                                   std::initializer_list<std::string> sections = {"model", "train", "finetune"});

/// One line per key: name, current value, published default, help.
std::string describe_keys(RunConfig& run, std::initializer_list<std::string> sections);

}  // namespace alkd
