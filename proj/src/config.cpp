#include "alkd/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace alkd {
namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw ConfigError("invalid value '" + value + "' for " + key + ": expected " + expected);
}

template <class T>
T parse_integer(const std::string& key, const std::string& value) {
    T v{};
    const auto* end = value.data() + value.size();
    auto [p, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc() || p != end) bad_value(key, value, "a non-negative integer");
    return v;
}

double parse_double(const std::string& key, const std::string& value) {
    double v = 0.0;
    const auto* end = value.data() + value.size();
    auto [p, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc() || p != end) bad_value(key, value, "a number");
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    bad_value(key, value, "true or false");
}

ConfigKey size_key(std::string name, std::string section, std::size_t& field, std::string published, std::string help) {
    return {name, std::move(section), std::move(published), std::move(help),
            [name, &field](const std::string& v) { field = parse_integer<std::size_t>(name, v); },
            [&field] { return json(field); }};
}

ConfigKey u64_key(std::string name, std::string section, std::uint64_t& field, std::string published, std::string help) {
    return {name, std::move(section), std::move(published), std::move(help),
            [name, &field](const std::string& v) { field = parse_integer<std::uint64_t>(name, v); },
            [&field] { return json(field); }};
}

ConfigKey double_key(std::string name, std::string section, double& field, std::string published, std::string help) {
    return {name, std::move(section), std::move(published), std::move(help),
            [name, &field](const std::string& v) { field = parse_double(name, v); }, [&field] { return json(field); }};
}

ConfigKey bool_key(std::string name, std::string section, bool& field, std::string published, std::string help) {
    return {name, std::move(section), std::move(published), std::move(help),
            [name, &field](const std::string& v) { field = parse_bool(name, v); }, [&field] { return json(field); }};
}

ConfigKey string_key(std::string name, std::string section, std::string& field, std::string published, std::string help) {
    return {name, std::move(section), std::move(published), std::move(help), [&field](const std::string& v) { field = v; },
            [&field] { return json(field); }};
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out,
             const std::string& source) {
    for (const auto& [k, v] : j.items()) {
        const std::string key = prefix.empty() ? k : prefix + "." + k;
        if (v.is_object()) {
            flatten(v, key, out, source);
        } else if (v.is_string()) {
            out.emplace_back(key, v.get<std::string>());
        } else if (v.is_boolean() || v.is_number()) {
            out.emplace_back(key, v.dump());
        } else {
            throw ConfigError(source + ": unsupported value for '" + key + "'");
        }
    }
}

}  // namespace

std::vector<ConfigKey> config_keys(RunConfig& run) {
    auto& m = run.model;
    auto& t = run.train;
    auto& f = run.finetune;
    std::vector<ConfigKey> keys{
        size_key("n_layers", "model", m.n_layers, "12", "encoder layers"),
        size_key("d_model", "model", m.d_model, "768", "hidden size"),
        size_key("n_heads", "model", m.n_heads, "12", "attention heads"),
        size_key("d_ff", "model", m.d_ff, "3072", "feed-forward width"),
        size_key("vocab_size", "model", m.vocab_size, "", "0 takes the vocabulary file's size"),
        size_key("max_len", "model", m.max_len, "128", "maximum tokens per sample including [CLS]"),
        double_key("dropout_rate", "model", m.dropout_rate, "", "dropout in train mode"),
        size_key("teacher_dim", "model", m.teacher_dim, "768", "teacher vector size; pretrain takes it from the store"),
        bool_key("use_projection", "model", m.use_projection, "", "learned d_model x teacher_dim map for KD losses"),

        double_key("lr_peak", "train", t.lr_peak, "1e-4", "peak learning rate"),
        u64_key("warmup_steps", "train", t.warmup_steps, "10000", "linear warmup steps"),
        u64_key("max_steps", "train", t.max_steps, "", "0 means epochs x ceil(records / batch_size)"),
        u64_key("epochs", "train", t.epochs, "40", "passes over the store when max_steps is 0"),
        size_key("batch_size", "train", t.batch_size, "256", "pretraining batch size"),
        double_key("weight_decay", "train", t.weight_decay, "0.01", "AdamW decoupled weight decay"),
        double_key("gamma", "train", t.gamma, "1.0", "weight of the KD loss"),
        {"kd_objective", "train", "", "nst | crd | none",
         [&t](const std::string& v) { t.kd_objective = parse_kd_objective(v); },
         [&t] { return json(to_string(t.kd_objective)); }},
        double_key("masking_rate", "train", t.masking_rate, "0.15", "MLM selection probability"),
        bool_key("mlm_bert_split", "train", t.mlm_bert_split, "", "80/10/10 corruption of selected tokens"),
        bool_key("remask_each_epoch", "train", t.remask_each_epoch, "", "draw new masks every epoch"),
        u64_key("seed", "train", t.seed, "", "run seed"),
        double_key("grad_clip_norm", "train", t.grad_clip_norm, "", "global gradient norm cap, 0 disables"),
        u64_key("checkpoint_every", "train", t.checkpoint_every, "", "steps between checkpoints, 0 only final"),
        double_key("tau", "train", t.tau, "0.01", "CRD temperature"),
        double_key("kernel_c", "train", t.kernel.c, "0", "NST polynomial kernel offset"),
        {"kernel_degree", "train", "2", "NST polynomial kernel degree",
         [&t](const std::string& v) {
             const auto d = parse_integer<int>("kernel_degree", v);
             t.kernel.degree = d;
         },
         [&t] { return json(t.kernel.degree); }},
        {"nst_mode", "train", "", "per_token | column",
         [&t](const std::string& v) {
             try {
                 t.nst_mode = parse_nst_mode(v);
             } catch (const std::exception&) {
                 bad_value("nst_mode", v, "per_token or column");
             }
         },
         [&t] { return json(to_string(t.nst_mode)); }},
        bool_key("kd_include_cls", "train", t.kd_include_cls, "", "count [CLS] as a valid KD token"),

        string_key("finetune.task", "finetune", f.task, "",
                   "sentiment_regression | sentiment_class_{7,5,3,2} | emotion_binary"),
        string_key("finetune.emotion", "finetune", f.emotion, "", "emotion label key; empty evaluates every emotion"),
        size_key("finetune.epochs", "finetune", f.epochs, "3", "fine-tuning epochs"),
        double_key("finetune.lr", "finetune", f.lr, "2e-5", "fine-tuning learning rate"),
        size_key("finetune.batch_size", "finetune", f.batch_size, "32", "fine-tuning batch size"),
        size_key("finetune.seeds", "finetune", f.seeds, "5", "fine-tuning seeds averaged in reports"),
        double_key("finetune.weight_decay", "finetune", f.weight_decay, "", "fine-tuning weight decay"),
    };
    return keys;
}

void apply_setting(RunConfig& run, const std::string& key, const std::string& value) {
    auto keys = config_keys(run);
    auto find = [&](const std::string& name) {
        return std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == name; });
    };
    auto it = find(key);
    if (it == keys.end()) {
        for (const char* prefix : {"model.", "train."}) {
            if (key.starts_with(prefix)) {
                auto stripped = find(key.substr(std::string(prefix).size()));
                if (stripped != keys.end() && key.starts_with(stripped->section)) it = stripped;
            }
        }
    }
    if (it == keys.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(value);
}

std::pair<std::string, std::string> split_override(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + text + "' is not key=value");
    return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text,
                                                                   const std::string& source) {
    std::vector<std::pair<std::string, std::string>> out;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ConfigError(source + ": " + e.what());
        }
        flatten(j, "", out, source);
        return out;
    }
    std::istringstream in(text);
    std::string line, section;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(source + ":" + std::to_string(n) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(n) + ": expected key = value");
        std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        out.emplace_back(section.empty() ? key : section + "." + key, value);
    }
    return out;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    RunConfig run;
    for (const auto& [k, v] : parse_config_text(ss.str(), path)) apply_setting(run, k, v);
    return run;
}

json config_json(RunConfig& run, std::initializer_list<std::string> sections) {
    json out;
    for (const auto& s : sections) out[s] = json::object();
    for (const auto& k : config_keys(run)) {
        if (!out.contains(k.section)) continue;
        const auto name = k.name.starts_with(k.section + ".") ? k.name.substr(k.section.size() + 1) : k.name;
        out[k.section][name] = k.get();
    }
    return out;
}

std::string describe_keys(RunConfig& run, std::initializer_list<std::string> sections) {
    std::ostringstream out;
    for (const auto& k : config_keys(run)) {
        if (std::find(sections.begin(), sections.end(), k.section) == sections.end()) continue;
        out << "  " << k.name << " = " << k.get().dump();
        if (!k.published_default.empty()) out << "  (published: " << k.published_default << ")";
        out << "  " << k.help << '\n';
    }
    return out.str();
}

}  // namespace alkd
