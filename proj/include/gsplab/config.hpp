#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gsplab/dataset.hpp"
#include "gsplab/error.hpp"
#include "gsplab/model.hpp"
#include "gsplab/synth.hpp"
#include "gsplab/tensor.hpp"
#include "gsplab/trainer.hpp"

namespace gsplab {

// key=value config with '#' comments. Lookups are tracked so unknown keys
// (usually typos) can be rejected after a section is consumed.
class KvConfig {
public:
    KvConfig() = default;

    static KvConfig from_file(const std::filesystem::path& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config file: " + path.string());
        KvConfig cfg;
        cfg.source_ = path.string();
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const std::string t = trim(line.substr(0, line.find('#')));
            if (t.empty()) continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError(path.string() + " line " + std::to_string(lineno) +
                                  ": expected key=value, got '" + t + "'");
            const std::string key = trim(t.substr(0, eq));
            if (key.empty())
                throw ConfigError(path.string() + " line " + std::to_string(lineno) + ": empty key");
            cfg.values_[key] = trim(t.substr(eq + 1));
        }
        return cfg;
    }

    // Overrides win over whatever the file said.
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        used_.insert(key);
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require_string(const std::string& key) const {
        used_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("missing required config key '" + key + "'");
        return it->second;
    }

    long get_int(const std::string& key, long fallback) const {
        used_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const long v = std::stol(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument(it->second);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "' wants an integer, got '" + it->second + "'");
        }
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        used_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            std::size_t pos = 0;
            const std::uint64_t v = std::stoull(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument(it->second);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("key '" + key + "' wants an unsigned integer, got '" + it->second + "'");
        }
    }

    double get_double(const std::string& key, double fallback) const {
        used_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            return parse_double(it->second, key);
        } catch (const Error&) {
            throw ConfigError("key '" + key + "' wants a number, got '" + it->second + "'");
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        used_.insert(key);
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
        if (it->second == "false" || it->second == "0" || it->second == "no") return false;
        throw ConfigError("key '" + key + "' wants a boolean, got '" + it->second + "'");
    }

    std::vector<int> get_int_list(const std::string& key) const {
        used_.insert(key);
        const auto it = values_.find(key);
        std::vector<int> out;
        if (it == values_.end()) return out;
        std::istringstream is(it->second);
        std::string field;
        while (std::getline(is, field, ',')) {
            try {
                std::size_t pos = 0;
                const int v = std::stoi(trim(field), &pos);
                if (pos != trim(field).size()) throw std::invalid_argument(field);
                out.push_back(v);
            } catch (const std::exception&) {
                throw ConfigError("key '" + key + "' wants a comma-separated integer list, got '" +
                                  it->second + "'");
            }
        }
        return out;
    }

    // Marks every present key under a section prefix as consumed, so a
    // command can accept a config file shared with other commands without
    // validating sections it does not read.
    void allow_prefix(const std::string& prefix) const {
        for (const auto& [key, value] : values_)
            if (key.rfind(prefix, 0) == 0) used_.insert(key);
    }

    // Call after all sections have been read.
    void reject_unknown_keys() const {
        for (const auto& [key, value] : values_)
            if (used_.count(key) == 0)
                throw ConfigError("unknown config key '" + key + "'" +
                                  (source_.empty() ? "" : " in " + source_));
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    }

    std::string source_;
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Section readers mapping config keys onto the module configs.
// ---------------------------------------------------------------------------

inline SceneSpec read_scene_spec(const KvConfig& cfg) {
    SceneSpec s;
    s.width = static_cast<int>(cfg.get_int("scene.width", s.width));
    s.height = static_cast<int>(cfg.get_int("scene.height", s.height));
    s.channels = static_cast<int>(cfg.get_int("scene.channels", s.channels));
    s.n_min = static_cast<int>(cfg.get_int("scene.n_min", s.n_min));
    s.n_max = static_cast<int>(cfg.get_int("scene.n_max", s.n_max));
    s.r_min = cfg.get_double("scene.r_min", s.r_min);
    s.r_max = cfg.get_double("scene.r_max", s.r_max);
    s.min_separation = cfg.get_double("scene.min_separation", s.min_separation);
    s.noise_amplitude = cfg.get_double("scene.noise", s.noise_amplitude);
    s.kind = parse_object_kind(cfg.get_string("scene.kind", object_kind_name(s.kind)));
    return s;
}

inline GenConfig read_gen_config(const KvConfig& cfg) {
    GenConfig g;
    g.scene = read_scene_spec(cfg);
    g.n_train = static_cast<int>(cfg.get_int("data.n_train", 0));
    g.n_val = static_cast<int>(cfg.get_int("data.n_val", 0));
    g.n_test = static_cast<int>(cfg.get_int("data.n_test", 0));
    g.seed = cfg.get_u64("seed", 1);
    g.size_cycle = cfg.get_int_list("data.size_cycle");
    return g;
}

inline ModelConfig read_model_config(const KvConfig& cfg) {
    ModelConfig m = default_model_config();
    const std::vector<int> channels = cfg.get_int_list("model.channels");
    const int kernel = static_cast<int>(cfg.get_int("model.kernel", 3));
    const bool pool = cfg.get_bool("model.pool", true);
    if (!channels.empty()) {
        m.blocks.clear();
        for (int ch : channels) m.blocks.push_back({ch, kernel, 1, kernel / 2, pool});
    }
    m.head = parse_head(cfg.get_string("model.head", "gsp"));
    m.in_channels = static_cast<int>(cfg.get_int("model.in_channels", 1));
    m.seed = cfg.get_u64("model.seed", cfg.get_u64("seed", 1));
    return m;
}

inline TrainConfig read_train_config(const KvConfig& cfg) {
    TrainConfig t;
    t.patch_size = static_cast<int>(cfg.get_int("train.patch", t.patch_size));
    t.patches_per_image = static_cast<int>(cfg.get_int("train.patches_per_image", t.patches_per_image));
    t.batch_size = static_cast<int>(cfg.get_int("train.batch", t.batch_size));
    t.epochs = static_cast<int>(cfg.get_int("train.epochs", t.epochs));
    t.optimizer = parse_optimizer(cfg.get_string("train.optimizer", optimizer_name(t.optimizer)));
    t.learning_rate = cfg.get_double("train.lr", t.learning_rate);
    t.momentum = cfg.get_double("train.momentum", t.momentum);
    t.beta1 = cfg.get_double("train.beta1", t.beta1);
    t.beta2 = cfg.get_double("train.beta2", t.beta2);
    t.adam_eps = cfg.get_double("train.adam_eps", t.adam_eps);
    const std::string loss = cfg.get_string("train.loss", "l1");
    if (loss == "l1") t.loss = LossKind::L1;
    else if (loss == "mse") t.loss = LossKind::Mse;
    else throw ConfigError("unknown loss '" + loss + "' (expected l1 or mse)");
    t.rule = parse_count_rule(cfg.get_string("train.rule", count_rule_name(t.rule)));
    t.object_centered_ratio = cfg.get_double("train.object_centered_ratio", t.object_centered_ratio);
    t.seed = cfg.get_u64("train.seed", cfg.get_u64("seed", 1));
    return t;
}

} // namespace gsplab
