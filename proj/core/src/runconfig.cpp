// SPDX-License-Identifier: Apache-2.0
#include "selfpitch/runconfig.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include "selfpitch/common.hpp"

namespace selfpitch {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

struct Field {
    const char* type;  // "int", "float", "uint", "bool", "string"
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
T parse_number(const std::string& key, const std::string& value, const char* type) {
    std::stringstream ss(value);
    T out{};
    ss >> out;
    if (ss.fail() || !ss.eof())
        throw ConfigError("key '" + key + "': expected " + type + ", got '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "on") return true;
    if (value == "false" || value == "0" || value == "off") return false;
    throw ConfigError("key '" + key + "': expected bool, got '" + value + "'");
}

const std::map<std::string, Field>& field_table() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> t;
        auto add_int = [&](const std::string& key, int RunConfig::* member) {
            t[key] = Field{"int",
                           [key, member](RunConfig& c, const std::string& v) {
                               c.*member = parse_number<int>(key, v, "int");
                           },
                           [member](const RunConfig& c) { return std::to_string(c.*member); }};
        };
        auto add_double = [&](const std::string& key, double RunConfig::* member) {
            t[key] = Field{"float",
                           [key, member](RunConfig& c, const std::string& v) {
                               c.*member = parse_number<double>(key, v, "float");
                           },
                           [member](const RunConfig& c) {
                               std::ostringstream os;
                               os << c.*member;
                               return os.str();
                           }};
        };
        auto add_uint = [&](const std::string& key, std::uint64_t RunConfig::* member) {
            t[key] = Field{"uint",
                           [key, member](RunConfig& c, const std::string& v) {
                               c.*member = parse_number<std::uint64_t>(key, v, "uint");
                           },
                           [member](const RunConfig& c) { return std::to_string(c.*member); }};
        };
        auto add_bool = [&](const std::string& key, bool RunConfig::* member) {
            t[key] = Field{"bool",
                           [key, member](RunConfig& c, const std::string& v) {
                               c.*member = parse_bool(key, v);
                           },
                           [member](const RunConfig& c) { return c.*member ? "true" : "false"; }};
        };
        auto add_string = [&](const std::string& key, std::string RunConfig::* member) {
            t[key] = Field{"string",
                           [member](RunConfig& c, const std::string& v) { c.*member = v; },
                           [member](const RunConfig& c) { return c.*member; }};
        };

        add_string("corpus.preset", &RunConfig::corpus_preset);
        add_uint("corpus.seed", &RunConfig::corpus_seed);
        add_int("trainer.epochs", &RunConfig::epochs);
        add_int("trainer.k_epochs", &RunConfig::k_epochs);
        add_int("trainer.batch", &RunConfig::batch);
        add_double("trainer.lr", &RunConfig::lr);
        add_uint("trainer.seed", &RunConfig::seed);
        add_int("trainer.delta_max", &RunConfig::delta_max);
        add_int("trainer.checkpoint_every", &RunConfig::checkpoint_every);
        add_int("trainer.threads", &RunConfig::threads);
        add_bool("trainer.deterministic", &RunConfig::deterministic);
        add_string("trainer.precision", &RunConfig::precision);
        add_double("voicing.theta", &RunConfig::theta);
        add_int("voicing.epochs", &RunConfig::voicing_epochs);
        add_double("voicing.lr", &RunConfig::voicing_lr);
        add_int("synth.harmonics", &RunConfig::harmonics);
        add_int("synth.fit_epochs", &RunConfig::fit_epochs);
        add_double("synth.fit_lr", &RunConfig::fit_lr);
        add_double("synth.lambda_smooth", &RunConfig::lambda_smooth);
        add_double("eval.threshold_cents", &RunConfig::threshold_cents);
        return t;
    }();
    return table;
}

void apply(RunConfig& cfg, const std::string& dotted_key, const std::string& value) {
    const auto& table = field_table();
    const auto it = table.find(dotted_key);
    if (it == table.end()) throw ConfigError("unknown key '" + dotted_key + "'");
    it->second.set(cfg, value);
}

}  // namespace

void RunConfig::validate() const {
    if (corpus_preset != "demo" && corpus_preset != "mini")
        throw ConfigError("corpus.preset: expected demo or mini, got '" + corpus_preset + "'");
    if (k_epochs < 1) throw ConfigError("trainer.k_epochs: must be >= 1");
    if (epochs < 0 || epochs % k_epochs != 0)
        throw ConfigError("trainer.epochs: must be a non-negative multiple of k_epochs");
    if (batch < 1) throw ConfigError("trainer.batch: must be >= 1");
    if (!(lr > 0)) throw ConfigError("trainer.lr: must be positive");
    if (delta_max < 1 || delta_max > 60) throw ConfigError("trainer.delta_max: outside [1, 60]");
    if (checkpoint_every < 0) throw ConfigError("trainer.checkpoint_every: must be >= 0");
    if (threads < 0) throw ConfigError("trainer.threads: must be >= 0");
    if (precision != "float32" && precision != "float64")
        throw ConfigError("trainer.precision: expected float32 or float64, got '" + precision + "'");
    if (!(theta > 0.0) || !(theta < 1.0)) throw ConfigError("voicing.theta: outside (0, 1)");
    if (voicing_epochs < 1) throw ConfigError("voicing.epochs: must be >= 1");
    if (!(voicing_lr > 0)) throw ConfigError("voicing.lr: must be positive");
    if (harmonics < 1 || harmonics > 128) throw ConfigError("synth.harmonics: outside [1, 128]");
    if (fit_epochs < 1) throw ConfigError("synth.fit_epochs: must be >= 1");
    if (!(fit_lr > 0)) throw ConfigError("synth.fit_lr: must be positive");
    if (lambda_smooth < 0) throw ConfigError("synth.lambda_smooth: must be >= 0");
    if (!(threshold_cents > 0)) throw ConfigError("eval.threshold_cents: must be positive");
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig cfg;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config: " + path);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError("config line " + std::to_string(lineno) + ": malformed section");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (section.empty())
                throw ConfigError("config line " + std::to_string(lineno) + ": key '" + key +
                                  "' outside any [section]");
            apply(cfg, section + "." + key, value);
        }
    }
    for (const std::string& ov : overrides) {
        const std::size_t eq = ov.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + ov + "': expected section.key=value");
        apply(cfg, trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

void echo_config(const RunConfig& cfg, std::ostream& os) {
    for (const auto& [key, field] : field_table()) os << key << "=" << field.get(cfg) << "\n";
}

}  // namespace selfpitch
