#ifndef CBMA_CONFIG_HPP
#define CBMA_CONFIG_HPP

#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cbma/errors.hpp"

namespace cbma {

// Flat run configuration shared by all CLI subcommands. Precedence:
// flags > config file > environment (CBMA_SEED, seed only) > defaults.
struct RunConfig {
    double alpha = 0.0; // required, no default
    long n = 100;
    int reps = 50;
    long draws = 4000;
    long grid_points = 200;
    double grid_expand = 0.5;
    unsigned long long seed = 0;
    int threads = 0; // 0 = machine parallelism
    std::string out = ".";
    std::string csv;
    std::string response;
    std::string test_x;
    int models = 4;
    double theta = 1.0;
    std::vector<long> n_list = {50, 200, 800};

    std::map<std::string, std::string> echo; // effective values, for summary.json
};

namespace detail {

inline const std::vector<std::string>& valid_config_keys() {
    static const std::vector<std::string> keys = {
        "alpha",  "n",     "reps",  "draws", "grid-points", "grid-expand", "seed",
        "threads", "out",  "csv",   "response", "test-x",   "models",      "theta",
        "n-list"};
    return keys;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// `key = value` lines; '#' starts a comment. Line numbers are kept so
// malformed values can be reported precisely.
inline std::map<std::string, std::pair<std::string, int>> read_config_file(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("config: cannot open " + path);
    std::map<std::string, std::pair<std::string, int>> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error("config: line " + std::to_string(lineno) +
                               ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        out[key] = {value, lineno};
    }
    return out;
}

inline void check_known_key(const std::string& key) {
    for (const auto& k : valid_config_keys())
        if (k == key) return;
    std::string valid;
    for (const auto& k : valid_config_keys()) valid += (valid.empty() ? "" : ", ") + k;
    throw config_error("config: unknown key '" + key + "' (valid keys: " + valid + ")");
}

template <typename T>
T parse_number(const std::string& value, const std::string& key, int lineno) {
    std::istringstream ss(value);
    T out{};
    ss >> out;
    if (ss.fail() || !ss.eof()) {
        std::string where = lineno > 0 ? " at line " + std::to_string(lineno) : "";
        throw config_error("config: malformed numeric value '" + value + "' for '" + key + "'" +
                           where);
    }
    return out;
}

inline std::vector<long> parse_long_list(const std::string& value, const std::string& key,
                                         int lineno) {
    std::vector<long> out;
    std::stringstream ss(value);
    std::string field;
    while (std::getline(ss, field, ','))
        out.push_back(parse_number<long>(trim(field), key, lineno));
    if (out.empty()) throw config_error("config: empty list for '" + key + "'");
    return out;
}

} // namespace detail

// Merges a config file (optional) with flag overrides and validates every
// numeric field. Flags win over file values; CBMA_SEED is the lowest-
// precedence seed source.
inline RunConfig parse_config(const std::optional<std::string>& file_path,
                              const std::map<std::string, std::string>& flag_overrides) {
    std::map<std::string, std::pair<std::string, int>> merged; // value, line (0 for flags)
    if (const char* env_seed = std::getenv("CBMA_SEED"); env_seed != nullptr)
        merged["seed"] = {env_seed, 0};
    if (file_path) {
        for (const auto& [key, entry] : detail::read_config_file(*file_path)) {
            detail::check_known_key(key);
            merged[key] = entry;
        }
    }
    for (const auto& [key, value] : flag_overrides) {
        detail::check_known_key(key);
        merged[key] = {value, 0};
    }

    RunConfig config;
    bool have_alpha = false;
    for (const auto& [key, entry] : merged) {
        const auto& [value, lineno] = entry;
        if (key == "alpha") {
            config.alpha = detail::parse_number<double>(value, key, lineno);
            have_alpha = true;
        } else if (key == "n") {
            config.n = detail::parse_number<long>(value, key, lineno);
        } else if (key == "reps") {
            config.reps = detail::parse_number<int>(value, key, lineno);
        } else if (key == "draws") {
            config.draws = detail::parse_number<long>(value, key, lineno);
        } else if (key == "grid-points") {
            config.grid_points = detail::parse_number<long>(value, key, lineno);
        } else if (key == "grid-expand") {
            config.grid_expand = detail::parse_number<double>(value, key, lineno);
        } else if (key == "seed") {
            config.seed = detail::parse_number<unsigned long long>(value, key, lineno);
        } else if (key == "threads") {
            config.threads = detail::parse_number<int>(value, key, lineno);
        } else if (key == "out") {
            config.out = value;
        } else if (key == "csv") {
            config.csv = value;
        } else if (key == "response") {
            config.response = value;
        } else if (key == "test-x") {
            config.test_x = value;
        } else if (key == "models") {
            config.models = detail::parse_number<int>(value, key, lineno);
        } else if (key == "theta") {
            config.theta = detail::parse_number<double>(value, key, lineno);
        } else if (key == "n-list") {
            config.n_list = detail::parse_long_list(value, key, lineno);
        }
    }

    if (!have_alpha) throw config_error("config: missing required value 'alpha'");
    if (!(config.alpha > 0.0 && config.alpha < 1.0))
        throw config_error("config: 'alpha' must lie in (0, 1)");
    if (config.draws < 100) throw config_error("config: 'draws' must be >= 100");
    if (config.grid_points < 10) throw config_error("config: 'grid-points' must be >= 10");
    if (config.n < 4) throw config_error("config: 'n' must be >= 4");
    if (config.reps < 1) throw config_error("config: 'reps' must be >= 1");
    if (!(config.grid_expand > 0.0)) throw config_error("config: 'grid-expand' must be > 0");
    if (config.threads < 0) throw config_error("config: 'threads' must be >= 0");

    for (const auto& [key, entry] : merged) config.echo[key] = entry.first;
    config.echo["alpha"] = std::to_string(config.alpha);
    return config;
}

} // namespace cbma

#endif
