#pragma once

// Experiment files: flat `key = value` lines, '#' comments.
//
//   out_dir = results            # suite keys
//   seeds = 1,2,3
//   jobs = 2
//   k = 20                       # experiment defaults shared by all sections
//
//   [experiment silo_ons]        # one section per experiment
//   method = aaggff-s
//   cdf.kind = weibull
//   data.concentration = 0.1
//
// With no section, the top-level keys describe a single experiment named
// "default". Required per experiment: k, t, method.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "aaggff/error.hpp"
#include "aaggff/federation.hpp"

namespace aaggff {

struct Experiment {
    std::string name;
    FederationConfig config;
};

struct RunSpec {
    std::string run_id;
    FederationConfig config;
};

struct ExperimentSuite {
    std::vector<Experiment> experiments;
    std::string out_dir = "results";
    std::vector<std::uint64_t> seeds;  ///< overrides each experiment's seed when nonempty
    std::size_t jobs = 1;

    /// One run per (experiment, seed) pair.
    std::vector<RunSpec> runs() const {
        std::vector<RunSpec> out;
        for (const auto& ex : experiments) {
            if (seeds.empty()) {
                out.push_back({ex.name + "_s" + std::to_string(ex.config.seed), ex.config});
                continue;
            }
            for (auto seed : seeds) {
                RunSpec run{ex.name + "_s" + std::to_string(seed), ex.config};
                run.config.seed = seed;
                out.push_back(std::move(run));
            }
        }
        return out;
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

inline double parse_double(const std::string& field, const std::string& text) {
    std::istringstream in(text);
    double v = 0.0;
    in >> v;
    if (in.fail() || !in.eof()) throw ConfigError(field, "expected a number, got '" + text + "'");
    return v;
}

inline long long parse_int(const std::string& field, const std::string& text) {
    long long v = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ConfigError(field, "expected an integer, got '" + text + "'");
    return v;
}

inline std::uint64_t parse_seed(const std::string& field, const std::string& text) {
    std::uint64_t v = 0;
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ConfigError(field, "expected a nonnegative integer, got '" + text + "'");
    return v;
}

inline std::size_t parse_count(const std::string& field, const std::string& text, long long min) {
    const auto v = parse_int(field, text);
    if (v < min) throw ConfigError(field, "must be >= " + std::to_string(min));
    return static_cast<std::size_t>(v);
}

using KeyValues = std::map<std::string, std::string>;

inline FederationConfig build_config(const KeyValues& kv) {
    for (const char* required : {"k", "t", "method"})
        if (!kv.count(required)) throw ConfigError(required, "missing required field");

    FederationConfig cfg;
    const auto method = parse_method(kv.at("method"));
    if (!method) throw ConfigError("method", "unknown method '" + kv.at("method") + "'");
    cfg.method = *method;
    cfg.setting = cfg.method == Method::AaggffD ? Setting::CrossDevice : Setting::CrossSilo;

    if (auto it = kv.find("cdf.kind"); it != kv.end()) {
        const auto kind = parse_cdf_kind(it->second);
        if (!kind) throw ConfigError("cdf.kind", "unknown cdf '" + it->second + "'");
        cfg.cdf = CdfSpec::defaults(*kind);
    }
    std::optional<double> c1;
    std::optional<double> c2;

    for (const auto& [key, value] : kv) {
        if (key == "method" || key == "cdf.kind") continue;
        if (key == "k") cfg.k = parse_count(key, value, 2);
        else if (key == "t") cfg.t_rounds = static_cast<int>(parse_count(key, value, 1));
        else if (key == "c") cfg.c = parse_double(key, value);
        else if (key == "e") cfg.e = static_cast<int>(parse_count(key, value, 1));
        else if (key == "b") cfg.b = parse_count(key, value, 1);
        else if (key == "lr") cfg.lr = parse_double(key, value);
        else if (key == "lr_decay") cfg.lr_decay = parse_double(key, value);
        else if (key == "lr_decay_step") cfg.lr_decay_step = static_cast<int>(parse_count(key, value, 1));
        else if (key == "weight_decay") cfg.weight_decay = parse_double(key, value);
        else if (key == "seed") cfg.seed = parse_seed(key, value);
        else if (key == "threads") cfg.threads = parse_count(key, value, 1);
        else if (key == "q") cfg.q = parse_double(key, value);
        else if (key == "q_afl") cfg.q_afl = parse_double(key, value);
        else if (key == "term_lambda") cfg.term_lambda = parse_double(key, value);
        else if (key == "propfair_m") cfg.propfair_m = parse_double(key, value);
        else if (key == "setting") {
            const auto s = parse_setting(value);
            if (!s) throw ConfigError(key, "expected cross_silo or cross_device, got '" + value + "'");
            cfg.setting = *s;
        }
        else if (key == "range.c1") c1 = parse_double(key, value);
        else if (key == "range.c2") c2 = parse_double(key, value);
        else if (key == "cdf.scale") cfg.cdf.scale = parse_double(key, value);
        else if (key == "cdf.shape") cfg.cdf.shape = parse_double(key, value);
        else if (key == "data.input_dim") cfg.data.input_dim = parse_count(key, value, 1);
        else if (key == "data.num_classes") cfg.data.num_classes = parse_count(key, value, 2);
        else if (key == "data.samples_mean") cfg.data.samples_mean = parse_double(key, value);
        else if (key == "data.samples_spread") cfg.data.samples_spread = parse_double(key, value);
        else if (key == "data.concentration") cfg.data.concentration = parse_double(key, value);
        else if (key == "data.feature_shift") cfg.data.feature_shift = parse_double(key, value);
        else if (key == "data.class_separation") cfg.data.class_separation = parse_double(key, value);
        else if (key == "data.test_fraction") cfg.data.test_fraction = parse_double(key, value);
        else throw ConfigError(key, "unknown field");
    }
    if (c1 || c2) {
        if (!(c1 && c2)) throw ConfigError(c1 ? "range.c2" : "range.c1", "range needs both c1 and c2");
        cfg.range = ResponseRange{*c1, *c2};
    }
    cfg.validate();
    return cfg;
}

}  // namespace detail

/// Parses and validates a suite. Errors name the offending field.
inline ExperimentSuite parse_config_text(const std::string& text) {
    ExperimentSuite suite;
    detail::KeyValues defaults;
    std::vector<std::pair<std::string, detail::KeyValues>> sections;
    std::set<std::string> names;
    bool have_suite_keys_done = false;

    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = detail::trim(line);
        if (body.empty()) continue;
        const std::string where = "line " + std::to_string(line_no);
        if (body.front() == '[') {
            if (body.back() != ']') throw ConfigError(where, "unterminated section header");
            const std::string header = detail::trim(std::string_view(body).substr(1, body.size() - 2));
            const std::string prefix = "experiment";
            if (header.rfind(prefix, 0) != 0) throw ConfigError(where, "expected [experiment <name>]");
            const std::string name = detail::trim(std::string_view(header).substr(prefix.size()));
            if (name.empty()) throw ConfigError(where, "experiment needs a name");
            if (!names.insert(name).second) throw ConfigError(where, "duplicate experiment '" + name + "'");
            sections.emplace_back(name, detail::KeyValues{});
            have_suite_keys_done = true;
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigError(where, "expected key = value");
        const std::string key = detail::trim(std::string_view(body).substr(0, eq));
        const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
        if (key.empty()) throw ConfigError(where, "empty key");
        if (value.empty()) throw ConfigError(key, "empty value");

        if (key == "out_dir" || key == "seeds" || key == "jobs") {
            if (have_suite_keys_done) throw ConfigError(key, "suite keys must precede experiment sections");
            if (key == "out_dir") {
                suite.out_dir = value;
            } else if (key == "jobs") {
                suite.jobs = detail::parse_count(key, value, 1);
            } else {
                std::istringstream list(value);
                std::string item;
                std::set<std::uint64_t> seen;
                while (std::getline(list, item, ',')) {
                    const auto seed = detail::parse_seed(key, detail::trim(item));
                    if (!seen.insert(seed).second) throw ConfigError(key, "duplicate seed " + std::to_string(seed));
                    suite.seeds.push_back(seed);
                }
                if (suite.seeds.empty()) throw ConfigError(key, "empty seed list");
            }
            continue;
        }
        auto& target = sections.empty() ? defaults : sections.back().second;
        if (target.count(key)) throw ConfigError(key, "given twice");
        target[key] = value;
    }

    if (sections.empty()) sections.emplace_back("default", detail::KeyValues{});
    for (auto& [name, kv] : sections) {
        detail::KeyValues merged = defaults;
        for (auto& [key, value] : kv) merged[key] = value;
        suite.experiments.push_back({name, detail::build_config(merged)});
    }
    return suite;
}

inline ExperimentSuite parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("path", "cannot open config file '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

}  // namespace aaggff
