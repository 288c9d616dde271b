// aaggff run <config-path> [--out DIR] [--seeds a,b,c] [--jobs N] [--validate-only]
//
// Exit codes: 0 success, 1 config error, 2 run failure.
// AAGGFF_LOG_LEVEL: quiet | error | info (default) | debug.

#include <cstdlib>
#include <iostream>
#include <cstdint>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aaggff/aaggff.hpp"

namespace {

enum class LogLevel { Quiet, Error, Info, Debug };

LogLevel log_level_from_env() {
    const char* raw = std::getenv("AAGGFF_LOG_LEVEL");
    const std::string v = raw ? raw : "info";
    if (v == "quiet") return LogLevel::Quiet;
    if (v == "error") return LogLevel::Error;
    if (v == "debug") return LogLevel::Debug;
    return LogLevel::Info;
}

std::mutex log_mutex;

void log(LogLevel level, LogLevel at, const std::string& msg) {
    if (static_cast<int>(level) < static_cast<int>(at)) return;
    std::lock_guard lock(log_mutex);
    std::cerr << "[aaggff] " << msg << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    const LogLevel level = log_level_from_env();

    CLI::App app{"Adaptive aggregation for fair federated learning: simulation runner"};
    app.require_subcommand(1);
    auto* run = app.add_subcommand("run", "Run every experiment of a config file");
    std::string config_path;
    std::string out_dir;
    std::vector<std::uint64_t> seeds;
    std::size_t jobs = 0;
    bool validate_only = false;
    run->add_option("config", config_path, "Experiment config file")->required();
    run->add_option("--out", out_dir, "Output directory (overrides out_dir)");
    run->add_option("--seeds", seeds, "Comma-separated seeds (overrides seeds)")->delimiter(',');
    run->add_option("--jobs", jobs, "Runs executed concurrently (overrides jobs)")->check(CLI::PositiveNumber);
    run->add_flag("--validate-only", validate_only, "Parse and validate, then exit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    aaggff::ExperimentSuite suite;
    try {
        suite = aaggff::parse_config(config_path);
        if (!out_dir.empty()) suite.out_dir = out_dir;
        if (!seeds.empty()) {
            std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
            if (distinct.size() != seeds.size()) throw aaggff::ConfigError("--seeds", "duplicate seed");
            suite.seeds = seeds;
        }
        if (jobs > 0) suite.jobs = jobs;
    } catch (const aaggff::ConfigError& e) {
        log(level, LogLevel::Error, std::string("config error: ") + e.what());
        return 1;
    }

    const auto runs = suite.runs();
    log(level, LogLevel::Info,
        "config ok: " + std::to_string(suite.experiments.size()) + " experiment(s), " +
            std::to_string(runs.size()) + " run(s)");
    if (validate_only) return 0;

    try {
        const auto outcome = aaggff::run_suite(suite, [&](const aaggff::Json& s) {
            std::string msg = "run " + s.at("run_id").get<std::string>() + ": " + s.at("status").get<std::string>();
            if (!s.at("error").is_null()) msg += " (" + s.at("error").get<std::string>() + ")";
            const auto& m = s.at("metrics");
            if (!m.at("avg").is_null())
                msg += " avg=" + std::to_string(m.at("avg").get<double>()) +
                       " worst10=" + std::to_string(m.at("worst10").get<double>());
            log(level, s.at("status") == "ok" ? LogLevel::Info : LogLevel::Error, msg);
            if (!s.at("regret").is_null())
                log(level, LogLevel::Debug, "  regret=" + s.at("regret").dump() + " bound=" + s.at("regret_bound").dump());
        });
        log(level, LogLevel::Info, "wrote " + suite.out_dir + "/suite.csv");
        return outcome.exit_code;
    } catch (const aaggff::ConfigError& e) {
        log(level, LogLevel::Error, std::string("config error: ") + e.what());
        return 1;
    } catch (const std::exception& e) {
        log(level, LogLevel::Error, std::string("run failure: ") + e.what());
        return 2;
    }
}
