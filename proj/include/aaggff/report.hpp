#pragma once

// Run outputs. Per run, under <out>/runs/<run_id>/:
//
//   rounds.jsonl   header line, one line per round, evaluation line
//   summary.json   metrics recomputed from rounds.jsonl alone
//   objective.dat  "round cumulative_objective"
//   entropy.dat    "round decision_entropy" (entropy of p^(t+1), nats)
//
// and once per suite, <out>/suite.csv with one row per (experiment, seed).
// Gini is raw in JSON and multiplied by 100 in the CSV. Every file carries
// schema_version. Wall-clock durations are kept out of the round log so
// reruns are byte-identical.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aaggff/config.hpp"
#include "aaggff/error.hpp"
#include "aaggff/federation.hpp"
#include "aaggff/metrics.hpp"
#include "aaggff/parallel.hpp"

namespace aaggff {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

inline const std::vector<std::string>& suite_csv_columns() {
    static const std::vector<std::string> columns{
        "schema_version", "run_id",  "method",     "setting",   "k",        "t",
        "c",              "seed",    "status",     "avg",       "worst10",  "best10",
        "gini_x100",      "delta_ag", "regret",    "regret_observed", "regret_bound",
        "bound_satisfied"};
    return columns;
}

namespace detail {

inline Json to_json(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline Vector vector_from_json(const Json& j) {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

/// NaN and infinities become null.
inline Json number(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json config_json(const FederationConfig& c) {
    return Json{{"k", c.k},
                {"t", c.t_rounds},
                {"c", c.c},
                {"e", c.e},
                {"b", c.b},
                {"lr", c.lr},
                {"lr_decay", c.lr_decay},
                {"lr_decay_step", c.lr_decay_step},
                {"weight_decay", c.weight_decay},
                {"method", to_string(c.method)},
                {"setting", to_string(c.setting)},
                {"seed", c.seed},
                {"cdf", {{"kind", to_string(c.cdf.kind)}, {"scale", c.cdf.scale}, {"shape", c.cdf.shape}}},
                {"data",
                 {{"input_dim", c.data.input_dim},
                  {"num_classes", c.data.num_classes},
                  {"samples_mean", c.data.samples_mean},
                  {"samples_spread", c.data.samples_spread},
                  {"concentration", c.data.concentration},
                  {"feature_shift", c.data.feature_shift},
                  {"class_separation", c.data.class_separation},
                  {"test_fraction", c.data.test_fraction}}},
                {"q", c.q},
                {"q_afl", c.q_afl},
                {"term_lambda", c.term_lambda},
                {"propfair_m", c.propfair_m}};
}

inline RoundRecord record_from_json(const Json& j) {
    RoundRecord rec;
    rec.round = j.at("round").get<int>();
    rec.sampled = j.at("sampled").get<IndexSet>();
    rec.losses = vector_from_json(j.at("losses"));
    rec.responses = vector_from_json(j.at("responses"));
    if (j.contains("estimated_responses")) rec.estimated_responses = vector_from_json(j.at("estimated_responses"));
    rec.played = vector_from_json(j.at("played"));
    rec.decision = vector_from_json(j.at("decision"));
    rec.weights = vector_from_json(j.at("weights"));
    rec.decision_loss = j.at("decision_loss").is_null() ? std::nan("") : j.at("decision_loss").get<double>();
    rec.lr = j.at("lr").get<double>();
    rec.events = j.at("events").get<std::vector<std::string>>();
    return rec;
}

/// Shortest text that reads back to the same double.
inline std::string format_number(double x) { return Json(x).dump(); }

}  // namespace detail

/// JSON-lines round log: header, rounds, then either an evaluation line or
/// a failure line.
inline std::vector<Json> round_log(const std::string& run_id, const RunResult& result) {
    std::vector<Json> lines;
    lines.push_back(Json{{"type", "header"},
                         {"schema_version", kSchemaVersion},
                         {"run_id", run_id},
                         {"config", detail::config_json(result.config)},
                         {"range", {{"c1", result.range.c1}, {"c2", result.range.c2}}},
                         {"lipschitz", result.lipschitz},
                         {"sample_sizes", result.sample_sizes}});
    for (const auto& rec : result.records) {
        Json line{{"type", "round"},
                  {"round", rec.round},
                  {"sampled", rec.sampled},
                  {"losses", detail::to_json(rec.losses)},
                  {"responses", detail::to_json(rec.responses)}};
        if (rec.estimated_responses.size()) line["estimated_responses"] = detail::to_json(rec.estimated_responses);
        line["played"] = detail::to_json(rec.played);
        line["decision"] = detail::to_json(rec.decision);
        line["weights"] = detail::to_json(rec.weights);
        line["decision_loss"] = detail::number(rec.decision_loss);
        line["system_loss"] = detail::number(-rec.decision_loss);
        line["lr"] = rec.lr;
        line["events"] = rec.events;
        lines.push_back(std::move(line));
    }
    if (result.evaluation) {
        lines.push_back(Json{{"type", "evaluation"},
                             {"test_accuracy", result.evaluation->test_accuracy},
                             {"test_loss", result.evaluation->test_loss},
                             {"train_loss", result.evaluation->train_loss}});
    }
    if (result.failure) lines.push_back(Json{{"type", "failure"}, {"error", *result.failure}});
    return lines;
}

/// Summary built from a round log alone.
inline Json summarize(const std::vector<Json>& lines) {
    if (lines.empty() || lines.front().value("type", "") != "header")
        throw InvalidInput("summarize: round log must start with a header line");
    const Json& header = lines.front();
    const Json& cfg = header.at("config");

    std::vector<RoundRecord> records;
    std::optional<Json> evaluation;
    std::optional<std::string> failure;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto type = lines[i].at("type").get<std::string>();
        if (type == "round") records.push_back(detail::record_from_json(lines[i]));
        else if (type == "evaluation") evaluation = lines[i];
        else if (type == "failure") failure = lines[i].at("error").get<std::string>();
    }

    Json s{{"schema_version", kSchemaVersion},
           {"run_id", header.at("run_id")},
           {"method", cfg.at("method")},
           {"setting", cfg.at("setting")},
           {"k", cfg.at("k")},
           {"t", cfg.at("t")},
           {"c", cfg.at("c")},
           {"seed", cfg.at("seed")},
           {"status", failure ? "failed" : "ok"},
           {"error", failure ? Json(*failure) : Json(nullptr)},
           {"rounds_completed", records.size()},
           {"lipschitz", header.at("lipschitz")}};

    Json metrics{{"avg", nullptr}, {"worst10", nullptr}, {"best10", nullptr},
                 {"gini", nullptr}, {"delta_ag", nullptr}, {"test_loss_avg", nullptr}};
    if (evaluation) {
        const PerformanceDistribution acc(evaluation->at("test_accuracy").get<std::vector<double>>());
        const auto tails = worst_best(acc, 0.1);
        metrics["avg"] = acc.mean();
        metrics["worst10"] = tails.worst;
        metrics["best10"] = tails.best;
        metrics["gini"] = acc.mean() > 0.0 ? Json(gini(acc)) : Json(nullptr);
        metrics["delta_ag"] = accuracy_parity_gap(acc);
        metrics["test_loss_avg"] = PerformanceDistribution(evaluation->at("test_loss").get<std::vector<double>>()).mean();
    }
    s["metrics"] = metrics;

    const auto method = parse_method(cfg.at("method").get<std::string>()).value();
    const auto k = cfg.at("k").get<std::size_t>();
    const int t = static_cast<int>(records.size());
    s["regret"] = nullptr;
    s["regret_observed"] = nullptr;
    s["regret_bound"] = nullptr;
    s["bound_satisfied"] = nullptr;
    s["cumulative_objective"] = nullptr;
    if (!records.empty()) {
        std::vector<SimplexVector> played;
        std::vector<Vector> learner;
        std::vector<Vector> observed;
        bool partial = false;
        for (const auto& rec : records) {
            played.emplace_back(rec.played);
            learner.push_back(rec.learner_response());
            Vector zero_filled = Vector::Zero(static_cast<Eigen::Index>(k));
            for (std::size_t a = 0; a < rec.sampled.size(); ++a)
                zero_filled(static_cast<Eigen::Index>(rec.sampled[a])) = rec.responses(static_cast<Eigen::Index>(a));
            observed.push_back(std::move(zero_filled));
            partial = partial || rec.estimated_responses.size() > 0;
        }
        try {
            const double r = regret(played, learner);
            s["regret"] = detail::number(r);
            if (partial) s["regret_observed"] = detail::number(regret(played, observed));
            const double l = header.at("lipschitz").get<double>();
            if (method == Method::AaggffS) s["regret_bound"] = ons_regret_bound(l, k, t);
            if (method == Method::AaggffD) s["regret_bound"] = ftrl_regret_bound(l, k, t);
            if (!s["regret_bound"].is_null()) s["bound_satisfied"] = r <= s["regret_bound"].get<double>();
        } catch (const Error& ex) {
            s["regret_error"] = ex.what();
        }
        s["cumulative_objective"] = cumulative_objective(records);
        s["final_decision_entropy"] = decision_entropy(records.back().decision);
    }
    s["regret_estimated_from_dr"] = records.empty() ? false : records.front().estimated_responses.size() > 0;
    return s;
}

inline std::string to_jsonl(const std::vector<Json>& lines) {
    std::string out;
    for (const auto& line : lines) {
        out += line.dump();
        out += '\n';
    }
    return out;
}

inline std::vector<Json> parse_jsonl(std::istream& in) {
    std::vector<Json> lines;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(Json::parse(line));
    return lines;
}

/// Two-column plot data from the round log.
inline std::string objective_dat(const std::vector<Json>& lines) {
    std::string out = "# schema_version " + std::to_string(kSchemaVersion) + "\n# round cumulative_objective\n";
    double total = 0.0;
    for (const auto& line : lines) {
        if (line.at("type") != "round") continue;
        const auto rec = detail::record_from_json(line);
        total += cumulative_objective({rec});
        out += std::to_string(rec.round) + " " + detail::format_number(total) + "\n";
    }
    return out;
}

inline std::string entropy_dat(const std::vector<Json>& lines) {
    std::string out = "# schema_version " + std::to_string(kSchemaVersion) + "\n# round decision_entropy\n";
    for (const auto& line : lines) {
        if (line.at("type") != "round") continue;
        const auto rec = detail::record_from_json(line);
        out += std::to_string(rec.round) + " " + detail::format_number(decision_entropy(rec.decision)) + "\n";
    }
    return out;
}

inline std::string csv_row(const Json& s) {
    auto cell = [](const Json& v) -> std::string {
        if (v.is_null()) return "";
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number_float()) return detail::format_number(v.get<double>());
        return v.dump();
    };
    const Json& m = s.at("metrics");
    const Json gini_x100 = m.at("gini").is_null() ? Json(nullptr) : Json(100.0 * m.at("gini").get<double>());
    const std::vector<Json> cells{s.at("schema_version"), s.at("run_id"), s.at("method"), s.at("setting"),
                                  s.at("k"), s.at("t"), s.at("c"), s.at("seed"), s.at("status"),
                                  m.at("avg"), m.at("worst10"), m.at("best10"), gini_x100, m.at("delta_ag"),
                                  s.at("regret"), s.at("regret_observed"), s.at("regret_bound"),
                                  s.at("bound_satisfied")};
    std::string row;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) row += ',';
        row += cell(cells[i]);
    }
    return row;
}

struct SuiteOutcome {
    int exit_code = 0;  ///< 0 all runs ok, 2 some run failed
    std::vector<Json> summaries;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out << text;
}

/// Runs every (experiment, seed) pair, `jobs` at a time, and writes all
/// outputs. `on_done` is called from worker threads as runs finish.
inline SuiteOutcome run_suite(const ExperimentSuite& suite,
                              std::function<void(const Json&)> on_done = {}) {
    namespace fs = std::filesystem;
    const auto runs = suite.runs();
    if (runs.empty()) throw ConfigError("experiments", "suite has no runs");
    const fs::path root(suite.out_dir);
    fs::create_directories(root / "runs");

    SuiteOutcome outcome;
    outcome.summaries.resize(runs.size());
    parallel_for(runs.size(), suite.jobs, [&](std::size_t i) {
        const auto& run = runs[i];
        RunResult result;
        try {
            result = run_federation(run.config);
        } catch (const Error& ex) {
            result.config = run.config;
            result.failure = ex.what();
        }
        const auto lines = round_log(run.run_id, result);
        const fs::path dir = root / "runs" / run.run_id;
        fs::create_directories(dir);
        write_text(dir / "rounds.jsonl", to_jsonl(lines));
        Json summary = summarize(lines);
        write_text(dir / "summary.json", summary.dump(2) + "\n");
        write_text(dir / "objective.dat", objective_dat(lines));
        write_text(dir / "entropy.dat", entropy_dat(lines));
        if (on_done) on_done(summary);
        outcome.summaries[i] = std::move(summary);
    });

    std::string csv;
    for (std::size_t i = 0; i < suite_csv_columns().size(); ++i) {
        if (i) csv += ',';
        csv += suite_csv_columns()[i];
    }
    csv += '\n';
    for (const auto& s : outcome.summaries) {
        csv += csv_row(s) + "\n";
        if (s.at("status") != "ok") outcome.exit_code = 2;
    }
    write_text(root / "suite.csv", csv);
    return outcome;
}

}  // namespace aaggff
