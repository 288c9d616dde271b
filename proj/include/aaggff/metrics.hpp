#pragma once

// Regret against the best fixed decision in hindsight, and client-level
// fairness statistics of a performance distribution.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "aaggff/aggregators.hpp"
#include "aaggff/decision.hpp"
#include "aaggff/error.hpp"
#include "aaggff/federation.hpp"
#include "aaggff/simplex.hpp"

namespace aaggff {

/// Cumulative decision loss of the played decisions minus that of `best`.
inline double regret_against(const std::vector<SimplexVector>& decisions,
                             const std::vector<Vector>& responses, const SimplexVector& best) {
    if (decisions.empty() || decisions.size() != responses.size())
        throw InvalidInput("regret: need equal-length, nonempty decision and response lists");
    double total = 0.0;
    for (std::size_t t = 0; t < decisions.size(); ++t)
        total += decision_loss(decisions[t], responses[t]) - decision_loss(best, responses[t]);
    return total;
}

inline double regret(const std::vector<SimplexVector>& decisions, const std::vector<Vector>& responses) {
    if (decisions.empty() || decisions.size() != responses.size())
        throw InvalidInput("regret: need equal-length, nonempty decision and response lists");
    return regret_against(decisions, responses, hindsight_best(responses));
}

struct PerformanceDistribution {
    std::vector<double> values;
    std::vector<std::size_t> ids;

    explicit PerformanceDistribution(std::vector<double> v, std::vector<std::size_t> client_ids = {})
        : values(std::move(v)), ids(std::move(client_ids)) {
        if (values.empty()) throw InvalidInput("performance distribution is empty");
        for (double x : values)
            if (!std::isfinite(x)) throw InvalidInput("performance distribution has non-finite entries");
        if (ids.empty()) {
            ids.resize(values.size());
            std::iota(ids.begin(), ids.end(), std::size_t{0});
        }
        if (ids.size() != values.size()) throw InvalidInput("performance ids do not match values");
    }

    double mean() const {
        return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    }
};

/// Population Gini coefficient: sum_ij |x_i - x_j| / (2 n^2 mean), computed
/// from the sorted values in O(n log n).
inline double gini(const PerformanceDistribution& perf) {
    std::vector<double> x = perf.values;
    for (double v : x)
        if (v < 0.0) throw InvalidInput("gini: performances must be nonnegative");
    const double total = std::accumulate(x.begin(), x.end(), 0.0);
    if (!(total > 0.0)) throw InvalidInput("gini: undefined for an all-zero distribution");
    std::sort(x.begin(), x.end());
    const auto n = static_cast<double>(x.size());
    double weighted = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * x[i];
    return weighted / (n * total);
}

struct TailMeans {
    double worst = 0.0;
    double best = 0.0;
};

/// Means of the bottom and top ceil(fraction * n) performances.
inline TailMeans worst_best(const PerformanceDistribution& perf, double fraction = 0.1) {
    if (!(fraction > 0.0 && fraction <= 0.5)) throw InvalidInput("worst_best: fraction must be in (0, 0.5]");
    std::vector<std::size_t> order(perf.values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (perf.values[a] != perf.values[b]) return perf.values[a] < perf.values[b];
        return perf.ids[a] < perf.ids[b];
    });
    const auto n = order.size();
    const auto m = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
    TailMeans out;
    for (std::size_t a = 0; a < m; ++a) {
        out.worst += perf.values[order[a]];
        out.best += perf.values[order[n - 1 - a]];
    }
    out.worst /= static_cast<double>(m);
    out.best /= static_cast<double>(m);
    return out;
}

inline double accuracy_parity_gap(const PerformanceDistribution& perf) {
    const auto [lo, hi] = std::minmax_element(perf.values.begin(), perf.values.end());
    return *hi - *lo;
}

/// sum_t sum_{i in S_t} p_i^(t) F_i(theta^(t)) with p^(t) the played decision.
inline double cumulative_objective(const std::vector<RoundRecord>& records) {
    if (records.empty()) throw InvalidInput("cumulative_objective: no records");
    double total = 0.0;
    for (const auto& rec : records) {
        for (std::size_t a = 0; a < rec.sampled.size(); ++a)
            total += rec.played(static_cast<Eigen::Index>(rec.sampled[a])) * rec.losses(static_cast<Eigen::Index>(a));
    }
    return total;
}

/// log(1 + <p, transformed losses>); the negative of the decision loss.
inline double system_loss(const SimplexVector& p, const Vector& transformed_losses) {
    if ((transformed_losses.array() < 0.0).any()) throw InvalidInput("system_loss: losses must be nonnegative");
    return -decision_loss(p, transformed_losses);
}

/// Shannon entropy of a decision, in nats.
inline double decision_entropy(const Vector& p) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i)
        if (p(i) > 0.0) h -= p(i) * std::log(p(i));
    return h;
}

/// Regret upper bounds of the two learners.
inline double ons_regret_bound(double l_inf, std::size_t k, int t) {
    const auto kd = static_cast<double>(k);
    return 2.0 * l_inf * kd * (1.0 + std::log(1.0 + static_cast<double>(t) / (16.0 * kd)));
}

inline double ftrl_regret_bound(double l_inf, std::size_t k, int t) {
    return 2.0 * l_inf * std::sqrt(static_cast<double>(t) * std::log(static_cast<double>(k)));
}

}  // namespace aaggff
