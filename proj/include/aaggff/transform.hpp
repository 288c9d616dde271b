#pragma once

// Bounded responses: local losses are centered by their mean over the
// available clients and pushed through a CDF into [c1, c2].

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aaggff/error.hpp"
#include "aaggff/simplex.hpp"

namespace aaggff {

enum class CdfKind { Weibull, Frechet, Gumbel, Exponential, Logistic, Normal };

inline std::string_view to_string(CdfKind kind) {
    switch (kind) {
        case CdfKind::Weibull: return "weibull";
        case CdfKind::Frechet: return "frechet";
        case CdfKind::Gumbel: return "gumbel";
        case CdfKind::Exponential: return "exponential";
        case CdfKind::Logistic: return "logistic";
        case CdfKind::Normal: return "normal";
    }
    return "unknown";
}

inline std::optional<CdfKind> parse_cdf_kind(std::string_view name) {
    for (auto kind : {CdfKind::Weibull, CdfKind::Frechet, CdfKind::Gumbel,
                      CdfKind::Exponential, CdfKind::Logistic, CdfKind::Normal}) {
        if (to_string(kind) == name) return kind;
    }
    return std::nullopt;
}

struct CdfSpec {
    CdfKind kind = CdfKind::Weibull;
    double scale = 1.0;  ///< alpha
    double shape = 2.0;  ///< beta; unused by the exponential law

    static CdfSpec defaults(CdfKind kind) {
        return {kind, 1.0, kind == CdfKind::Weibull ? 2.0 : 1.0};
    }

    void validate() const {
        if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidInput("cdf scale must be > 0");
        if (!(shape > 0.0) || !std::isfinite(shape)) throw InvalidInput("cdf shape must be > 0");
    }
};

struct ResponseRange {
    double c1 = 0.0;
    double c2 = 1.0;

    void validate() const {
        if (!std::isfinite(c1) || !std::isfinite(c2) || c1 < 0.0 || !(c1 < c2))
            throw InvalidInput("response range must satisfy 0 <= c1 < c2");
    }
    double width() const { return c2 - c1; }
};

/// Response vector over an index set (all K clients, or the sampled ones).
/// Estimated vectors come out of the doubly robust estimator and may leave
/// the range.
struct ResponseVector {
    Vector values;
    ResponseRange range;
    bool estimated = false;
};

inline double cdf_eval(const CdfSpec& spec, double x) {
    spec.validate();
    if (!std::isfinite(x)) throw InvalidInput("cdf_eval: non-finite argument");
    const double a = spec.scale;
    const double b = spec.shape;
    switch (spec.kind) {
        case CdfKind::Weibull:
            if (x < 0.0) throw InvalidInput("cdf_eval: weibull needs x >= 0");
            return -std::expm1(-std::pow(x / a, b));
        case CdfKind::Frechet:
            if (x < 0.0) throw InvalidInput("cdf_eval: frechet needs x >= 0");
            if (x == 0.0) return 0.0;
            return std::exp(-std::pow(x / a, -b));
        case CdfKind::Gumbel:
            return std::exp(-std::exp(-(x - a) / b));
        case CdfKind::Exponential:
            if (x < 0.0) throw InvalidInput("cdf_eval: exponential needs x >= 0");
            return -std::expm1(-a * x);
        case CdfKind::Logistic:
            return 1.0 / (1.0 + std::exp(-(x - a) / b));
        case CdfKind::Normal:
            return 0.5 * std::erfc(-(x - a) / (b * std::numbers::sqrt2));
    }
    return 0.0;
}

/// r_i = c1 + (c2 - c1) * CDF(F_i / mean(F)), mean over the given entries.
///
/// All-zero losses yield the constant c1 + (c2 - c1) * CDF(1) and append a
/// note to `events` when provided.
inline ResponseVector transform_responses(const Vector& losses, const ResponseRange& range,
                                          const CdfSpec& spec,
                                          std::vector<std::string>* events = nullptr) {
    range.validate();
    spec.validate();
    if (losses.size() == 0) throw InvalidInput("transform_responses: no losses");
    if (!losses.allFinite() || (losses.array() < 0.0).any())
        throw InvalidInput("transform_responses: losses must be finite and nonnegative");

    const double mean = losses.mean();
    Vector out(losses.size());
    if (!(mean > 0.0)) {
        if (events) events->emplace_back("degenerate-round: all losses zero");
        out.setConstant(range.c1 + range.width() * cdf_eval(spec, 1.0));
    } else {
        for (Eigen::Index i = 0; i < losses.size(); ++i)
            out(i) = range.c1 + range.width() * cdf_eval(spec, losses(i) / mean);
    }
    out = out.cwiseMax(range.c1).cwiseMin(range.c2);
    return {std::move(out), range, false};
}

enum class Setting { CrossSilo, CrossDevice };

inline std::string_view to_string(Setting s) {
    return s == Setting::CrossSilo ? "cross_silo" : "cross_device";
}

inline std::optional<Setting> parse_setting(std::string_view name) {
    if (name == "cross_silo") return Setting::CrossSilo;
    if (name == "cross_device") return Setting::CrossDevice;
    return std::nullopt;
}

/// (0, 1/K) for cross-silo, (0, C) for cross-device.
inline ResponseRange default_range(Setting setting, std::size_t k, double c) {
    if (k == 0) throw InvalidInput("default_range: k must be positive");
    if (!(c > 0.0 && c <= 1.0)) throw ConfigError("c", "c must be in (0,1]");
    if (setting == Setting::CrossSilo) return {0.0, 1.0 / static_cast<double>(k)};
    return {0.0, c};
}

}  // namespace aaggff
