#pragma once

// Mixing-coefficient update rules.
//
// Baselines (FedAvg, AFL, q-FedAvg, TERM, PropFair) are single exponentiated
// gradient steps from the sample-size prior n_i / n. AAggFF-S runs the Online
// Newton Step; AAggFF-D runs entropic FTRL in closed form.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aaggff/decision.hpp"
#include "aaggff/error.hpp"
#include "aaggff/simplex.hpp"

namespace aaggff {

enum class Method { FedAvg, Afl, QFedAvg, Term, PropFair, AaggffS, AaggffD };

inline std::string_view to_string(Method m) {
    switch (m) {
        case Method::FedAvg: return "fedavg";
        case Method::Afl: return "afl";
        case Method::QFedAvg: return "qfedavg";
        case Method::Term: return "term";
        case Method::PropFair: return "propfair";
        case Method::AaggffS: return "aaggff-s";
        case Method::AaggffD: return "aaggff-d";
    }
    return "unknown";
}

inline std::optional<Method> parse_method(std::string_view name) {
    for (auto m : {Method::FedAvg, Method::Afl, Method::QFedAvg, Method::Term, Method::PropFair,
                   Method::AaggffS, Method::AaggffD}) {
        if (to_string(m) == name) return m;
    }
    return std::nullopt;
}

inline bool is_baseline(Method m) { return m != Method::AaggffS && m != Method::AaggffD; }

// ---------------------------------------------------------------------------
// Baselines

enum class BaselineKind { FedAvg, QFedAvg, Term, PropFair };

inline constexpr double kLossFloor = 1e-12;
inline constexpr double kPropFairGapFloor = 1e-6;

struct BaselineParams {
    BaselineKind kind = BaselineKind::FedAvg;
    double q = 1.0;       ///< q-FedAvg exponent; AFL uses a large q
    double lambda = 1.0;  ///< TERM tilt
    double m = 5.0;       ///< PropFair baseline constant
    std::vector<double> sample_sizes;

    void validate() const {
        if (sample_sizes.empty()) throw InvalidInput("baseline: sample sizes required");
        for (double n : sample_sizes)
            if (!(n >= 1.0)) throw InvalidInput("baseline: sample sizes must be >= 1");
        if (!(q >= 0.0)) throw InvalidInput("baseline: q must be >= 0");
        if (!(m >= 1.0)) throw InvalidInput("baseline: M must be >= 1");
        if (kind == BaselineKind::Term && !(lambda > 0.0))
            throw InvalidInput("baseline: TERM lambda must be > 0");
    }
};

/// Response column of the unification table.
inline Vector baseline_response(const BaselineParams& params, const Vector& losses,
                                std::vector<std::string>* events = nullptr) {
    if (!losses.allFinite()) throw InvalidInput("baseline_response: non-finite loss");
    Vector r(losses.size());
    switch (params.kind) {
        case BaselineKind::FedAvg:
            r.setZero();
            break;
        case BaselineKind::QFedAvg: {
            int clamped = 0;
            for (Eigen::Index i = 0; i < losses.size(); ++i) {
                double f = losses(i);
                if (f < kLossFloor) {
                    f = kLossFloor;
                    ++clamped;
                }
                r(i) = params.q * std::log(f);
            }
            if (clamped && events)
                events->push_back("qfedavg: " + std::to_string(clamped) + " loss(es) clamped at floor");
            break;
        }
        case BaselineKind::Term:
            r = losses;
            break;
        case BaselineKind::PropFair: {
            int clamped = 0;
            for (Eigen::Index i = 0; i < losses.size(); ++i) {
                double gap = params.m - losses(i);
                if (gap < kPropFairGapFloor) {
                    gap = kPropFairGapFloor;
                    ++clamped;
                }
                r(i) = -std::log(gap);
            }
            if (clamped && events)
                events->push_back("propfair: " + std::to_string(clamped) + " loss(es) saturated M");
            break;
        }
    }
    return r;
}

inline double baseline_step_size(const BaselineParams& params) {
    return params.kind == BaselineKind::Term ? 1.0 / params.lambda : 1.0;
}

inline SimplexVector sample_size_prior(const std::vector<double>& sample_sizes) {
    return SimplexVector::from_weights(
        Eigen::Map<const Vector>(sample_sizes.data(), static_cast<Eigen::Index>(sample_sizes.size())));
}

/// p_i <- p_i exp(r_i / eta), normalized. Evaluated in log space.
inline SimplexVector eg_step(const SimplexVector& prev, const Vector& response, double eta,
                             std::vector<std::string>* events = nullptr) {
    if (static_cast<std::size_t>(response.size()) != prev.size())
        throw InvalidInput("eg_step: dimension mismatch");
    if (!response.allFinite()) throw InvalidInput("eg_step: non-finite response");
    if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidInput("eg_step: eta must be positive");

    const Vector& p = prev.values();
    Vector logw(p.size());
    double top = -std::numeric_limits<double>::infinity();
    bool dead_with_signal = false;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p(i) > 0.0) {
            logw(i) = std::log(p(i)) + response(i) / eta;
            top = std::max(top, logw(i));
        } else {
            logw(i) = -std::numeric_limits<double>::infinity();
            if (response(i) != 0.0) dead_with_signal = true;
        }
    }
    if (dead_with_signal && events) events->emplace_back("eg_step: degenerate support");
    Vector w(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) w(i) = p(i) > 0.0 ? std::exp(logw(i) - top) : 0.0;
    return SimplexVector(w / w.sum());
}

/// One unified step: EG from n_i / n with the method's response and step size.
inline SimplexVector baseline_decision(const BaselineParams& params, const Vector& losses,
                                       std::vector<std::string>* events = nullptr) {
    params.validate();
    if (static_cast<std::size_t>(losses.size()) != params.sample_sizes.size())
        throw InvalidInput("baseline_decision: dimension mismatch");
    return eg_step(sample_size_prior(params.sample_sizes),
                   baseline_response(params, losses, events), baseline_step_size(params));
}

// ---------------------------------------------------------------------------
// Online Newton Step

/// State of AAggFF-S. The objective after t rounds is
///   sum_tau <g_tau, p> + alpha/2 |p|^2 + beta/2 sum_tau <g_tau, p - p_tau>^2
/// = 1/2 p' B p + <linear, p> + const,
/// with B = alpha I + beta sum g g' and linear = sum g (1 - beta <g, p_tau>).
class OnsState {
public:
    OnsState(std::size_t k, double l_inf)
        : decision_(SimplexVector::uniform(k)),
          alpha_(4.0 * static_cast<double>(k) * l_inf),
          beta_(1.0 / (4.0 * l_inf)),
          l_inf_(l_inf),
          b_(alpha_ * Matrix::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k))),
          linear_(Vector::Zero(static_cast<Eigen::Index>(k))) {
        if (!(l_inf > 0.0) || !std::isfinite(l_inf)) throw InvalidInput("ons: l_inf must be positive");
    }

    const SimplexVector& decision() const noexcept { return decision_; }
    int t() const noexcept { return t_; }
    double alpha() const noexcept { return alpha_; }
    double beta() const noexcept { return beta_; }
    double l_inf() const noexcept { return l_inf_; }
    const Matrix& b_matrix() const noexcept { return b_; }
    const Vector& linear_term() const noexcept { return linear_; }
    std::size_t k() const noexcept { return decision_.size(); }

    /// Folds in the gradient observed at the current decision and moves to the
    /// next one: the B-metric projection of the unconstrained Newton point.
    const SimplexVector& step(const Vector& gradient) {
        if (static_cast<std::size_t>(gradient.size()) != k())
            throw InvalidInput("ons_step: dimension mismatch");
        if (!gradient.allFinite()) throw InvalidInput("ons_step: non-finite gradient");
        if (gradient.cwiseAbs().maxCoeff() > l_inf_ + 1e-9)
            throw InvalidInput("ons_step: gradient exceeds the Lipschitz bound");

        b_.noalias() += beta_ * gradient * gradient.transpose();
        linear_ += gradient * (1.0 - beta_ * gradient.dot(decision_.values()));
        PsdMatrix bmat(0.5 * (b_ + b_.transpose()));
        const Vector newton_point = -bmat.values().llt().solve(linear_);
        decision_ = project_mahalanobis(newton_point, bmat);
        ++t_;
        return decision_;
    }

private:
    SimplexVector decision_;
    double alpha_;
    double beta_;
    double l_inf_;
    Matrix b_;
    Vector linear_;
    int t_ = 0;
};

inline std::pair<OnsState, SimplexVector> ons_step(OnsState state, const Vector& gradient) {
    SimplexVector next = state.step(gradient);
    return {std::move(state), std::move(next)};
}

// ---------------------------------------------------------------------------
// Entropic FTRL with closed-form update

/// softmax(-G / eta) with the max exponent subtracted.
inline SimplexVector entropic_argmin(const Vector& cumulative_gradient, double eta) {
    const Vector z = -cumulative_gradient / eta;
    const Vector w = (z.array() - z.maxCoeff()).exp();
    return SimplexVector(w / w.sum());
}

/// State of AAggFF-D: p_{t+1} proportional to exp(-sum g / eta_{t+1}) with
/// eta_t = L sqrt(t) / sqrt(log K).
class FtrlState {
public:
    FtrlState(std::size_t k, double l_inf)
        : cumulative_(Vector::Zero(static_cast<Eigen::Index>(k))),
          decision_(SimplexVector::uniform(k)),
          l_inf_(l_inf) {
        if (!(l_inf > 0.0) || !std::isfinite(l_inf)) throw InvalidInput("ftrl: l_inf must be positive");
    }

    const SimplexVector& decision() const noexcept { return decision_; }
    const Vector& cumulative_gradient() const noexcept { return cumulative_; }
    int t() const noexcept { return t_; }
    double l_inf() const noexcept { return l_inf_; }
    std::size_t k() const noexcept { return decision_.size(); }

    /// Step size used for the decision that follows `rounds` gradients.
    double step_size(int rounds) const {
        const double log_k = std::log(static_cast<double>(k()));
        const double root = std::sqrt(static_cast<double>(rounds + 1));
        return log_k > 0.0 ? l_inf_ * root / std::sqrt(log_k) : 1.0;
    }

    const SimplexVector& step(const Vector& gradient) {
        if (static_cast<std::size_t>(gradient.size()) != k())
            throw InvalidInput("ftrl_eg_step: dimension mismatch");
        if (!gradient.allFinite()) throw InvalidInput("ftrl_eg_step: non-finite gradient");
        if (gradient.cwiseAbs().maxCoeff() > l_inf_ + 1e-9)
            throw InvalidInput("ftrl_eg_step: gradient exceeds the Lipschitz bound");
        cumulative_ += gradient;
        ++t_;
        decision_ = k() == 1 ? SimplexVector::uniform(1)
                             : entropic_argmin(cumulative_, step_size(t_));
        return decision_;
    }

private:
    Vector cumulative_;
    SimplexVector decision_;
    double l_inf_;
    int t_ = 0;
};

inline std::pair<FtrlState, SimplexVector> ftrl_eg_step(FtrlState state, const Vector& gradient) {
    SimplexVector next = state.step(gradient);
    return {std::move(state), std::move(next)};
}

// ---------------------------------------------------------------------------
// Best fixed decision in hindsight

struct HindsightOptions {
    int max_iterations = 100000;
    int mirror_descent_iterations = 300;
    double tolerance = 1e-10;
};

namespace detail {

struct CumulativeLoss {
    const Matrix& r;  // T x K, one response per row

    double value(const Vector& p) const {
        const Vector inner = r * p;
        if ((inner.array() <= -1.0).any()) return std::numeric_limits<double>::infinity();
        return -inner.array().log1p().sum();
    }
    Vector gradient(const Vector& p) const {
        const Vector denom = (r * p).array() + 1.0;
        return -(r.transpose() * denom.cwiseInverse());
    }
    Matrix hessian(const Vector& p) const {
        const Vector denom = (r * p).array() + 1.0;
        const Matrix scaled = denom.cwiseInverse().asDiagonal() * r;
        return scaled.transpose() * scaled;
    }
};

}  // namespace detail

/// argmin over the simplex of sum_t -log(1 + <p, r_t>).
///
/// Entropic mirror descent with decreasing steps gets close; an active-set
/// Newton method then finishes on the identified face. Ties between optimal
/// points resolve toward the uniform point of the optimal face.
inline SimplexVector hindsight_best(const std::vector<Vector>& responses,
                                    const HindsightOptions& options = {}) {
    if (responses.empty()) throw InvalidInput("hindsight_best: no responses");
    const auto k = responses.front().size();
    if (k == 0) throw InvalidInput("hindsight_best: empty response");
    Matrix r(static_cast<Eigen::Index>(responses.size()), k);
    for (std::size_t t = 0; t < responses.size(); ++t) {
        if (responses[t].size() != k) throw InvalidInput("hindsight_best: ragged responses");
        if (!responses[t].allFinite()) throw InvalidInput("hindsight_best: non-finite response");
        r.row(static_cast<Eigen::Index>(t)) = responses[t].transpose();
    }
    if (k == 1) return SimplexVector::uniform(1);

    // Every response a nonnegative multiple of one direction: the loss only
    // depends on <p, direction>. Constant direction gives uniform, otherwise
    // the lowest-index argmax vertex.
    {
        Eigen::Index top = 0;
        r.rowwise().norm().maxCoeff(&top);
        const Vector dir = r.row(top).transpose();
        bool rank_one = dir.norm() > 0.0;
        for (Eigen::Index t = 0; t < r.rows() && rank_one; ++t) {
            const double c = r.row(t).dot(dir) / dir.squaredNorm();
            rank_one = c >= 0.0 && (r.row(t).transpose() - c * dir).norm() <= 1e-14 * dir.norm();
        }
        if (dir.norm() == 0.0 || (rank_one && dir.maxCoeff() - dir.minCoeff() <= 1e-15 * dir.cwiseAbs().maxCoeff()))
            return SimplexVector::uniform(static_cast<std::size_t>(k));
        if (rank_one) {
            Eigen::Index best = 0;
            dir.maxCoeff(&best);
            return SimplexVector::vertex(static_cast<std::size_t>(k), static_cast<std::size_t>(best));
        }
    }
    const detail::CumulativeLoss loss{r};

    Vector p = Vector::Constant(k, 1.0 / static_cast<double>(k));
    double fp = loss.value(p);
    if (!std::isfinite(fp)) throw InvalidInput("hindsight_best: loss undefined at uniform point");

    int iterations = 0;
    // Mirror descent warm start.
    {
        const double scale = std::max(1e-12, loss.gradient(p).cwiseAbs().maxCoeff());
        for (int it = 1; it <= options.mirror_descent_iterations; ++it, ++iterations) {
            const Vector g = loss.gradient(p);
            const double eta = 1.0 / (scale * std::sqrt(static_cast<double>(it)));
            Vector z = p.array().log() - eta * g.array();
            z = (z.array() - z.maxCoeff()).exp();
            Vector next = z / z.sum();
            const double fn = loss.value(next);
            const double movement = std::abs(fn - fp);
            p = next;
            fp = fn;
            if (movement < options.tolerance) break;
        }
    }

    // Active-set Newton on the face {p_i > 0}.
    std::vector<bool> active(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < k; ++i) active[static_cast<std::size_t>(i)] = p(i) > 1e-9;
    for (Eigen::Index i = 0; i < k; ++i)
        if (!active[static_cast<std::size_t>(i)]) p(i) = 0.0;
    p /= p.sum();
    fp = loss.value(p);

    double kkt = std::numeric_limits<double>::infinity();
    int stalled = 0;
    while (iterations < options.max_iterations) {
        ++iterations;
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < k; ++i)
            if (active[static_cast<std::size_t>(i)]) idx.push_back(i);
        const auto m = static_cast<Eigen::Index>(idx.size());
        const Vector g = loss.gradient(p);
        const Matrix h = loss.hessian(p);

        Matrix kkt_matrix = Matrix::Zero(m + 1, m + 1);
        Vector rhs = Vector::Zero(m + 1);
        const double ridge = 1e-12 * std::max(1.0, h.diagonal().maxCoeff());
        for (Eigen::Index a = 0; a < m; ++a) {
            for (Eigen::Index b = 0; b < m; ++b) kkt_matrix(a, b) = h(idx[a], idx[b]);
            kkt_matrix(a, a) += ridge;
            kkt_matrix(a, m) = 1.0;
            kkt_matrix(m, a) = 1.0;
            rhs(a) = -g(idx[a]);
        }
        const Vector sol = kkt_matrix.fullPivLu().solve(rhs);
        const Vector d = sol.head(m);

        // Stationarity on the face; then look for a coordinate worth adding.
        double mean_g = 0.0;
        for (auto i : idx) mean_g += g(i);
        mean_g /= static_cast<double>(m);
        double face_residual = 0.0;
        for (auto i : idx) face_residual = std::max(face_residual, std::abs(g(i) - mean_g));
        const double gscale = std::max(1.0, g.cwiseAbs().maxCoeff());

        if (d.cwiseAbs().maxCoeff() < 1e-14 || face_residual < 1e-13 * gscale) {
            Eigen::Index enter = -1;
            double most_negative = -1e-11 * gscale;
            for (Eigen::Index j = 0; j < k; ++j) {
                if (active[static_cast<std::size_t>(j)]) continue;
                if (g(j) - mean_g < most_negative) {
                    most_negative = g(j) - mean_g;
                    enter = j;
                }
            }
            if (enter < 0) {
                kkt = face_residual;
                break;
            }
            active[static_cast<std::size_t>(enter)] = true;
            continue;
        }

        // Longest feasible step along d.
        double max_step = 1.0;
        Eigen::Index blocking = -1;
        for (Eigen::Index a = 0; a < m; ++a) {
            if (d(a) < 0.0) {
                const double s = -p(idx[a]) / d(a);
                if (s < max_step) {
                    max_step = s;
                    blocking = idx[a];
                }
            }
        }
        Vector dfull = Vector::Zero(k);
        for (Eigen::Index a = 0; a < m; ++a) dfull(idx[a]) = d(a);
        const double slope = g.dot(dfull);
        if (!(slope < 0.0)) {
            kkt = face_residual;
            break;
        }
        double step = max_step;
        Vector next;
        double fn = fp;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            next = (p + step * dfull).cwiseMax(0.0);
            if (step == max_step && blocking >= 0) next(blocking) = 0.0;
            next /= next.sum();
            fn = loss.value(next);
            if (fn <= fp + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            kkt = face_residual;
            break;
        }
        if (step == max_step && blocking >= 0 && m > 1) active[static_cast<std::size_t>(blocking)] = false;
        const double movement = std::abs(fp - fn);
        p = next;
        fp = fn;
        stalled = movement < options.tolerance * std::max(1.0, std::abs(fp)) ? stalled + 1 : 0;
        if (stalled >= 5) {
            kkt = face_residual;
            break;
        }
    }
    if (iterations >= options.max_iterations && !std::isfinite(kkt))
        throw ConvergenceError("hindsight_best: iteration cap reached", p, kkt, iterations);
    return SimplexVector(p / p.sum());
}

}  // namespace aaggff
