#pragma once

// Decision loss -log(1 + <p, r>), its gradient, the doubly robust response
// estimator for partially observed rounds and the response-linearized gradient.

#include <cmath>
#include <optional>
#include <string>

#include "aaggff/error.hpp"
#include "aaggff/simplex.hpp"
#include "aaggff/transform.hpp"

namespace aaggff {

namespace detail {
inline void require_same_size(const SimplexVector& p, const Vector& r, const char* who) {
    if (static_cast<std::size_t>(r.size()) != p.size())
        throw InvalidInput(std::string(who) + ": dimension mismatch");
    if (!r.allFinite()) throw InvalidInput(std::string(who) + ": non-finite response");
}
}  // namespace detail

inline double decision_loss(const SimplexVector& p, const Vector& r) {
    detail::require_same_size(p, r, "decision_loss");
    return -std::log1p(p.values().dot(r));
}

inline Vector decision_gradient(const SimplexVector& p, const Vector& r) {
    detail::require_same_size(p, r, "decision_gradient");
    return -r / (1.0 + p.values().dot(r));
}

/// Doubly robust estimate of the full response from the entries observed on
/// `subset`: observed entries become rbar + (r_i - rbar) / C, the rest rbar.
/// rbar is the observed mean unless a fixed `reference` is given. Only a
/// reference that does not depend on the sampled set makes the estimate
/// unbiased under fixed-size sampling.
inline ResponseVector dr_estimate(const ResponseVector& observed, const IndexSet& subset,
                                  double c, std::size_t k, std::optional<double> reference = std::nullopt) {
    if (subset.empty()) throw DegenerateRound("dr_estimate: empty sampled set");
    if (!(c > 0.0 && c <= 1.0)) throw InvalidInput("dr_estimate: C must be in (0,1]");
    if (static_cast<std::size_t>(observed.values.size()) != subset.size())
        throw InvalidInput("dr_estimate: observed size does not match index set");
    const double rbar = reference ? *reference : observed.values.mean();
    Vector out = Vector::Constant(static_cast<Eigen::Index>(k), rbar);
    for (std::size_t a = 0; a < subset.size(); ++a) {
        if (subset[a] >= k) throw InvalidInput("dr_estimate: index out of range");
        const double ri = observed.values(static_cast<Eigen::Index>(a));
        out(static_cast<Eigen::Index>(subset[a])) = (1.0 - 1.0 / c) * rbar + ri / c;
    }
    return {std::move(out), observed.range, true};
}

/// First-order expansion of the gradient in the response around `r0`:
/// -r / (1 + <p, r0>) + r0 <p, r - r0> / (1 + <p, r0>)^2.
inline Vector linearized_gradient(const SimplexVector& p, const Vector& r, const Vector& r0) {
    detail::require_same_size(p, r, "linearized_gradient");
    detail::require_same_size(p, r0, "linearized_gradient");
    const double base = 1.0 + p.values().dot(r0);
    if (!(base > 0.0)) throw InvalidInput("linearized_gradient: 1 + <p, r0> must be positive");
    const double shift = p.values().dot(r - r0);
    return -r / base + r0 * (shift / (base * base));
}

/// Sup-norm Lipschitz constant of the decision loss for responses in [c1, c2].
inline double lipschitz_full(const ResponseRange& range) {
    range.validate();
    return range.c2 / (1.0 + range.c1);
}

/// Sup-norm bound of the linearized gradient built from doubly robust estimates.
inline double lipschitz_dr(const ResponseRange& range, double c) {
    range.validate();
    if (!(c > 0.0 && c <= 1.0)) throw InvalidInput("lipschitz_dr: C must be in (0,1]");
    return range.c2 / (1.0 + range.c1) + 2.0 * (range.c2 - range.c1) / (c * (1.0 + range.c1));
}

}  // namespace aaggff
