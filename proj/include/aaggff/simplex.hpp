#pragma once

// Geometry of the probability simplex: the decision space of the server.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aaggff/error.hpp"

namespace aaggff {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Sorted, duplicate-free, zero-based client indices.
using IndexSet = std::vector<std::size_t>;

inline constexpr double kSimplexTolerance = 1e-9;

inline bool all_finite(const Vector& v) { return v.allFinite(); }

inline bool is_on_simplex(const Vector& v, double tol = kSimplexTolerance) {
    if (v.size() == 0 || !v.allFinite()) return false;
    if ((v.array() < 0.0).any()) return false;
    return std::abs(v.sum() - 1.0) <= tol;
}

/// A point of the probability simplex. Construction validates.
class SimplexVector {
public:
    explicit SimplexVector(Vector entries) : entries_(std::move(entries)) {
        if (entries_.size() == 0)
            throw InvalidInput("simplex vector must have at least one entry");
        if (!entries_.allFinite())
            throw InvalidInput("simplex vector has non-finite entries");
        if ((entries_.array() < 0.0).any())
            throw InvalidInput("simplex vector has negative entries");
        if (std::abs(entries_.sum() - 1.0) > kSimplexTolerance)
            throw InvalidInput("simplex vector does not sum to one (sum = " +
                               std::to_string(entries_.sum()) + ")");
    }

    static SimplexVector uniform(std::size_t k) {
        if (k == 0) throw InvalidInput("uniform: k must be positive");
        return SimplexVector(Vector::Constant(static_cast<Eigen::Index>(k),
                                              1.0 / static_cast<double>(k)));
    }

    static SimplexVector vertex(std::size_t k, std::size_t i) {
        if (i >= k) throw InvalidInput("vertex: index out of range");
        Vector v = Vector::Zero(static_cast<Eigen::Index>(k));
        v(static_cast<Eigen::Index>(i)) = 1.0;
        return SimplexVector(std::move(v));
    }

    /// Normalizes nonnegative weights with positive total mass.
    static SimplexVector from_weights(const Vector& weights) {
        if (!weights.allFinite() || (weights.array() < 0.0).any())
            throw InvalidInput("from_weights: weights must be finite and nonnegative");
        const double total = weights.sum();
        if (!(total > 0.0)) throw InvalidInput("from_weights: zero total mass");
        return SimplexVector(weights / total);
    }

    const Vector& values() const noexcept { return entries_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(entries_.size()); }
    double operator[](std::size_t i) const { return entries_(static_cast<Eigen::Index>(i)); }

    friend bool operator==(const SimplexVector& a, const SimplexVector& b) {
        return a.entries_.size() == b.entries_.size() && a.entries_ == b.entries_;
    }

private:
    Vector entries_;
};

/// Symmetric positive definite K x K matrix.
class PsdMatrix {
public:
    explicit PsdMatrix(Matrix entries) : entries_(std::move(entries)) {
        if (entries_.rows() != entries_.cols() || entries_.rows() == 0)
            throw InvalidMatrix("matrix must be square and nonempty");
        if (!entries_.allFinite()) throw InvalidMatrix("matrix has non-finite entries");
        const double scale = std::max(1.0, entries_.cwiseAbs().maxCoeff());
        if ((entries_ - entries_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw InvalidMatrix("matrix is not symmetric");
        Eigen::LLT<Matrix> llt(entries_);
        if (llt.info() != Eigen::Success)
            throw InvalidMatrix("matrix is not positive definite");
    }

    static PsdMatrix scaled_identity(std::size_t k, double c) {
        return PsdMatrix(c * Matrix::Identity(static_cast<Eigen::Index>(k),
                                              static_cast<Eigen::Index>(k)));
    }

    const Matrix& values() const noexcept { return entries_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(entries_.rows()); }

private:
    Matrix entries_;
};

/// Euclidean projection onto the simplex by sorting and thresholding.
inline SimplexVector project_euclidean(const Vector& v) {
    const auto n = v.size();
    if (n == 0) throw InvalidInput("project_euclidean: empty vector");
    if (!v.allFinite()) throw InvalidInput("project_euclidean: non-finite input");

    std::vector<double> u(v.data(), v.data() + n);
    std::sort(u.begin(), u.end(), std::greater<double>());

    double cumsum = 0.0;
    double theta = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        cumsum += u[static_cast<std::size_t>(j)];
        const double candidate = (cumsum - 1.0) / static_cast<double>(j + 1);
        if (u[static_cast<std::size_t>(j)] - candidate > 0.0) theta = candidate;
    }

    Vector w = (v.array() - theta).cwiseMax(0.0);
    // Absorb rounding so the sum is one to machine precision.
    w /= w.sum();
    return SimplexVector(std::move(w));
}

namespace detail {

inline double mahalanobis_objective(const Vector& x, const Vector& v, const Matrix& b) {
    const Vector d = x - v;
    return d.dot(b * d);
}

/// KKT residual of min (x-v)'B(x-v) over the simplex at a feasible x.
inline double mahalanobis_kkt_residual(const Vector& x, const Vector& v, const Matrix& b,
                                       double support_tol = 0.0) {
    const Vector g = 2.0 * b * (x - v);
    double lambda = 0.0;
    int count = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x(i) > support_tol) {
            lambda += g(i);
            ++count;
        }
    }
    if (count == 0) return std::numeric_limits<double>::infinity();
    lambda /= count;
    double residual = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x(i) > support_tol)
            residual = std::max(residual, std::abs(g(i) - lambda));
        else
            residual = std::max(residual, lambda - g(i));
    }
    return residual;
}

/// Exact minimizer on the face spanned by `support`, when it is a KKT point.
inline bool solve_on_face(const Vector& v, const Matrix& b, const std::vector<Eigen::Index>& support,
                          double tol, Vector& out) {
    const auto k = v.size();
    const auto m = static_cast<Eigen::Index>(support.size());
    if (m == 0) return false;
    Matrix bss(m, m);
    Vector rhs(m);
    const Vector bv = b * v;
    for (Eigen::Index a = 0; a < m; ++a) {
        rhs(a) = bv(support[static_cast<std::size_t>(a)]);
        for (Eigen::Index c = 0; c < m; ++c)
            bss(a, c) = b(support[static_cast<std::size_t>(a)], support[static_cast<std::size_t>(c)]);
    }
    Eigen::LLT<Matrix> llt(bss);
    if (llt.info() != Eigen::Success) return false;
    const Vector u = llt.solve(rhs);
    const Vector w = llt.solve(Vector::Ones(m));
    const double denom = w.sum();
    if (!(std::abs(denom) > 0.0)) return false;
    const double c = (1.0 - u.sum()) / denom;
    const Vector xs = u + c * w;
    if ((xs.array() < 0.0).any()) return false;

    Vector x = Vector::Zero(k);
    for (Eigen::Index a = 0; a < m; ++a) x(support[static_cast<std::size_t>(a)]) = xs(a);
    // Multiplier of the sum constraint is 2c; off-face gradients must not undercut it.
    const Vector g = 2.0 * b * (x - v);
    const double lambda = 2.0 * c;
    const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
    std::vector<bool> on_face(static_cast<std::size_t>(k), false);
    for (auto i : support) on_face[static_cast<std::size_t>(i)] = true;
    for (Eigen::Index i = 0; i < k; ++i) {
        if (!on_face[static_cast<std::size_t>(i)] && g(i) < lambda - tol * scale) return false;
    }
    out = x / x.sum();
    return true;
}

}  // namespace detail

struct MahalanobisOptions {
    double tolerance = 1e-8;
};

/// argmin over the simplex of (x - v)' B (x - v).
///
/// Projected gradient descent in the Euclidean metric with backtracking. Once
/// the support of the iterate settles, the face problem is solved exactly and
/// accepted when it satisfies the KKT conditions.
inline SimplexVector project_mahalanobis(const Vector& v, const PsdMatrix& bmat,
                                         const MahalanobisOptions& options = {}) {
    const auto k = v.size();
    if (k == 0) throw InvalidInput("project_mahalanobis: empty vector");
    if (!v.allFinite()) throw InvalidInput("project_mahalanobis: non-finite input");
    if (static_cast<std::size_t>(k) != bmat.size())
        throw InvalidInput("project_mahalanobis: dimension mismatch");
    if (is_on_simplex(v, 1e-12) ) return SimplexVector(v / v.sum());

    const Matrix& b = bmat.values();
    const double tol = options.tolerance;
    const int max_iter = static_cast<int>(
        std::ceil(10.0 * static_cast<double>(k) * std::max(1.0, -std::log10(tol))));

    Vector x = project_euclidean(v).values();
    double fx = detail::mahalanobis_objective(x, v, b);
    // Gershgorin bound on the largest eigenvalue of 2B gives a safe first step.
    double step = 1.0 / (2.0 * b.cwiseAbs().rowwise().sum().maxCoeff());

    std::vector<Eigen::Index> prev_support;
    std::vector<Eigen::Index> tried_support;
    Vector exact;
    for (int iter = 0; iter < max_iter; ++iter) {
        std::vector<Eigen::Index> support;
        for (Eigen::Index i = 0; i < k; ++i)
            if (x(i) > 0.0) support.push_back(i);
        if (support == prev_support && support != tried_support) {
            tried_support = support;
            if (detail::solve_on_face(v, b, support, 1e-10, exact)) return SimplexVector(exact);
        }
        prev_support = support;

        const Vector g = 2.0 * b * (x - v);
        Vector next;
        double fnext = 0.0;
        step *= 2.0;
        for (int bt = 0; bt < 60; ++bt) {
            next = project_euclidean(x - step * g).values();
            fnext = detail::mahalanobis_objective(next, v, b);
            const Vector d = next - x;
            if (fnext <= fx + g.dot(d) + d.squaredNorm() / (2.0 * step) + 1e-15 * std::abs(fx))
                break;
            step *= 0.5;
        }
        const double movement = (next - x).cwiseAbs().maxCoeff();
        x = next;
        fx = fnext;
        if (movement < tol) {
            std::vector<Eigen::Index> final_support;
            for (Eigen::Index i = 0; i < k; ++i)
                if (x(i) > 0.0) final_support.push_back(i);
            if (final_support != tried_support &&
                detail::solve_on_face(v, b, final_support, 1e-10, exact))
                return SimplexVector(exact);
            return SimplexVector(x / x.sum());
        }
    }
    const double residual = detail::mahalanobis_kkt_residual(x, v, b);
    throw ConvergenceError("project_mahalanobis: iteration cap reached", x, residual, max_iter);
}

/// Restricts a decision to `subset` and renormalizes: p_i / sum_{j in S} p_j.
inline SimplexVector normalize_subset(const SimplexVector& p, const IndexSet& subset) {
    if (subset.empty()) throw DegenerateSubset("normalize_subset: empty index set");
    Vector out(static_cast<Eigen::Index>(subset.size()));
    for (std::size_t a = 0; a < subset.size(); ++a) {
        if (subset[a] >= p.size()) throw InvalidInput("normalize_subset: index out of range");
        if (a > 0 && subset[a] <= subset[a - 1])
            throw InvalidInput("normalize_subset: index set must be sorted and unique");
        out(static_cast<Eigen::Index>(a)) = p[subset[a]];
    }
    const double mass = out.sum();
    if (!(mass > 0.0)) throw DegenerateSubset("normalize_subset: zero subset mass");
    return SimplexVector(out / mass);
}

/// Writes subset weights back into a K-vector (zero elsewhere).
inline Vector embed_subset(const Vector& weights, const IndexSet& subset, std::size_t k) {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(k));
    for (std::size_t a = 0; a < subset.size(); ++a)
        out(static_cast<Eigen::Index>(subset[a])) = weights(static_cast<Eigen::Index>(a));
    return out;
}

}  // namespace aaggff
