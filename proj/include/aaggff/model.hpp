#pragma once

// Multinomial logistic regression on a flat parameter vector.
// Layout: theta reshaped column-major to a (d + 1) x C matrix whose last row
// holds the class biases.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "aaggff/error.hpp"
#include "aaggff/simplex.hpp"

namespace aaggff {

struct GlobalModel {
    Vector theta;
};

class LogisticModel {
public:
    LogisticModel(std::size_t input_dim, std::size_t num_classes)
        : d_(static_cast<Eigen::Index>(input_dim)), c_(static_cast<Eigen::Index>(num_classes)) {
        if (num_classes < 2) throw InvalidInput("logistic model needs at least two classes");
    }

    std::size_t num_parameters() const { return static_cast<std::size_t>((d_ + 1) * c_); }
    std::size_t input_dim() const { return static_cast<std::size_t>(d_); }
    std::size_t num_classes() const { return static_cast<std::size_t>(c_); }

    GlobalModel zeros() const { return {Vector::Zero(static_cast<Eigen::Index>(num_parameters()))}; }

    /// Mean cross-entropy over the given rows (all rows when `rows` is empty).
    double loss(const Vector& theta, const Matrix& x, const std::vector<int>& y,
                std::span<const std::size_t> rows = {}) const {
        const auto w = weights(theta);
        const std::size_t n = rows.empty() ? y.size() : rows.size();
        if (n == 0) throw InvalidInput("loss: empty dataset");
        double total = 0.0;
        for (std::size_t a = 0; a < n; ++a) {
            const auto i = static_cast<Eigen::Index>(rows.empty() ? a : rows[a]);
            const Eigen::RowVectorXd z = x.row(i) * w.topRows(d_) + w.row(d_);
            const double top = z.maxCoeff();
            const double lse = top + std::log((z.array() - top).exp().sum());
            total += lse - z(y[static_cast<std::size_t>(i)]);
        }
        return total / static_cast<double>(n);
    }

    /// Gradient of the mean cross-entropy plus (weight_decay / 2) |theta|^2.
    Vector gradient(const Vector& theta, const Matrix& x, const std::vector<int>& y,
                    std::span<const std::size_t> rows = {}, double weight_decay = 0.0) const {
        const auto w = weights(theta);
        const std::size_t n = rows.empty() ? y.size() : rows.size();
        if (n == 0) throw InvalidInput("gradient: empty dataset");
        Matrix grad = Matrix::Zero(d_ + 1, c_);
        for (std::size_t a = 0; a < n; ++a) {
            const auto i = static_cast<Eigen::Index>(rows.empty() ? a : rows[a]);
            Eigen::RowVectorXd z = x.row(i) * w.topRows(d_) + w.row(d_);
            z = (z.array() - z.maxCoeff()).exp();
            z /= z.sum();
            z(y[static_cast<std::size_t>(i)]) -= 1.0;
            grad.topRows(d_).noalias() += x.row(i).transpose() * z;
            grad.row(d_) += z;
        }
        grad /= static_cast<double>(n);
        Vector flat = Eigen::Map<const Vector>(grad.data(), grad.size());
        if (weight_decay != 0.0) flat += weight_decay * theta;
        return flat;
    }

    /// Fraction of rows classified correctly (argmax, lowest index on ties).
    double accuracy(const Vector& theta, const Matrix& x, const std::vector<int>& y) const {
        if (y.empty()) throw InvalidInput("accuracy: empty dataset");
        const auto w = weights(theta);
        const Matrix z = (x * w.topRows(d_)).rowwise() + w.row(d_);
        std::size_t correct = 0;
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
            Eigen::Index best = 0;
            z.row(i).maxCoeff(&best);
            if (best == y[static_cast<std::size_t>(i)]) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(y.size());
    }

private:
    Eigen::Map<const Matrix> weights(const Vector& theta) const {
        if (static_cast<std::size_t>(theta.size()) != num_parameters())
            throw InvalidInput("logistic model: parameter size mismatch");
        return Eigen::Map<const Matrix>(theta.data(), d_ + 1, c_);
    }

    Eigen::Index d_;
    Eigen::Index c_;
};

}  // namespace aaggff
