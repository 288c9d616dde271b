#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace aaggff {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values, dimension mismatches, violated preconditions.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Matrix that should be symmetric positive definite but is not.
class InvalidMatrix : public Error {
public:
    using Error::Error;
};

/// Iterative solver gave up before reaching its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, Eigen::VectorXd best_iterate,
                     double residual, int iterations)
        : Error(what),
          best_iterate_(std::move(best_iterate)),
          residual_(residual),
          iterations_(iterations) {}

    const Eigen::VectorXd& best_iterate() const noexcept { return best_iterate_; }
    double residual() const noexcept { return residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    Eigen::VectorXd best_iterate_;
    double residual_;
    int iterations_;
};

/// Empty index set or a subset carrying zero probability mass.
class DegenerateSubset : public Error {
public:
    using Error::Error;
};

/// A round without any usable observation.
class DegenerateRound : public Error {
public:
    using Error::Error;
};

/// Configuration problem tied to a single named field.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& message)
        : Error(field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Local training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(int round, std::size_t client, const std::string& what)
        : Error("round " + std::to_string(round) + ", client " +
                std::to_string(client) + ": " + what),
          round_(round),
          client_(client) {}

    int round() const noexcept { return round_; }
    std::size_t client() const noexcept { return client_; }

private:
    int round_;
    std::size_t client_;
};

}  // namespace aaggff
