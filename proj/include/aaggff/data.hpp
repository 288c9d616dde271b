#pragma once

// Synthetic heterogeneous federation: label skew from a Dirichlet prior,
// per-client feature shift, log-normal client sizes, 80/20 split per client.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "aaggff/error.hpp"
#include "aaggff/rng.hpp"
#include "aaggff/simplex.hpp"

namespace aaggff {

struct SyntheticDataSpec {
    std::size_t input_dim = 10;
    std::size_t num_classes = 5;
    double samples_mean = 200.0;    ///< median client size
    double samples_spread = 0.5;    ///< sd of log client size
    double concentration = 0.1;     ///< Dirichlet concentration of label mix
    double feature_shift = 0.5;     ///< sd of per-client mean offset
    double class_separation = 1.5;  ///< sd of class centroids
    double test_fraction = 0.2;

    void validate(std::size_t batch = 1) const {
        if (input_dim == 0) throw ConfigError("data.input_dim", "must be >= 1");
        if (num_classes < 2) throw ConfigError("data.num_classes", "must be >= 2");
        if (!(concentration > 0.0) || !std::isfinite(concentration))
            throw ConfigError("data.concentration", "must be > 0");
        if (!(samples_spread >= 0.0)) throw ConfigError("data.samples_spread", "must be >= 0");
        if (!(feature_shift >= 0.0)) throw ConfigError("data.feature_shift", "must be >= 0");
        if (!(class_separation >= 0.0)) throw ConfigError("data.class_separation", "must be >= 0");
        if (!(test_fraction >= 0.0 && test_fraction < 1.0))
            throw ConfigError("data.test_fraction", "must be in [0,1)");
        if (!(samples_mean >= static_cast<double>(batch)))
            throw ConfigError("data.samples_mean", "samples per client must be >= batch size b");
    }
};

struct ClientDataset {
    Matrix train_x;
    std::vector<int> train_y;
    Matrix test_x;
    std::vector<int> test_y;
    Vector label_distribution;  ///< Dirichlet draw behind this client's labels

    std::size_t num_train() const { return train_y.size(); }
    std::size_t num_test() const { return test_y.size(); }
};

namespace detail {

/// Gamma(shape, 1) sample returned in log space; stable for tiny shapes.
inline double log_gamma_sample(double shape, Rng& rng) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    if (shape < 1.0) {
        std::gamma_distribution<double> g(shape + 1.0, 1.0);
        double u = unif(rng);
        while (u <= 0.0) u = unif(rng);
        return std::log(g(rng)) + std::log(u) / shape;
    }
    std::gamma_distribution<double> g(shape, 1.0);
    return std::log(g(rng));
}

inline Vector dirichlet(std::size_t dim, double concentration, Rng& rng) {
    Vector logs(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < logs.size(); ++i) logs(i) = log_gamma_sample(concentration, rng);
    Vector w = (logs.array() - logs.maxCoeff()).exp();
    return w / w.sum();
}

/// Integer counts summing to n, closest to n * pi (largest remainder).
inline std::vector<std::size_t> apportion(const Vector& pi, std::size_t n) {
    const auto c = static_cast<std::size_t>(pi.size());
    std::vector<std::size_t> counts(c);
    std::vector<std::pair<double, std::size_t>> remainders(c);
    std::size_t assigned = 0;
    for (std::size_t j = 0; j < c; ++j) {
        const double exact = pi(static_cast<Eigen::Index>(j)) * static_cast<double>(n);
        counts[j] = static_cast<std::size_t>(std::floor(exact));
        assigned += counts[j];
        remainders[j] = {exact - std::floor(exact), j};
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++counts[remainders[r % c].second];
    return counts;
}

}  // namespace detail

/// Deterministic for a fixed seed. Features are standardized over the
/// pooled data of all clients.
inline std::vector<ClientDataset> generate_federation(const SyntheticDataSpec& spec, std::size_t k,
                                                      std::uint64_t seed, std::size_t batch = 1) {
    spec.validate(batch);
    if (k == 0) throw ConfigError("k", "must be >= 1");
    const StreamFactory streams(seed);
    const auto d = static_cast<Eigen::Index>(spec.input_dim);
    const auto classes = spec.num_classes;

    Rng global = streams.stream("data/global");
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix centroids(static_cast<Eigen::Index>(classes), d);
    for (Eigen::Index i = 0; i < centroids.size(); ++i)
        centroids.data()[i] = spec.class_separation * normal(global);

    // Every client keeps at least `batch` training rows after the split.
    const auto min_total = static_cast<std::size_t>(
        std::ceil(static_cast<double>(std::max<std::size_t>(batch, 2)) / (1.0 - spec.test_fraction))) + 1;

    std::vector<ClientDataset> clients(k);
    std::vector<Matrix> features(k);
    std::vector<std::vector<int>> labels(k);
    for (std::size_t c = 0; c < k; ++c) {
        Rng rng = streams.stream("data/client", c);
        const double log_size = std::log(spec.samples_mean) + spec.samples_spread * normal(rng);
        const auto n = std::max(min_total, static_cast<std::size_t>(std::llround(std::exp(log_size))));
        clients[c].label_distribution = detail::dirichlet(classes, spec.concentration, rng);
        const auto counts = detail::apportion(clients[c].label_distribution, n);

        Eigen::RowVectorXd shift(d);
        for (Eigen::Index j = 0; j < d; ++j) shift(j) = spec.feature_shift * normal(rng);

        features[c].resize(static_cast<Eigen::Index>(n), d);
        labels[c].reserve(n);
        Eigen::Index row = 0;
        for (std::size_t label = 0; label < classes; ++label) {
            for (std::size_t s = 0; s < counts[label]; ++s, ++row) {
                for (Eigen::Index j = 0; j < d; ++j)
                    features[c](row, j) = centroids(static_cast<Eigen::Index>(label), j) + shift(j) + normal(rng);
                labels[c].push_back(static_cast<int>(label));
            }
        }
    }

    // Global standardization.
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(d);
    Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(d);
    double total = 0.0;
    for (const auto& f : features) {
        mean += f.colwise().sum();
        sq += f.array().square().matrix().colwise().sum();
        total += static_cast<double>(f.rows());
    }
    mean /= total;
    Eigen::RowVectorXd sd = (sq / total - mean.array().square().matrix()).array().sqrt();
    for (Eigen::Index j = 0; j < d; ++j)
        if (!(sd(j) > 0.0)) sd(j) = 1.0;

    for (std::size_t c = 0; c < k; ++c) {
        Matrix& f = features[c];
        f = ((f.rowwise() - mean).array().rowwise() / sd.array()).matrix();

        // Stratified split: each label contributes round(test_fraction * count)
        // test rows; at least one test row overall.
        Rng rng = streams.stream("data/split", c);
        std::vector<std::vector<std::size_t>> by_label(classes);
        for (std::size_t i = 0; i < labels[c].size(); ++i)
            by_label[static_cast<std::size_t>(labels[c][i])].push_back(i);
        std::vector<bool> is_test(labels[c].size(), false);
        std::size_t n_test = 0;
        for (auto& rows : by_label) {
            std::shuffle(rows.begin(), rows.end(), rng);
            const auto take = static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(rows.size())));
            for (std::size_t a = 0; a < take; ++a) {
                is_test[rows[a]] = true;
                ++n_test;
            }
        }
        if (n_test == 0 && spec.test_fraction > 0.0) {
            std::uniform_int_distribution<std::size_t> pick(0, labels[c].size() - 1);
            is_test[pick(rng)] = true;
            n_test = 1;
        }
        const std::size_t n_train = labels[c].size() - n_test;
        auto& out = clients[c];
        out.train_x.resize(static_cast<Eigen::Index>(n_train), d);
        out.test_x.resize(static_cast<Eigen::Index>(n_test), d);
        Eigen::Index tr = 0;
        Eigen::Index te = 0;
        for (std::size_t i = 0; i < labels[c].size(); ++i) {
            const auto src = static_cast<Eigen::Index>(i);
            if (is_test[i]) {
                out.test_x.row(te++) = f.row(src);
                out.test_y.push_back(labels[c][i]);
            } else {
                out.train_x.row(tr++) = f.row(src);
                out.train_y.push_back(labels[c][i]);
            }
        }
    }
    return clients;
}

}  // namespace aaggff
