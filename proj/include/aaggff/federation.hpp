#pragma once

// Deterministic federated simulation of multinomial logistic clients.
//
// Per silo round: collect (loss, delta) from all clients, transform losses
// into bounded responses, score the played decision, update the mixing
// coefficients, aggregate deltas. Device rounds sample a subset first, feed
// the learner doubly robust estimates and aggregate over the subset only.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <iterator>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "aaggff/aggregators.hpp"
#include "aaggff/data.hpp"
#include "aaggff/decision.hpp"
#include "aaggff/error.hpp"
#include "aaggff/model.hpp"
#include "aaggff/parallel.hpp"
#include "aaggff/rng.hpp"
#include "aaggff/simplex.hpp"
#include "aaggff/transform.hpp"

namespace aaggff {

struct FederationConfig {
    std::size_t k = 10;
    int t_rounds = 10;
    double c = 1.0;            ///< client sampling probability
    int e = 1;                 ///< local epochs
    std::size_t b = 20;        ///< local batch size
    double lr = 0.1;           ///< local learning rate
    double lr_decay = 1.0;     ///< multiplied into lr every lr_decay_step rounds
    int lr_decay_step = 1;
    double weight_decay = 0.0;
    Method method = Method::FedAvg;
    CdfSpec cdf = CdfSpec::defaults(CdfKind::Weibull);
    std::uint64_t seed = 0;
    Setting setting = Setting::CrossSilo;
    SyntheticDataSpec data;
    std::optional<ResponseRange> range;  ///< defaults per setting when unset
    double q = 1.0;                      ///< q-FedAvg
    double q_afl = 50.0;                 ///< q used to emulate AFL
    double term_lambda = 1.0;
    double propfair_m = 5.0;
    std::size_t threads = 1;  ///< workers for local updates within a round

    void validate() const {
        if (k < 2) throw ConfigError("k", "must be >= 2");
        if (t_rounds < 1) throw ConfigError("t", "must be >= 1");
        if (!(c > 0.0 && c <= 1.0)) throw ConfigError("c", "c must be in (0,1]");
        if (e < 1) throw ConfigError("e", "must be >= 1");
        if (b < 1) throw ConfigError("b", "must be >= 1");
        if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr", "must be > 0");
        if (!(lr_decay > 0.0) || !std::isfinite(lr_decay)) throw ConfigError("lr_decay", "must be > 0");
        if (lr_decay_step < 1) throw ConfigError("lr_decay_step", "must be >= 1");
        if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay", "must be >= 0");
        if (!(q >= 0.0)) throw ConfigError("q", "must be >= 0");
        if (!(q_afl >= 0.0)) throw ConfigError("q_afl", "must be >= 0");
        if (!(term_lambda > 0.0)) throw ConfigError("term_lambda", "must be > 0");
        if (!(propfair_m >= 1.0)) throw ConfigError("propfair_m", "must be >= 1");
        if (threads < 1) throw ConfigError("threads", "must be >= 1");
        try {
            cdf.validate();
        } catch (const InvalidInput& ex) {
            throw ConfigError("cdf", ex.what());
        }
        if (range) {
            try {
                range->validate();
            } catch (const InvalidInput& ex) {
                throw ConfigError("range", ex.what());
            }
        }
        if (method == Method::AaggffD && setting != Setting::CrossDevice)
            throw ConfigError("method", "aaggff-d requires setting cross_device (method/setting mismatch)");
        if (method == Method::AaggffS && setting != Setting::CrossSilo)
            throw ConfigError("method", "aaggff-s requires setting cross_silo (method/setting mismatch)");
        if (setting == Setting::CrossSilo && c != 1.0)
            throw ConfigError("c", "cross_silo runs use every client each round; c must be 1");
        data.validate(b);
    }

    ResponseRange response_range() const { return range ? *range : default_range(setting, k, c); }

    /// Learning rate in effect at 0-based round t.
    double lr_at(int t) const { return lr * std::pow(lr_decay, t / lr_decay_step); }
};

struct LocalTraining {
    int epochs = 1;
    std::size_t batch = 20;
    double lr = 0.1;
    double weight_decay = 0.0;
};

struct ClientUpdateResult {
    double loss_before = 0.0;
    Vector delta;  ///< received model minus locally trained model
};

/// Evaluates the received model on the local training set, then runs E
/// epochs of minibatch SGD over a fresh shuffle per epoch.
inline ClientUpdateResult client_update(const LogisticModel& model, const GlobalModel& global,
                                        const ClientDataset& data, const LocalTraining& opts,
                                        Rng& rng, int round = -1, std::size_t client = 0) {
    if (data.num_train() == 0) throw InvalidInput("client_update: empty dataset");
    if (!global.theta.allFinite()) throw InvalidInput("client_update: non-finite model");
    ClientUpdateResult out;
    out.loss_before = model.loss(global.theta, data.train_x, data.train_y);
    if (!std::isfinite(out.loss_before))
        throw DivergenceError(round, client, "non-finite loss before local update");

    Vector theta = global.theta;
    std::vector<std::size_t> order(data.num_train());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t batch = std::max<std::size_t>(1, std::min(opts.batch, order.size()));
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t len = std::min(batch, order.size() - start);
            const std::span<const std::size_t> rows(order.data() + start, len);
            theta -= opts.lr * model.gradient(theta, data.train_x, data.train_y, rows, opts.weight_decay);
        }
        if (!theta.allFinite()) throw DivergenceError(round, client, "local model diverged");
    }
    out.delta = global.theta - theta;
    return out;
}

/// Uniform sample without replacement of max(1, floor(c k)) indices, sorted.
inline IndexSet sample_clients(std::size_t k, double c, Rng& rng) {
    if (!(c > 0.0 && c <= 1.0)) throw InvalidInput("sample_clients: c must be in (0,1]");
    const auto m = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(c * static_cast<double>(k) + 1e-9)));
    IndexSet all(k);
    for (std::size_t i = 0; i < k; ++i) all[i] = i;
    if (m >= k) return all;
    IndexSet out;
    out.reserve(m);
    std::sample(all.begin(), all.end(), std::back_inserter(out), m, rng);
    return out;
}

struct RoundRecord {
    int round = 0;
    IndexSet sampled;
    Vector losses;               ///< F_i at the round's global model, over `sampled`
    Vector responses;            ///< transformed responses over `sampled`
    Vector estimated_responses;  ///< doubly robust full response; empty when fully observed
    Vector played;               ///< p^(t), the decision scored this round
    Vector decision;             ///< p^(t+1)
    Vector weights;              ///< aggregation weights over `sampled`
    double decision_loss = 0.0;  ///< NaN when undefined
    double lr = 0.0;
    std::vector<std::string> events;
    double duration_seconds = 0.0;

    /// Full-length response the learner was scored against.
    const Vector& learner_response() const {
        return estimated_responses.size() ? estimated_responses : responses;
    }
};

struct ClientEvaluation {
    std::vector<double> test_accuracy;  ///< percent
    std::vector<double> test_loss;
    std::vector<double> train_loss;
};

struct RunResult {
    FederationConfig config;
    ResponseRange range;
    double lipschitz = 0.0;  ///< constant the learner was configured with
    std::vector<double> sample_sizes;
    std::vector<RoundRecord> records;
    GlobalModel model;
    std::optional<ClientEvaluation> evaluation;
    std::optional<std::string> failure;
};

inline ClientEvaluation evaluate_clients(const LogisticModel& model, const GlobalModel& global,
                                         const std::vector<ClientDataset>& clients) {
    ClientEvaluation ev;
    for (const auto& c : clients) {
        const bool has_test = c.num_test() > 0;
        const Matrix& x = has_test ? c.test_x : c.train_x;
        const std::vector<int>& y = has_test ? c.test_y : c.train_y;
        ev.test_accuracy.push_back(100.0 * model.accuracy(global.theta, x, y));
        ev.test_loss.push_back(model.loss(global.theta, x, y));
        ev.train_loss.push_back(model.loss(global.theta, c.train_x, c.train_y));
    }
    return ev;
}

namespace detail {

inline double safe_decision_loss(const SimplexVector& p, const Vector& r) {
    const double inner = p.values().dot(r);
    if (!(inner > -1.0)) return std::numeric_limits<double>::quiet_NaN();
    return -std::log1p(inner);
}

inline BaselineParams baseline_params(const FederationConfig& cfg, std::vector<double> sizes) {
    BaselineParams p;
    p.sample_sizes = std::move(sizes);
    p.q = cfg.q;
    p.lambda = cfg.term_lambda;
    p.m = cfg.propfair_m;
    switch (cfg.method) {
        case Method::FedAvg: p.kind = BaselineKind::FedAvg; break;
        case Method::Afl: p.kind = BaselineKind::QFedAvg; p.q = cfg.q_afl; break;
        case Method::QFedAvg: p.kind = BaselineKind::QFedAvg; break;
        case Method::Term: p.kind = BaselineKind::Term; break;
        case Method::PropFair: p.kind = BaselineKind::PropFair; break;
        default: throw InvalidInput("baseline_params: not a baseline method");
    }
    return p;
}

struct Federation {
    LogisticModel model;
    std::vector<ClientDataset> clients;
    std::vector<double> sample_sizes;
    StreamFactory streams;
};

inline Federation prepare(const FederationConfig& cfg, std::optional<std::vector<ClientDataset>> clients) {
    if (clients) {
        if (clients->size() != cfg.k) throw InvalidInput("federation: need exactly k client datasets");
        for (const auto& c : *clients) {
            if (c.num_train() == 0) throw InvalidInput("federation: client without training data");
            if (static_cast<std::size_t>(c.train_x.cols()) != cfg.data.input_dim)
                throw InvalidInput("federation: client feature dimension differs from data.input_dim");
        }
    }
    Federation fed{LogisticModel(cfg.data.input_dim, cfg.data.num_classes),
                   clients ? std::move(*clients) : generate_federation(cfg.data, cfg.k, cfg.seed, cfg.b), {},
                   StreamFactory(cfg.seed)};
    for (const auto& c : fed.clients) fed.sample_sizes.push_back(static_cast<double>(c.num_train()));
    return fed;
}

inline std::vector<ClientUpdateResult> collect(const Federation& fed, const FederationConfig& cfg,
                                               const GlobalModel& global, const IndexSet& sampled,
                                               int round, double lr) {
    std::vector<ClientUpdateResult> results(sampled.size());
    const LocalTraining opts{cfg.e, cfg.b, lr, cfg.weight_decay};
    parallel_for(sampled.size(), cfg.threads, [&](std::size_t a) {
        Rng rng = fed.streams.stream("train/batch", static_cast<std::uint64_t>(round), sampled[a]);
        results[a] = client_update(fed.model, global, fed.clients[sampled[a]], opts, rng, round, sampled[a]);
    });
    return results;
}

/// theta <- theta - sum_a w_a delta_a, reduced in index order.
inline void aggregate(GlobalModel& global, const std::vector<ClientUpdateResult>& results,
                      const Vector& weights) {
    Vector step = Vector::Zero(global.theta.size());
    for (std::size_t a = 0; a < results.size(); ++a)
        step += weights(static_cast<Eigen::Index>(a)) * results[a].delta;
    global.theta -= step;
}

template <typename RoundFn>
RunResult drive(const FederationConfig& cfg, Federation& fed, RunResult result, RoundFn&& round_fn) {
    GlobalModel global = fed.model.zeros();
    for (int t = 0; t < cfg.t_rounds; ++t) {
        const auto start = std::chrono::steady_clock::now();
        try {
            RoundRecord rec = round_fn(t, global);
            rec.duration_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            result.records.push_back(std::move(rec));
        } catch (const Error& ex) {
            result.failure = ex.what();
            result.model = global;
            return result;
        }
    }
    result.model = global;
    result.evaluation = evaluate_clients(fed.model, global, fed.clients);
    return result;
}

}  // namespace detail

/// Every client participates every round (cross-silo). Client data is
/// generated from `cfg.data` unless supplied.
inline RunResult run_silo(const FederationConfig& cfg,
                          std::optional<std::vector<ClientDataset>> clients = std::nullopt) {
    cfg.validate();
    if (cfg.setting != Setting::CrossSilo) throw ConfigError("setting", "run_silo needs cross_silo");
    auto fed = detail::prepare(cfg, std::move(clients));
    const ResponseRange range = cfg.response_range();

    RunResult result;
    result.config = cfg;
    result.range = range;
    result.sample_sizes = fed.sample_sizes;

    IndexSet everyone(cfg.k);
    for (std::size_t i = 0; i < cfg.k; ++i) everyone[i] = i;

    std::optional<OnsState> ons;
    std::optional<BaselineParams> baseline;
    SimplexVector played = SimplexVector::uniform(cfg.k);
    if (cfg.method == Method::AaggffS) {
        ons.emplace(cfg.k, lipschitz_full(range));
        result.lipschitz = ons->l_inf();
    } else {
        baseline = detail::baseline_params(cfg, fed.sample_sizes);
        baseline->validate();
        played = sample_size_prior(fed.sample_sizes);
        result.lipschitz = lipschitz_full(range);
    }

    return detail::drive(cfg, fed, std::move(result), [&](int t, GlobalModel& global) {
        RoundRecord rec;
        rec.round = t;
        rec.sampled = everyone;
        rec.lr = cfg.lr_at(t);
        const auto results = detail::collect(fed, cfg, global, everyone, t, rec.lr);
        rec.losses.resize(static_cast<Eigen::Index>(cfg.k));
        for (std::size_t i = 0; i < cfg.k; ++i) rec.losses(static_cast<Eigen::Index>(i)) = results[i].loss_before;

        const ResponseVector r = transform_responses(rec.losses, range, cfg.cdf, &rec.events);
        rec.responses = r.values;
        rec.played = played.values();
        rec.decision_loss = decision_loss(played, r.values);

        SimplexVector next = ons ? ons->step(decision_gradient(played, r.values))
                                 : baseline_decision(*baseline, rec.losses, &rec.events);
        rec.decision = next.values();
        rec.weights = next.values();
        detail::aggregate(global, results, rec.weights);
        played = std::move(next);
        return rec;
    });
}

/// A subset of clients participates each round (cross-device).
inline RunResult run_device(const FederationConfig& cfg,
                            std::optional<std::vector<ClientDataset>> clients = std::nullopt) {
    cfg.validate();
    if (cfg.setting != Setting::CrossDevice) throw ConfigError("setting", "run_device needs cross_device");
    auto fed = detail::prepare(cfg, std::move(clients));
    const ResponseRange range = cfg.response_range();

    RunResult result;
    result.config = cfg;
    result.range = range;
    result.sample_sizes = fed.sample_sizes;

    const auto per_round = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(cfg.c * static_cast<double>(cfg.k) + 1e-9)));
    const bool full = per_round >= cfg.k;
    // Inclusion probability of each client under fixed-size sampling.
    const double inclusion = static_cast<double>(std::min(per_round, cfg.k)) / static_cast<double>(cfg.k);

    std::optional<FtrlState> ftrl;
    std::optional<BaselineParams> baseline;
    SimplexVector played = SimplexVector::uniform(cfg.k);
    if (cfg.method == Method::AaggffD) {
        ftrl.emplace(cfg.k, full ? lipschitz_full(range) : lipschitz_dr(range, inclusion));
        result.lipschitz = ftrl->l_inf();
    } else {
        baseline = detail::baseline_params(cfg, fed.sample_sizes);
        baseline->validate();
        played = sample_size_prior(fed.sample_sizes);
        result.lipschitz = full ? lipschitz_full(range) : lipschitz_dr(range, inclusion);
    }

    return detail::drive(cfg, fed, std::move(result), [&](int t, GlobalModel& global) {
        RoundRecord rec;
        rec.round = t;
        rec.lr = cfg.lr_at(t);
        Rng sampler = fed.streams.stream("sampling", static_cast<std::uint64_t>(t));
        rec.sampled = sample_clients(cfg.k, cfg.c, sampler);
        const auto results = detail::collect(fed, cfg, global, rec.sampled, t, rec.lr);
        const auto m = static_cast<Eigen::Index>(rec.sampled.size());
        rec.losses.resize(m);
        for (Eigen::Index a = 0; a < m; ++a) rec.losses(a) = results[static_cast<std::size_t>(a)].loss_before;

        const ResponseVector observed = transform_responses(rec.losses, range, cfg.cdf, &rec.events);
        rec.responses = observed.values;
        rec.played = played.values();

        Vector full_response;
        if (full) {
            full_response = observed.values;
        } else {
            rec.estimated_responses = dr_estimate(observed, rec.sampled, inclusion, cfg.k).values;
            full_response = rec.estimated_responses;
        }
        rec.decision_loss = detail::safe_decision_loss(played, full_response);
        if (std::isnan(rec.decision_loss)) rec.events.emplace_back("decision loss undefined: 1 + <p, r> <= 0");

        SimplexVector next = played;
        if (ftrl) {
            Vector gradient;
            if (full) {
                gradient = decision_gradient(played, full_response);
            } else {
                const Vector reference = Vector::Constant(static_cast<Eigen::Index>(cfg.k), observed.values.mean());
                gradient = linearized_gradient(played, full_response, reference);
            }
            next = ftrl->step(gradient);
        } else {
            // Unobserved clients get the mean observed baseline response; the
            // subset weights only depend on the sampled entries.
            const Vector observed_resp = baseline_response(*baseline, rec.losses, &rec.events);
            Vector resp = Vector::Constant(static_cast<Eigen::Index>(cfg.k), observed_resp.mean());
            for (Eigen::Index a = 0; a < m; ++a) resp(static_cast<Eigen::Index>(rec.sampled[static_cast<std::size_t>(a)])) = observed_resp(a);
            next = eg_step(sample_size_prior(fed.sample_sizes), resp, baseline_step_size(*baseline), &rec.events);
        }
        rec.decision = next.values();
        try {
            rec.weights = normalize_subset(next, rec.sampled).values();
        } catch (const DegenerateSubset&) {
            rec.weights = Vector::Constant(m, 1.0 / static_cast<double>(m));
            rec.events.emplace_back("degenerate-subset: uniform weights over sampled clients");
        }
        detail::aggregate(global, results, rec.weights);
        played = std::move(next);
        return rec;
    });
}

inline RunResult run_federation(const FederationConfig& cfg,
                                std::optional<std::vector<ClientDataset>> clients = std::nullopt) {
    return cfg.setting == Setting::CrossSilo ? run_silo(cfg, std::move(clients))
                                             : run_device(cfg, std::move(clients));
}

}  // namespace aaggff
