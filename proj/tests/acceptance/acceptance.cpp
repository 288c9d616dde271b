// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "aaggff/aaggff.hpp"
#include "../oracles.hpp"

using namespace aaggff;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

int failures = 0;

void criterion(int id, const char* name, double budget_seconds, const std::function<Verdict()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
        v = body();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = fmt("%.2fs", secs);
    if (budget_seconds > 0.0) {
        timing += fmt(" of %.0fs", budget_seconds);
        if (secs >= budget_seconds) {
            v.pass = false;
            v.detail += "; over time budget";
        }
    }
    if (!v.pass) ++failures;
    std::printf("%s [%2d] %-28s %s (%s)\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str(), timing.c_str());
    std::fflush(stdout);
}

double linf(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); }

/// Responses in [0, top] from an adversary that sees the current decision.
/// Rounds come in blocks of random length; each block either loads the
/// least-weighted client, rewards a fixed leader, or draws uniform noise.
class Adversary {
public:
    Adversary(std::size_t k, double top, std::uint64_t seed) : k_(k), top_(top), rng_(seed) {}

    Vector next(const Vector& p) {
        if (left_ == 0) {
            left_ = std::uniform_int_distribution<int>(5, 60)(rng_);
            mode_ = std::uniform_int_distribution<int>(0, 2)(rng_);
            leader_ = std::uniform_int_distribution<std::size_t>(0, k_ - 1)(rng_);
        }
        --left_;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        Vector r(static_cast<Eigen::Index>(k_));
        for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = 0.2 * top_ * u(rng_);
        if (mode_ == 0) {
            Eigen::Index lo = 0;
            p.minCoeff(&lo);
            r(lo) = top_;
        } else if (mode_ == 1) {
            r(static_cast<Eigen::Index>(leader_)) = top_;
        } else {
            for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = top_ * u(rng_);
        }
        return r;
    }

private:
    std::size_t k_;
    double top_;
    std::mt19937_64 rng_;
    int left_ = 0;
    int mode_ = 0;
    std::size_t leader_ = 0;
};

/// Regret against the computed hindsight point plus that point's
/// Frank-Wolfe duality gap: an upper bound on the true regret.
double certified_regret(const std::vector<SimplexVector>& played, const std::vector<Vector>& responses) {
    const SimplexVector best = hindsight_best(responses);
    const Vector& q = best.values();
    Vector grad = Vector::Zero(q.size());
    for (const auto& r : responses) grad -= r / (1.0 + q.dot(r));
    const double gap = grad.dot(q) - grad.minCoeff();
    return regret_against(played, responses, best) + std::max(0.0, gap);
}

struct RegretStats {
    double worst_ratio = 0.0;
    int within = 0;
};

}  // namespace

int main() {
    std::printf("aaggff acceptance suite\n");

    criterion(1, "ons_regret_bound", 30.0, [] {
        const std::size_t k = 10;
        const int t = 1000;
        const ResponseRange range{0.0, 1.0 / static_cast<double>(k)};
        const double l = lipschitz_full(range);
        const double bound = ons_regret_bound(l, k, t);
        RegretStats s;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            OnsState ons(k, l);
            Adversary adv(k, range.c2, 1000 + seed);
            std::vector<SimplexVector> played;
            std::vector<Vector> responses;
            for (int round = 0; round < t; ++round) {
                played.push_back(ons.decision());
                responses.push_back(adv.next(ons.decision().values()));
                ons.step(decision_gradient(played.back(), responses.back()));
            }
            const double reg = certified_regret(played, responses);
            s.worst_ratio = std::max(s.worst_ratio, reg / bound);
            if (reg <= bound) ++s.within;
        }
        return Verdict{s.within == 20, fmt("%d/20 seeds within bound %.4f, max regret/bound %.4f", s.within, bound,
                                           s.worst_ratio)};
    });

    criterion(2, "ftrl_regret_bound", 10.0, [] {
        const std::size_t k = 50;
        const int t = 2000;
        const ResponseRange range = default_range(Setting::CrossDevice, k, 1.0);
        const double l = lipschitz_full(range);
        const double bound = ftrl_regret_bound(l, k, t);
        RegretStats s;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            FtrlState ftrl(k, l);
            Adversary adv(k, range.c2, 2000 + seed);
            std::vector<SimplexVector> played;
            std::vector<Vector> responses;
            for (int round = 0; round < t; ++round) {
                played.push_back(ftrl.decision());
                responses.push_back(adv.next(ftrl.decision().values()));
                ftrl.step(decision_gradient(played.back(), responses.back()));
            }
            const double reg = certified_regret(played, responses);
            s.worst_ratio = std::max(s.worst_ratio, reg / bound);
            if (reg <= bound) ++s.within;
        }
        return Verdict{s.within == 20, fmt("%d/20 seeds within bound %.4f, max regret/bound %.4f", s.within, bound,
                                           s.worst_ratio)};
    });

    criterion(3, "dr_expected_regret", 60.0, [] {
        const std::size_t k = 50;
        const int t = 2000;
        const double c = 0.1;
        const ResponseRange range = default_range(Setting::CrossDevice, k, c);
        const auto m = static_cast<std::size_t>(std::floor(c * static_cast<double>(k) + 1e-9));
        const double inclusion = static_cast<double>(m) / static_cast<double>(k);
        const double l_dr = lipschitz_dr(range, inclusion);
        const double bound = 2.0 * l_dr * std::sqrt(static_cast<double>(t) * std::log(static_cast<double>(k)));
        double total = 0.0;
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            FtrlState ftrl(k, l_dr);
            Adversary adv(k, range.c2, 3000 + seed);
            Rng sampler(seed);
            std::vector<SimplexVector> played;
            std::vector<Vector> responses;
            for (int round = 0; round < t; ++round) {
                const SimplexVector p = ftrl.decision();
                const Vector r = adv.next(p.values());
                const IndexSet s = sample_clients(k, c, sampler);
                Vector seen(static_cast<Eigen::Index>(s.size()));
                for (std::size_t a = 0; a < s.size(); ++a) seen(static_cast<Eigen::Index>(a)) = r(static_cast<Eigen::Index>(s[a]));
                const ResponseVector est = dr_estimate({seen, range, false}, s, inclusion, k);
                const Vector r0 = Vector::Constant(static_cast<Eigen::Index>(k), seen.mean());
                ftrl.step(linearized_gradient(p, est.values, r0));
                played.push_back(p);
                responses.push_back(r);
            }
            const double reg = certified_regret(played, responses);
            total += reg;
            worst = std::max(worst, reg);
        }
        const double mean = total / 50.0;
        return Verdict{mean <= bound,
                       fmt("mean regret %.4f over 50 seeds (max %.4f) vs bound %.4f", mean, worst, bound)};
    });

    criterion(4, "ftrl_closed_form_vs_oracle", 0.0, [] {
        std::mt19937_64 rng(4);
        double worst = 0.0;
        int instances = 0;
        for (std::size_t k : {2u, 3u, 4u, 8u}) {
            for (int trial = 0; trial < 25; ++trial, ++instances) {
                const double l = std::uniform_real_distribution<double>(0.1, 3.0)(rng);
                FtrlState ftrl(k, l);
                const int rounds = std::uniform_int_distribution<int>(1, 40)(rng);
                for (int r = 0; r < rounds; ++r) ftrl.step(oracle::random_uniform(rng, static_cast<Eigen::Index>(k), -l, l));
                const Vector expected =
                    oracle::entropic_ftrl_argmin(ftrl.cumulative_gradient(), ftrl.step_size(ftrl.t()));
                worst = std::max(worst, linf(ftrl.decision().values(), expected));
            }
        }
        return Verdict{worst <= 1e-6, fmt("%d instances, max l_inf error %.3e (tol 1e-6)", instances, worst)};
    });

    criterion(5, "ons_step_vs_oracle", 0.0, [] {
        std::mt19937_64 rng(5);
        double worst_step = 0.0;
        int on_boundary = 0;
        for (int trial = 0; trial < 100; ++trial) {
            const auto k = static_cast<std::size_t>(2 + trial % 5);
            const double l = std::uniform_real_distribution<double>(0.05, 2.0)(rng);
            OnsState ons(k, l);
            std::vector<Vector> grads;
            std::vector<Vector> points;
            // A persistent drift pushes about half of the instances onto a face.
            const int rounds = std::uniform_int_distribution<int>(1, 30)(rng);
            const Vector drift = oracle::random_uniform(rng, static_cast<Eigen::Index>(k), -l, 0.0);
            for (int r = 0; r < rounds; ++r) {
                Vector g = oracle::random_uniform(rng, static_cast<Eigen::Index>(k), -l, l);
                if (trial % 2) g = (0.3 * g + 0.7 * drift).cwiseMax(-l).cwiseMin(l);
                points.push_back(ons.decision().values());
                grads.push_back(g);
                ons.step(g);
            }
            const Vector expected = oracle::ons_objective_argmin(grads, points, ons.alpha(), ons.beta());
            worst_step = std::max(worst_step, linf(ons.decision().values(), expected));
            if (ons.decision().values().minCoeff() == 0.0) ++on_boundary;
        }
        double worst_proj = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            const auto k = static_cast<Eigen::Index>(2 + trial % 5);
            Matrix a(k, k);
            std::normal_distribution<double> n(0.0, 1.0);
            for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
            const Matrix b = a * a.transpose() + 0.1 * Matrix::Identity(k, k);
            const Vector v = oracle::random_uniform(rng, k, -2.0, 2.0);
            worst_proj = std::max(worst_proj, linf(project_mahalanobis(v, PsdMatrix(b)).values(),
                                                   oracle::mahalanobis_qp(v, b)));
        }
        return Verdict{worst_step <= 1e-6 && worst_proj <= 1e-6,
                       fmt("100 steps (%d on a face) max error %.3e, 100 projections max error %.3e (tol 1e-6)",
                           on_boundary, worst_step, worst_proj)};
    });

    criterion(6, "dr_unbiasedness", 0.0, [] {
        const std::size_t k = 20;
        const double c = 0.25;
        const ResponseRange range{0.0, c};
        const auto m = static_cast<std::size_t>(std::lround(c * static_cast<double>(k)));
        const double inclusion = static_cast<double>(m) / static_cast<double>(k);
        const int n = 100000;
        std::mt19937_64 rng(6);
        const Vector r = oracle::random_uniform(rng, static_cast<Eigen::Index>(k), range.c1, range.c2);
        const SimplexVector p(oracle::random_simplex_point(rng, static_cast<Eigen::Index>(k)));
        const double fixed_ref = 0.5 * (range.c1 + range.c2);
        const Vector r0 = Vector::Constant(static_cast<Eigen::Index>(k), fixed_ref);
        const Vector g_true = linearized_gradient(p, r, r0);

        // Largest |mean - truth| / standard error over coordinates.
        struct Accumulator {
            Vector sum, sq;
            explicit Accumulator(Eigen::Index k) : sum(Vector::Zero(k)), sq(Vector::Zero(k)) {}
            void add(const Vector& x) {
                sum += x;
                sq += x.cwiseProduct(x);
            }
            double max_z(const Vector& truth, int n) const {
                const Vector mean = sum / n;
                const Vector var = (sq / n - mean.cwiseProduct(mean)) * (static_cast<double>(n) / (n - 1));
                const Vector se = (var / n).cwiseSqrt();
                return ((mean - truth).array() / se.array()).abs().maxCoeff();
            }
        };
        const auto kk = static_cast<Eigen::Index>(k);
        Accumulator est(kk), grad(kk), est_fixed(kk), grad_fixed(kk);
        IndexSet all(k);
        for (std::size_t i = 0; i < k; ++i) all[i] = i;
        for (int s = 0; s < n; ++s) {
            IndexSet subset;
            std::sample(all.begin(), all.end(), std::back_inserter(subset), m, rng);
            Vector seen(static_cast<Eigen::Index>(m));
            for (std::size_t a = 0; a < m; ++a) seen(static_cast<Eigen::Index>(a)) = r(static_cast<Eigen::Index>(subset[a]));
            const ResponseVector observed{seen, range, false};
            const Vector e = dr_estimate(observed, subset, inclusion, k).values;
            const Vector ef = dr_estimate(observed, subset, inclusion, k, fixed_ref).values;
            est.add(e);
            grad.add(linearized_gradient(p, e, r0));
            est_fixed.add(ef);
            grad_fixed.add(linearized_gradient(p, ef, r0));
        }
        const double z_est = est.max_z(r, n);
        const double z_grad = grad.max_z(g_true, n);
        const double z_est_fixed = est_fixed.max_z(r, n);
        const double z_grad_fixed = grad_fixed.max_z(g_true, n);
        return Verdict{z_est <= 4.0 && z_grad <= 4.0,
                       fmt("observed-mean rbar: max |z| estimate %.1f, gradient %.1f (limit 4); "
                           "fixed rbar: estimate %.2f, gradient %.2f",
                           z_est, z_grad, z_est_fixed, z_grad_fixed)};
    });

    criterion(7, "cdf_reference_table", 0.0, [] {
        // Centered losses as printed; they average to exactly one.
        Vector centered(3);
        centered << 0.23, 2.31, 0.46;
        const std::pair<CdfKind, std::array<double, 3>> table[] = {
            {CdfKind::Weibull, {0.05, 1.00, 0.19}},     {CdfKind::Frechet, {0.01, 0.65, 0.11}},
            {CdfKind::Gumbel, {0.12, 0.76, 0.18}},      {CdfKind::Exponential, {0.21, 0.90, 0.37}},
            {CdfKind::Logistic, {0.32, 0.79, 0.37}},    {CdfKind::Normal, {0.22, 0.90, 0.29}}};
        int matched = 0;
        std::string misses;
        for (const auto& [kind, expected] : table) {
            const Vector r = transform_responses(centered, {0.0, 1.0}, CdfSpec::defaults(kind)).values;
            for (Eigen::Index i = 0; i < 3; ++i) {
                const double rounded = std::round(r(i) * 100.0) / 100.0;
                if (rounded == expected[static_cast<std::size_t>(i)]) {
                    ++matched;
                } else {
                    misses += fmt(" %s[%d]=%.4f", std::string(to_string(kind)).c_str(), static_cast<int>(i), r(i));
                }
            }
        }
        return Verdict{matched == 18, fmt("%d/18 values match after rounding to 2 decimals", matched) + misses};
    });

    criterion(8, "unification_fidelity", 0.0, [] {
        std::mt19937_64 rng(8);
        std::uniform_real_distribution<double> loss(0.01, 3.0);
        std::uniform_real_distribution<double> size(1.0, 500.0);
        double worst = 0.0;
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t k = 2 + static_cast<std::size_t>(trial % 20);
            BaselineParams params;
            params.q = std::uniform_real_distribution<double>(0.0, 5.0)(rng);
            params.lambda = std::uniform_real_distribution<double>(0.1, 3.0)(rng);
            params.m = std::uniform_real_distribution<double>(3.5, 10.0)(rng);
            Vector f(static_cast<Eigen::Index>(k));
            for (std::size_t i = 0; i < k; ++i) {
                params.sample_sizes.push_back(std::round(size(rng)));
                f(static_cast<Eigen::Index>(i)) = loss(rng);
            }
            const Eigen::Map<const Vector> n(params.sample_sizes.data(), static_cast<Eigen::Index>(k));
            const std::pair<BaselineKind, Vector> closed[] = {
                {BaselineKind::FedAvg, n},
                {BaselineKind::QFedAvg, n.cwiseProduct(f.array().pow(params.q).matrix())},
                {BaselineKind::Term, n.cwiseProduct((params.lambda * f.array()).exp().matrix())},
                {BaselineKind::PropFair, n.cwiseQuotient((params.m - f.array()).matrix())}};
            for (const auto& [kind, weights] : closed) {
                params.kind = kind;
                const Vector expected = weights / weights.sum();
                const Vector got = baseline_decision(params, f).values();
                worst = std::max(worst, ((got - expected).array() / expected.array()).abs().maxCoeff());
            }
        }
        return Verdict{worst <= 1e-12, fmt("200 instances x 4 baselines, max relative error %.3e (tol 1e-12)", worst)};
    });

    criterion(9, "lipschitz_constants", 0.0, [] {
        std::mt19937_64 rng(9);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double full_ratio = 0.0;
        double dr_ratio = 0.0;
        for (int s = 0; s < 100000; ++s) {
            const auto k = static_cast<Eigen::Index>(2 + s % 30);
            const double c1 = s % 3 == 0 ? 0.0 : u(rng);
            const ResponseRange range{c1, c1 + 0.01 + 2.0 * u(rng)};
            Vector p = oracle::random_simplex_point(rng, k);
            if (s % 5 == 0) p = SimplexVector::vertex(static_cast<std::size_t>(k), 0).values();
            Vector r = oracle::random_uniform(rng, k, range.c1, range.c2);
            if (s % 7 == 0) r.setConstant(range.c1);
            r(0) = s % 2 ? range.c2 : r(0);
            const Vector g = decision_gradient(SimplexVector(p), r);
            full_ratio = std::max(full_ratio, g.cwiseAbs().maxCoeff() / lipschitz_full(range));
        }
        for (int s = 0; s < 100000; ++s) {
            const std::size_t k = 2 + static_cast<std::size_t>(s % 40);
            const double c = 0.02 + 0.98 * u(rng);
            const ResponseRange range = s % 2 ? default_range(Setting::CrossDevice, k, c)
                                              : ResponseRange{0.3 * u(rng), 0.5 + u(rng)};
            Rng sampler(static_cast<std::uint64_t>(s));
            const IndexSet subset = sample_clients(k, c, sampler);
            const double inclusion = static_cast<double>(subset.size()) / static_cast<double>(k);
            Vector seen = oracle::random_uniform(rng, static_cast<Eigen::Index>(subset.size()), range.c1, range.c2);
            if (s % 3 == 0) seen(0) = range.c2;
            if (s % 3 == 1) seen(0) = range.c1;
            const Vector est = dr_estimate({seen, range, false}, subset, inclusion, k).values;
            const Vector r0 = Vector::Constant(static_cast<Eigen::Index>(k), seen.mean());
            const Vector p = oracle::random_simplex_point(rng, static_cast<Eigen::Index>(k));
            const Vector g = linearized_gradient(SimplexVector(p), est, r0);
            dr_ratio = std::max(dr_ratio, g.cwiseAbs().maxCoeff() / lipschitz_dr(range, inclusion));
        }
        bool exact = true;
        for (double c : {0.001, 0.00612, 0.1, 0.25, 0.5, 1.0})
            exact = exact && lipschitz_dr({0.0, c}, c) == c + 2.0;
        return Verdict{full_ratio <= 1.0 && dr_ratio <= 1.0 && exact,
                       fmt("max |g|/L_full %.6f, max |g_dr|/L_dr %.6f over 1e5 samples each; L_dr(0,C;C) == C+2: %s",
                           full_ratio, dr_ratio, exact ? "yes" : "no")};
    });

    criterion(10, "directional_fairness", 300.0, [] {
        auto make = [](Method method, std::uint64_t seed) {
            FederationConfig cfg;
            cfg.k = 20;
            cfg.t_rounds = 100;
            cfg.method = method;
            cfg.setting = Setting::CrossSilo;
            cfg.seed = seed;
            cfg.data.concentration = 0.1;
            return cfg;
        };
        double gini_s = 0.0, gini_f = 0.0, worst_s = 0.0, worst_f = 0.0, avg_s = 0.0, avg_f = 0.0;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const auto ours = run_silo(make(Method::AaggffS, seed));
            const auto base = run_silo(make(Method::FedAvg, seed));
            if (ours.failure || base.failure) return Verdict{false, "run failed"};
            const PerformanceDistribution a(ours.evaluation->test_accuracy);
            const PerformanceDistribution b(base.evaluation->test_accuracy);
            gini_s += gini(a) / 5.0;
            gini_f += gini(b) / 5.0;
            worst_s += worst_best(a).worst / 5.0;
            worst_f += worst_best(b).worst / 5.0;
            avg_s += a.mean() / 5.0;
            avg_f += b.mean() / 5.0;
        }
        const bool pass = gini_s <= gini_f && worst_s >= worst_f && std::abs(avg_s - avg_f) <= 2.0;
        return Verdict{pass, fmt("Gini x100 %.2f vs %.2f, worst10 %.2f vs %.2f, avg %.2f vs %.2f (aaggff-s vs fedavg)",
                                 100.0 * gini_s, 100.0 * gini_f, worst_s, worst_f, avg_s, avg_f)};
    });

    criterion(11, "determinism", 0.0, [] {
        int identical = 0;
        int total = 0;
        for (Method m : {Method::AaggffS, Method::AaggffD, Method::QFedAvg}) {
            FederationConfig cfg;
            cfg.k = 16;
            cfg.t_rounds = 10;
            cfg.method = m;
            cfg.setting = m == Method::AaggffS ? Setting::CrossSilo
                          : m == Method::AaggffD ? Setting::CrossDevice
                                                 : Setting::CrossSilo;
            if (m == Method::AaggffD) cfg.c = 0.25;
            cfg.seed = 77;
            cfg.threads = 1;
            const std::string serial = to_jsonl(round_log("det", run_federation(cfg)));
            const std::string again = to_jsonl(round_log("det", run_federation(cfg)));
            cfg.threads = 8;
            const std::string parallel = to_jsonl(round_log("det", run_federation(cfg)));
            total += 2;
            identical += (serial == again) + (serial == parallel);
        }
        return Verdict{identical == total,
                       fmt("%d/%d round logs byte-identical (rerun and 1 vs 8 threads)", identical, total)};
    });

    std::printf("%s: %d criterion(s) failed\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
