#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "covar/errors.hpp"
#include "covar/estimators.hpp"
#include "covar/harness.hpp"
#include "covar/rng.hpp"
#include "covar/stats.hpp"
#include "testutil.hpp"

using namespace covar;

TEST_CASE("empirical quantile order-statistic convention") {
    CHECK(empirical_quantile({5.0}, 0.3) == 5.0);
    CHECK(empirical_quantile({5.0}, 0.97) == 5.0);
    std::vector<double> seq;
    for (int i = 100; i >= 1; --i) seq.push_back(i);
    CHECK(empirical_quantile(seq, 0.95) == 95.0);
    CHECK(empirical_quantile(seq, 0.001) == 1.0);
    CHECK_THROWS_AS(empirical_quantile({}, 0.5), EmptyInput);
}

TEST_CASE("empirical quantile matches the analytic normal quantile") {
    RandomStream rs(fold(1, 2));
    std::vector<double> xs(100000);
    for (auto& x : xs) x = rs.normal();
    CHECK(std::fabs(empirical_quantile(xs, 0.95) - 1.6449) < 0.02);
}

TEST_CASE("batching on trivial shapes") {
    BatchingResult one = batching_covar({{3.0, 42.0}}, 1, 1, 0.95, 0.95);
    CHECK(one.covar == 42.0);
    CHECK(one.var_hat == 3.0);

    // mu=(3,1,2), pi=(30,10,20), alpha=0.5: ceil(0.5*3)=2nd smallest mu is 2
    BatchingResult hand =
        batching_covar({{3.0, 30.0}, {1.0, 10.0}, {2.0, 20.0}}, 1, 3, 0.5, 0.95);
    CHECK(hand.covar == 20.0);

    CHECK_THROWS_AS(batching_covar({{1.0, 1.0}, {2.0, 2.0}}, 3, 1, 0.5, 0.5), ShapeMismatch);
}

TEST_CASE("batching agrees with a brute-force reimplementation") {
    RandomStream rs(fold(31, 1));
    for (int rep = 0; rep < 200; ++rep) {
        const long k = 1 + static_cast<long>(rs.below(5));
        const long h = 1 + static_cast<long>(rs.below(20));
        const double alpha = 0.05 + 0.9 * rs.uniform01();
        const double beta = 0.05 + 0.9 * rs.uniform01();
        std::vector<std::pair<double, double>> pairs;
        for (long i = 0; i < k * h; ++i) pairs.push_back({rs.normal(), rs.normal()});
        const double got = batching_covar(pairs, k, h, alpha, beta).covar;
        const double want = testutil::batching_brute_force(pairs, k, h, alpha, beta);
        CHECK(got == want);
    }
}

TEST_CASE("batching handles ties by original index, matching brute force") {
    RandomStream rs(fold(32, 9));
    for (int rep = 0; rep < 100; ++rep) {
        const long k = 1 + static_cast<long>(rs.below(4));
        const long h = 2 + static_cast<long>(rs.below(10));
        std::vector<std::pair<double, double>> pairs;
        for (long i = 0; i < k * h; ++i)
            pairs.push_back({static_cast<double>(rs.below(4)), rs.normal()});  // many ties
        const double got = batching_covar(pairs, k, h, 0.6, 0.6).covar;
        const double want = testutil::batching_brute_force(pairs, k, h, 0.6, 0.6);
        CHECK(got == want);
    }
}

TEST_CASE("permuting pairs inside one batch leaves its concomitant unchanged") {
    RandomStream rs(fold(33, 3));
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < 40; ++i) pairs.push_back({rs.normal(), rs.normal()});
    const BatchingResult base = batching_covar(pairs, 4, 10, 0.8, 0.6);
    // shuffle inside batch 2 only (distinct mu values almost surely)
    auto shuffled = pairs;
    for (long i = 9; i > 0; --i)
        std::swap(shuffled[20 + i], shuffled[20 + static_cast<long>(rs.below(
                                                      static_cast<std::uint64_t>(i + 1)))]);
    const BatchingResult perm = batching_covar(shuffled, 4, 10, 0.8, 0.6);
    CHECK(base.concomitants[2] == perm.concomitants[2]);
    CHECK(base.covar == perm.covar);
}

TEST_CASE("covar estimate is equivariant in pi and rank-invariant in mu") {
    RandomStream rs(fold(34, 5));
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < 60; ++i) pairs.push_back({rs.normal(), rs.normal()});
    const double base = batching_covar(pairs, 6, 10, 0.9, 0.7).covar;

    auto shifted = pairs;
    for (auto& p : shifted) p.second += 3.5;
    CHECK(batching_covar(shifted, 6, 10, 0.9, 0.7).covar == doctest::Approx(base + 3.5));

    auto scaled = pairs;
    for (auto& p : scaled) p.second *= 2.25;
    CHECK(batching_covar(scaled, 6, 10, 0.9, 0.7).covar == doctest::Approx(base * 2.25));

    auto warped = pairs;
    for (auto& p : warped) p.first = std::exp(p.first) + p.first;  // strictly increasing
    CHECK(batching_covar(warped, 6, 10, 0.9, 0.7).covar == base);
}

TEST_CASE("batching estimator hits the bivariate normal oracle") {
    const double want = toy_gaussian_covar(0.5, 0.95, 0.95);
    CHECK(want == doctest::Approx(2.2469).epsilon(1e-4));
    Eigen::VectorXd mu, pi;
    toy_gaussian_pairs(0.5, 250000, 2026, &mu, &pi);
    const double got = batching_covar(mu, pi, 500, 500, 0.95, 0.95).covar;
    CHECK(std::fabs(got - want) / want < 0.02);
}

TEST_CASE("budget allocation closed cases") {
    const BudgetAllocation sns = allocate_budget(1e4, AllocationStrategy::kSnsOpt, {});
    CHECK(sns.l == 10);
    CHECK(sns.h == 10);
    CHECK(sns.k == 100);
    CHECK(sns.n == 1000);

    BudgetConstants dec;
    dec.l = 20;
    dec.n = 250000;
    const BudgetAllocation d = allocate_budget(1e6, AllocationStrategy::kDecoupled, dec);
    CHECK(d.m == 50000);
    CHECK(d.l == 20);
    CHECK(d.n == d.k * d.h);

    CHECK_THROWS_AS(allocate_budget(32, AllocationStrategy::kSnsOpt, {}), InfeasibleBudget);
}

TEST_CASE("sns allocation stays within budget and near the real-valued optimum") {
    const double gamma = 123456.0;
    const BudgetAllocation a = allocate_budget(gamma, AllocationStrategy::kSnsOpt, {});
    CHECK(static_cast<double>(a.k) * a.h * a.l <= gamma);
    const double g14 = std::pow(gamma, 0.25);
    CHECK(std::fabs(a.l - g14) <= 1.0);
    CHECK(std::fabs(a.h - g14) <= 1.0);
    CHECK(std::fabs(a.k - std::sqrt(gamma)) <= 1.0);
}

TEST_CASE("rate rule picks n from the first-stage size") {
    BudgetConstants c;
    c.l = 10;
    c.rate_rule = true;
    const BudgetAllocation a = allocate_budget(1e4, AllocationStrategy::kDecoupled, c);
    CHECK(a.m == 1000);
    CHECK(a.n >= static_cast<long>(std::pow(a.m, 1.5)) - a.h);
}

TEST_CASE("estimator config invariants") {
    EstimatorConfig cfg;
    cfg.k = 10;
    cfg.h = 10;
    cfg.n = 99;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg.n = 100;
    cfg.alpha = 1.5;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
}

namespace {

MarketModel stock_world(double mu, double sigma) {
    return testutil::one_asset_model(mu, sigma, 0.05, 100.0, 50, 2);
}

PortfolioSpec stock_portfolio(const MarketModel& model, double w1) {
    Eigen::VectorXd ks = Eigen::VectorXd::Constant(1, 105.0);
    Eigen::VectorXd bar = Eigen::VectorXd::Constant(1, 120.0);
    return make_portfolio(model, w1, 0.0, 0.0, ks, ks, bar);
}

}  // namespace

TEST_CASE("zero inner-noise limit: sns on exact losses equals batching on exact losses") {
    // stock-only portfolios have no inner-level randomness, so Xbar is the
    // exact loss and the two code paths must coincide bit for bit.
    const MarketModel model = stock_world(0.1, 0.2);
    const PortfolioSpec pa = stock_portfolio(model, 1.0);
    const PortfolioSpec pb = stock_portfolio(model, 2.0);
    EstimatorConfig cfg;
    cfg.k = 20;
    cfg.h = 25;
    cfg.n = 500;
    cfg.l = 1;
    cfg.seed = 99;
    const EstimateReport sns = naive_sns_covar(model, pa, pb, cfg);
    EstimatorConfig cfg2 = cfg;
    cfg2.l = 0;
    const EstimateReport exact = batching_exact_covar(model, pa, pb, cfg2);
    CHECK(sns.covar_hat == exact.covar_hat);
}

TEST_CASE("q=1 stock-only miniature matches the analytic lognormal CoVaR") {
    const double mu = 0.1, sigma = 0.2;
    const MarketModel model = stock_world(mu, sigma);
    const PortfolioSpec pa = stock_portfolio(model, 1.0);
    const PortfolioSpec pb = stock_portfolio(model, 2.0);
    const double tau = model.tau();
    const double alpha = 0.95;
    // With a single risk factor, loss_b = 2 * loss_a exactly: the conditional
    // law at the ZPE is a point mass and CoVaR = 2 * q_alpha(loss_a) for every
    // beta. beta = 0.5 keeps the batching estimator in its O(1/h + 1/k) bias
    // regime (the degenerate pair has an O(h^{-1/2}) bias at beta far from
    // one half).
    const double s_q =
        std::exp(std::log(100.0) + (mu - 0.5 * sigma * sigma) * tau +
                 sigma * std::sqrt(tau) * inv_norm_cdf(1.0 - alpha));
    const double analytic = 2.0 * (100.0 - s_q);

    EstimatorConfig cfg;
    cfg.alpha = alpha;
    cfg.beta = 0.5;
    cfg.k = 20;
    cfg.h = 500;
    cfg.n = 10000;  // budget 1e4 with l = 1
    cfg.l = 1;
    std::vector<double> estimates;
    for (int rep = 0; rep < 10; ++rep) {
        cfg.seed = fold(555, rep);
        estimates.push_back(naive_sns_covar(model, pa, pb, cfg).covar_hat);
    }
    const auto stats = testutil::mean_stats(estimates);
    CHECK(std::fabs(stats.mean - analytic) < 3.0 * std::max(stats.se, 1e-12) +
                                                 0.03 * std::fabs(analytic));
}

TEST_CASE("coupled linear smoothing with a perfectly specified basis equals exact batching") {
    const MarketModel model = stock_world(0.1, 0.2);
    const PortfolioSpec pa = stock_portfolio(model, 1.0);
    const PortfolioSpec pb = stock_portfolio(model, 2.0);
    EstimatorConfig cfg;
    cfg.k = 10;
    cfg.h = 50;
    cfg.n = 500;
    cfg.l = 1;
    cfg.seed = 44;
    SmootherOptions opts;
    opts.tune_enabled = false;
    BasisSpec basis;
    basis.degree = 1;  // losses are affine in (s_tau, run_max, geo_partial)
    opts.grid.bases = {basis};
    const EstimateReport smoothed =
        naive_smoothed_covar(model, pa, pb, cfg, SmootherFamily::kLinear, opts);
    const EstimateReport exact = batching_exact_covar(model, pa, pb, cfg);
    CHECK(smoothed.covar_hat == doctest::Approx(exact.covar_hat).epsilon(1e-8));
}

TEST_CASE("decoupled with oracle surfaces reproduces exact batching bit for bit") {
    const int q = 2;
    Eigen::VectorXd drift = Eigen::VectorXd::Constant(q, 0.09);
    Eigen::VectorXd s0 = Eigen::VectorXd::Constant(q, 100.0);
    Eigen::MatrixXd cov(q, q);
    cov << 0.04, 0.01, 0.01, 0.0625;
    const MarketModel model = make_market_model(
        q, drift, 0.05, cov, Eigen::VectorXd::LinSpaced(20, 0.05, 1.0), 2, s0);
    Eigen::VectorXd ks = Eigen::VectorXd::Constant(q, 105.0);
    Eigen::VectorXd bar = Eigen::VectorXd::Constant(q, 120.0);
    const PortfolioSpec pa = make_portfolio(model, 2, 1, -1, ks, ks, bar);
    const PortfolioSpec pb = make_portfolio(model, 2, -1, 3, ks, ks, bar);

    const FunctionSurface mu_oracle(3 * q, [&](const Eigen::VectorXd& z) {
        return closed_form_loss(pa, model, RiskFactorVector::unflatten(z));
    });
    const FunctionSurface pi_oracle(3 * q, [&](const Eigen::VectorXd& z) {
        return closed_form_loss(pb, model, RiskFactorVector::unflatten(z));
    });

    EstimatorConfig cfg;
    cfg.k = 25;
    cfg.h = 40;
    cfg.n = 1000;
    cfg.seed = 777;
    const EstimateReport dec = decoupled_covar(model, pa, pb, cfg, SmootherFamily::kKrr, {},
                                               &mu_oracle, &pi_oracle);
    const EstimateReport exact = batching_exact_covar(model, pa, pb, cfg);
    CHECK(dec.covar_hat == exact.covar_hat);
    CHECK(dec.var_hat == exact.var_hat);
}

TEST_CASE("decoupled stage streams are disjoint from stage-two scenarios") {
    // same seed: the stage-1 training draw must not overlap the stage-2
    // estimation draw; check by comparing scenario streams directly
    const MarketModel model = stock_world(0.1, 0.2);
    const std::uint64_t seed = 31415;
    const auto s1 = simulate_outer(model, 4, fold(seed, stream_tag::kStageOne));
    const auto s2 = simulate_outer(model, 4, fold(seed, stream_tag::kStageTwo));
    for (int i = 0; i < 4; ++i) CHECK(s1[i].s_tau[0] != s2[i].s_tau[0]);
}

TEST_CASE("estimate report json is stable and timings are zeroed by default") {
    Eigen::VectorXd mu, pi;
    toy_gaussian_pairs(0.5, 100, 5, &mu, &pi);
    const BatchingResult res = batching_covar(mu, pi, 10, 10, 0.9, 0.9);
    EstimateReport report;
    report.covar_hat = res.covar;
    report.var_hat = res.var_hat;
    report.family = "exact";
    report.coupling = "batching";
    report.config.k = 10;
    report.config.h = 10;
    report.config.n = 100;
    report.timings.sim1 = 1.23;  // measured, but not serialized by default
    const std::string a = report.to_json();
    CHECK(a.find("\"sim1\":0") != std::string::npos);
    CHECK(report.to_json() == a);
    CHECK(report.to_json(true).find("1.23") != std::string::npos);
}
