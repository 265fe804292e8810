#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "covar/errors.hpp"
#include "covar/pricing.hpp"
#include "covar/rng.hpp"
#include "covar/stats.hpp"
#include "testutil.hpp"

using namespace covar;

TEST_CASE("bs call limits") {
    CHECK(bs_call_price(100.0, 1e-12, 0.05, 0.2, 1.0) == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(bs_call_price(110.0, 100.0, 0.05, 0.2, 0.0) == doctest::Approx(10.0));
    CHECK(bs_call_price(90.0, 100.0, 0.05, 0.2, 0.0) == 0.0);
    CHECK_THROWS_AS(bs_call_price(-1.0, 100.0, 0.05, 0.2, 1.0), DomainError);
}

TEST_CASE("bs call matches the lognormal quadrature oracle") {
    const double got = bs_call_price(100.0, 105.0, 0.05, 0.2, 1.0);
    const double want = testutil::bs_call_quadrature(100.0, 105.0, 0.05, 0.2, 1.0);
    CHECK(std::fabs(got - want) < 1e-8);
    // a second point, deep out of the money
    CHECK(std::fabs(bs_call_price(80.0, 120.0, 0.02, 0.35, 0.5) -
                    testutil::bs_call_quadrature(80.0, 120.0, 0.02, 0.35, 0.5)) < 1e-8);
}

TEST_CASE("bs call is increasing in spot and vol") {
    double prev = 0.0;
    for (double s = 60.0; s <= 140.0; s += 5.0) {
        const double p = bs_call_price(s, 100.0, 0.05, 0.2, 1.0);
        CHECK(p >= prev);
        prev = p;
    }
    prev = 0.0;
    for (double sig = 0.05; sig <= 0.8; sig += 0.05) {
        const double p = bs_call_price(100.0, 105.0, 0.05, sig, 1.0);
        CHECK(p > prev);
        prev = p;
    }
}

TEST_CASE("barrier call knocked out and barrier-to-infinity limits") {
    CHECK(barrier_uoc_price(130.0, 105.0, 120.0, 0.05, 0.2, 1.0) == 0.0);
    CHECK(barrier_uoc_price(120.0, 105.0, 120.0, 0.05, 0.2, 1.0) == 0.0);
    const double vanilla = bs_call_price(100.0, 105.0, 0.05, 0.2, 1.0);
    const double far = barrier_uoc_price(100.0, 105.0, 1e8, 0.05, 0.2, 1.0);
    CHECK(std::fabs(far - vanilla) < 1e-6);
}

TEST_CASE("barrier price vanishes as spot approaches the barrier") {
    // the up-and-out value peaks below the barrier, then falls to zero at it
    double prev = barrier_uoc_price(112.0, 105.0, 120.0, 0.05, 0.2, 1.0);
    for (double s = 114.0; s < 120.0; s += 2.0) {
        const double p = barrier_uoc_price(s, 105.0, 120.0, 0.05, 0.2, 1.0);
        CHECK(p < prev);
        prev = p;
    }
    CHECK(barrier_uoc_price(119.99, 105.0, 120.0, 0.05, 0.2, 1.0) < 0.05);
}

TEST_CASE("barrier formula vs Monte Carlo: bridge corrected hits, uncorrected overprices") {
    const double s0 = 100.0, k = 105.0, b = 120.0, r = 0.05, sigma = 0.2, ttm = 1.0;
    const int steps = 50;
    const double dt = ttm / steps;
    const double want = barrier_uoc_price(s0, k, b, r, sigma, ttm);

    const long n = 1000000;
    RandomStream rs(fold(314159, 1));
    double sum_c = 0.0, ss_c = 0.0;  // bridge corrected
    double sum_u = 0.0, ss_u = 0.0;  // discrete max only
    for (long i = 0; i < n; ++i) {
        double x = std::log(s0);
        double max_disc = s0, max_bridge = s0;
        for (int l = 0; l < steps; ++l) {
            const double x_next =
                x + (r - 0.5 * sigma * sigma) * dt + sigma * std::sqrt(dt) * rs.normal();
            const double m =
                bridge_max_sample(std::exp(x), std::exp(x_next), sigma, dt, rs.uniform01());
            max_bridge = std::max(max_bridge, m);
            x = x_next;
            max_disc = std::max(max_disc, std::exp(x));
        }
        const double st = std::exp(x);
        const double payoff = st > k ? st - k : 0.0;
        const double pc = std::exp(-r * ttm) * payoff * (max_bridge <= b ? 1.0 : 0.0);
        const double pu = std::exp(-r * ttm) * payoff * (max_disc <= b ? 1.0 : 0.0);
        sum_c += pc;
        ss_c += pc * pc;
        sum_u += pu;
        ss_u += pu * pu;
    }
    const double mean_c = sum_c / n;
    const double se_c = std::sqrt((ss_c / n - mean_c * mean_c) / n);
    const double mean_u = sum_u / n;
    const double se_u = std::sqrt((ss_u / n - mean_u * mean_u) / n);

    CHECK(std::fabs(mean_c - want) < 3.0 * se_c);
    CHECK(mean_u - want > 3.0 * se_u);  // discrete monitoring misses knockouts
}

TEST_CASE("heston degenerates to Black-Scholes when variance is pinned") {
    HestonParams p;
    p.kappa = 50.0;
    p.theta = 0.04;
    p.sigma_v = 1e-4;
    p.rho = 0.0;
    p.v0 = 0.04;
    p.lambda_h = 0.0;
    const double heston = heston_call_price(100.0, p, 105.0, 0.05, 1.0);
    const double bs = bs_call_price(100.0, 105.0, 0.05, 0.2, 1.0);
    CHECK(std::fabs(heston - bs) / bs < 1e-3);
}

TEST_CASE("heston probabilities stay in [0,1] and the integrand tail decays") {
    const double configs[][6] = {
        // kappa, theta, sigma_v, rho, v0, ttm
        {2.0, 0.04, 0.3, -0.5, 0.04, 1.0},
        {1.0, 0.09, 0.5, -0.7, 0.05, 2.0},
        {3.0, 0.02, 0.2, 0.3, 0.03, 0.25},
        {50.0, 0.04, 1e-4, 0.0, 0.04, 1.0},
    };
    for (const auto& c : configs) {
        HestonParams p;
        p.kappa = c[0];
        p.theta = c[1];
        p.sigma_v = c[2];
        p.rho = c[3];
        p.v0 = c[4];
        const auto prob = heston_call_probabilities(100.0, p, 105.0, 0.05, c[5]);
        CHECK(prob.p1 >= 0.0);
        CHECK(prob.p1 <= 1.0);
        CHECK(prob.p2 >= 0.0);
        CHECK(prob.p2 <= 1.0);
        CHECK(prob.tail_ratio < 1e-10);
    }
}

TEST_CASE("heston deep in the money approaches forward intrinsic") {
    HestonParams p;
    p.kappa = 2.0;
    p.theta = 0.04;
    p.sigma_v = 0.3;
    p.rho = -0.5;
    p.v0 = 0.04;
    const double price = heston_call_price(300.0, p, 100.0, 0.05, 0.1);
    const double intrinsic = 300.0 - 100.0 * std::exp(-0.05 * 0.1);
    CHECK(std::fabs(price - intrinsic) / intrinsic < 1e-3);
}

TEST_CASE("conditional geometric Asian: all fixings known and deterministic limits") {
    // all fixings observed: discounted intrinsic on the partial mean
    CHECK(geo_asian_call_conditional(100.0, 110.0, 105.0, 0.05, 0.2, 0.02, 50, 50) ==
          doctest::Approx(5.0));
    CHECK(geo_asian_call_conditional(100.0, 90.0, 105.0, 0.05, 0.2, 0.02, 50, 50) == 0.0);
    // sigma -> 0: remaining fixings grow deterministically at r
    const double got = geo_asian_call_conditional(100.0, 100.0, 95.0, 0.05, 0.0, 0.02, 50, 2);
    const double r = 0.05, dt = 0.02;
    const int m = 50, m_tau = 2;
    const double rem = m - m_tau;
    const double lng =
        (m_tau * std::log(100.0) + rem * std::log(100.0) + r * dt * rem * (rem + 1) / 2.0) / m;
    const double want = std::exp(-r * dt * rem) * std::max(std::exp(lng) - 95.0, 0.0);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("conditional geometric Asian matches conditional Monte Carlo") {
    const double s_tau = 100.0, gp = 100.0, k = 105.0, r = 0.05, sigma = 0.2, dt = 0.02;
    const int m = 50, m_tau = 2;
    const double want = geo_asian_call_conditional(s_tau, gp, k, r, sigma, dt, m, m_tau);

    RandomStream rs(fold(2718, 5));
    const long n = 1000000;
    double sum = 0.0, ss = 0.0;
    const double disc = std::exp(-r * dt * (m - m_tau));
    for (long i = 0; i < n; ++i) {
        double x = std::log(s_tau);
        double acc = m_tau * std::log(gp);
        for (int l = m_tau; l < m; ++l) {
            x += (r - 0.5 * sigma * sigma) * dt + sigma * std::sqrt(dt) * rs.normal();
            acc += x;
        }
        const double g = std::exp(acc / m);
        const double payoff = disc * (g > k ? g - k : 0.0);
        sum += payoff;
        ss += payoff * payoff;
    }
    const double mean = sum / n;
    const double se = std::sqrt((ss / n - mean * mean) / n);
    CHECK(std::fabs(mean - want) < 3.0 * se);
}

TEST_CASE("portfolio construction validates terms") {
    const MarketModel model = testutil::one_asset_model(0.1, 0.2, 0.05, 100.0, 50, 2);
    Eigen::VectorXd ks = Eigen::VectorXd::Constant(1, 105.0);
    Eigen::VectorXd bar_low = Eigen::VectorXd::Constant(1, 90.0);
    CHECK_THROWS_AS(make_portfolio(model, 1, 1, 1, ks, ks, bar_low), DomainError);

    Eigen::VectorXd bar = Eigen::VectorXd::Constant(1, 120.0);
    const PortfolioSpec p = make_portfolio(model, 2, 1, -1, ks, ks, bar);
    const double v0_want =
        2 * 100.0 +
        geo_asian_call_conditional(100.0, 1.0, 105.0, 0.05, 0.2, 0.02, 50, 0) -
        barrier_uoc_price(100.0, 105.0, 120.0, 0.05, 0.2, 1.0);
    CHECK(p.v0 == doctest::Approx(v0_want));
}

TEST_CASE("closed-form loss trivial cases") {
    const MarketModel model = testutil::one_asset_model(0.1, 0.2, 0.05, 100.0, 50, 2);
    Eigen::VectorXd ks = Eigen::VectorXd::Constant(1, 105.0);
    Eigen::VectorXd bar = Eigen::VectorXd::Constant(1, 120.0);

    RiskFactorVector z;
    z.s_tau = Eigen::VectorXd::Constant(1, 101.0);
    z.run_max = Eigen::VectorXd::Constant(1, 125.0);  // above the barrier
    z.geo_partial = Eigen::VectorXd::Constant(1, 100.5);

    const PortfolioSpec barrier_only = make_portfolio(model, 0, 0, 1, ks, ks, bar);
    CHECK(closed_form_loss(barrier_only, model, z) == doctest::Approx(barrier_only.v0));

    const PortfolioSpec stock_only = make_portfolio(model, 1, 0, 0, ks, ks, bar);
    CHECK(closed_form_value_tau(stock_only, model, z) == doctest::Approx(z.s_tau.sum()));
}

TEST_CASE("discounted losses: stock leg exact, knockout zeroes the barrier leg") {
    const MarketModel model = testutil::one_asset_model(0.1, 0.2, 0.05, 100.0, 10, 2);
    Eigen::VectorXd ks = Eigen::VectorXd::Constant(1, 105.0);
    Eigen::VectorXd bar = Eigen::VectorXd::Constant(1, 120.0);
    const PortfolioSpec stock_only = make_portfolio(model, 1, 0, 0, ks, ks, bar);
    const PortfolioSpec barrier_only = make_portfolio(model, 0, 0, 1, ks, ks, bar);

    const auto z = simulate_outer(model, 1, 31)[0];
    const auto bundles = simulate_inner(model, z, 8, 31, 0);

    const auto stock_losses = discounted_losses(stock_only, model, z, bundles);
    for (double v : stock_losses)
        CHECK(v == doctest::Approx(stock_only.v0 - z.s_tau.sum()));

    for (std::size_t j = 0; j < bundles.size(); ++j) {
        if (bundles[j].bridge_max[0] > 120.0) {
            const auto lb = discounted_losses(barrier_only, model, z, {bundles[j]});
            CHECK(lb[0] == doctest::Approx(barrier_only.v0));
        }
    }
}

TEST_CASE("mismatched scenario is rejected") {
    const MarketModel model = testutil::one_asset_model(0.1, 0.2, 0.05, 100.0, 10, 2);
    Eigen::VectorXd ks = Eigen::VectorXd::Constant(1, 105.0);
    Eigen::VectorXd bar = Eigen::VectorXd::Constant(1, 120.0);
    const PortfolioSpec p = make_portfolio(model, 1, 1, 1, ks, ks, bar);
    const auto zs = simulate_outer(model, 2, 11);
    const auto bundles = simulate_inner(model, zs[0], 2, 11, 0);
    CHECK_THROWS_AS(discounted_losses(p, model, zs[1], bundles), MismatchedScenario);
}

TEST_CASE("mean of inner losses matches the closed-form loss at a fixed scenario") {
    const int q = 2;
    Eigen::VectorXd drift = Eigen::VectorXd::Constant(q, 0.1);
    Eigen::VectorXd s0 = Eigen::VectorXd::Constant(q, 100.0);
    Eigen::MatrixXd cov(q, q);
    cov << 0.04, 0.018, 0.018, 0.09;
    Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(10, 0.1, 1.0);
    const MarketModel model = make_market_model(q, drift, 0.05, cov, grid, 2, s0);
    Eigen::VectorXd ks = Eigen::VectorXd::Constant(q, 105.0);
    Eigen::VectorXd bar = Eigen::VectorXd::Constant(q, 120.0);
    const PortfolioSpec p = make_portfolio(model, 2.0, 1.0, -1.0, ks, ks, bar);

    const auto z = simulate_outer(model, 1, 64)[0];
    const double want = closed_form_loss(p, model, z);

    const long n = 1000000;
    const long chunk = 10000;
    double sum = 0.0, ss = 0.0;
    for (long c = 0; c < n / chunk; ++c) {
        const auto bundles = simulate_inner(model, z, chunk, 64, c);
        const auto losses = discounted_losses(p, model, z, bundles);
        for (double v : losses) {
            sum += v;
            ss += v * v;
        }
    }
    const double mean = sum / n;
    const double se = std::sqrt((ss / n - mean * mean) / n);
    CHECK(std::fabs(mean - want) < 3.0 * se);
}

TEST_CASE("per-leg discounted martingale check at tau") {
    const MarketModel model = testutil::one_asset_model(0.1, 0.25, 0.05, 100.0, 10, 2);
    Eigen::VectorXd ks = Eigen::VectorXd::Constant(1, 105.0);
    Eigen::VectorXd bar = Eigen::VectorXd::Constant(1, 120.0);
    const auto z = simulate_outer(model, 1, 123)[0];

    const double dt = model.maturity() / model.steps();
    const double rem = model.maturity() - model.tau();
    const double asian_want = geo_asian_call_conditional(z.s_tau[0], z.geo_partial[0], 105.0,
                                                         0.05, 0.25, dt, 10, 2);
    const double barrier_want =
        z.run_max[0] <= 120.0
            ? barrier_uoc_price(z.s_tau[0], 105.0, 120.0, 0.05, 0.25, rem)
            : 0.0;

    const long n = 100000;
    const long chunk = 10000;
    double sum_a = 0.0, ss_a = 0.0, sum_b = 0.0, ss_b = 0.0;
    const double disc = std::exp(-0.05 * rem);
    for (long c = 0; c < n / chunk; ++c) {
        const auto bundles = simulate_inner(model, z, chunk, 123, c);
        for (const auto& bd : bundles) {
            const double g = std::exp(bd.geo_log_sum[0] / 10.0);
            const double pa = disc * (g > 105.0 ? g - 105.0 : 0.0);
            const double st = bd.prices(0, bd.prices.cols() - 1);
            const double pb =
                disc * (st > 105.0 ? st - 105.0 : 0.0) * (bd.bridge_max[0] <= 120.0 ? 1.0 : 0.0);
            sum_a += pa;
            ss_a += pa * pa;
            sum_b += pb;
            ss_b += pb * pb;
        }
    }
    const double mean_a = sum_a / n;
    const double se_a = std::sqrt((ss_a / n - mean_a * mean_a) / n);
    CHECK(std::fabs(mean_a - asian_want) < 3.0 * se_a);
    const double mean_b = sum_b / n;
    const double se_b = std::sqrt((ss_b / n - mean_b * mean_b) / n);
    CHECK(std::fabs(mean_b - barrier_want) < 3.0 * se_b);
}
