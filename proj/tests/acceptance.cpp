// Acceptance suite: one checked criterion per section, one pass/fail line
// each. Criteria 1-7 run at desk scale; the full 100-asset published-table
// configuration is shipped as configs/paper_q100.plan and takes hours, so it
// is reported as a note, not asserted here.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "covar/harness.hpp"
#include "covar/rng.hpp"
#include "covar/stats.hpp"
#include "testutil.hpp"

using namespace covar;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

struct Criterion {
    const char* name;
    double limit_seconds;
    Clock::time_point start = Clock::now();

    explicit Criterion(const char* n, double limit) : name(n), limit_seconds(limit) {}

    void report(bool ok, const std::string& detail) {
        const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
        const bool in_time = elapsed < limit_seconds;
        if (!ok || !in_time) ++g_failures;
        std::printf("[%s] %s: %s (%.1fs of %.0fs budget)\n",
                    ok && in_time ? "PASS" : "FAIL", name, detail.c_str(), elapsed,
                    limit_seconds);
        std::fflush(stdout);
    }
};

std::string fmt(const char* spec, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), spec, a, b, c, d);
    return buf;
}

struct CmdResult {
    int exit_code = -1;
    std::string output;
};

CmdResult run_cli(const std::string& args) {
    const std::string cmd = std::string(COVAR_CLI_PATH) + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    CmdResult res;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return res;
    while (fgets(buf.data(), buf.size(), pipe)) res.output += buf.data();
    const int status = pclose(pipe);
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- criterion 1: analytic CoVaR oracle --------------------------------------

void criterion_1() {
    Criterion c("criterion 1 analytic-covar-oracle", 60);
    const double rho = 0.5, alpha = 0.95, beta = 0.95;
    const double theta = toy_gaussian_covar(rho, alpha, beta);
    const int reps = 40;
    double sum = 0.0, sq_err = 0.0;
    for (int r = 0; r < reps; ++r) {
        Eigen::VectorXd mu, pi;
        toy_gaussian_pairs(rho, 250000, fold(fold(1001, stream_tag::kReplication), r), &mu, &pi);
        const double est = batching_covar(mu, pi, 500, 500, alpha, beta).covar;
        sum += est;
        sq_err += (est - theta) * (est - theta);
    }
    const double mean_err = std::fabs(sum / reps - theta) / theta;
    const double r_rmse = std::sqrt(sq_err / reps) / theta;
    c.report(mean_err < 0.02 && r_rmse < 0.05,
             fmt("|mean-2.2469|/theta = %.4f (<0.02), r-RMSE = %.4f (<0.05)", mean_err, r_rmse));
}

// ---- criterion 2: batching convergence rate ----------------------------------

void criterion_2() {
    Criterion c("criterion 2 batching-rate", 600);
    const double theta = toy_gaussian_covar(0.5, 0.95, 0.95);
    std::vector<std::pair<double, double>> ladder;
    for (double exp10 : {3.0, 3.5, 4.0, 4.5, 5.0}) {
        const long n = static_cast<long>(std::llround(std::pow(10.0, exp10)));
        const long h = std::max<long>(1, static_cast<long>(std::llround(std::cbrt(n))));
        const long k = n / h;
        double sq = 0.0;
        const int reps = 100;
        for (int r = 0; r < reps; ++r) {
            Eigen::VectorXd mu, pi;
            toy_gaussian_pairs(0.5, k * h,
                               fold(fold(fold(2002, static_cast<std::uint64_t>(n)),
                                         stream_tag::kReplication),
                                    r),
                               &mu, &pi);
            const double est = batching_covar(mu, pi, k, h, 0.95, 0.95).covar;
            sq += (est - theta) * (est - theta);
        }
        ladder.emplace_back(static_cast<double>(n), std::sqrt(sq / reps));
    }
    const RateEstimate rate = rate_analysis(ladder);
    c.report(rate.slope > -0.45 && rate.slope < -0.21,
             fmt("log-RMSE slope vs log n = %.3f +- %.3f (in [-0.45,-0.21])", rate.slope,
                 rate.std_error));
}

// ---- criterion 3: pricing oracles ---------------------------------------------

void criterion_3() {
    Criterion c("criterion 3 pricing-oracles", 300);
    bool ok = true;
    std::string detail;

    const double bs = bs_call_price(100, 105, 0.05, 0.2, 1.0);
    const double quad = testutil::bs_call_quadrature(100, 105, 0.05, 0.2, 1.0);
    ok &= std::fabs(bs - quad) < 1e-8;
    detail += fmt("|bs-quadrature| = %.2e (<1e-8)", std::fabs(bs - quad));

    // bridge-corrected MC hits the closed form; uncorrected overprices
    const double s0 = 100, k = 105, b = 120, r = 0.05, sigma = 0.2, ttm = 1.0;
    const int steps = 50;
    const double want = barrier_uoc_price(s0, k, b, r, sigma, ttm);
    RandomStream rs(fold(3003, 1));
    const long n = 1000000;
    const double dt = ttm / steps;
    double sum_c = 0, ss_c = 0, sum_u = 0, ss_u = 0;
    for (long i = 0; i < n; ++i) {
        double x = std::log(s0);
        double max_d = s0, max_b = s0;
        for (int l = 0; l < steps; ++l) {
            const double xn = x + (r - 0.5 * sigma * sigma) * dt +
                              sigma * std::sqrt(dt) * rs.normal();
            max_b = std::max(max_b,
                             bridge_max_sample(std::exp(x), std::exp(xn), sigma, dt,
                                               rs.uniform01()));
            x = xn;
            max_d = std::max(max_d, std::exp(x));
        }
        const double payoff = std::exp(x) > k ? std::exp(x) - k : 0.0;
        const double pc = std::exp(-r * ttm) * payoff * (max_b <= b);
        const double pu = std::exp(-r * ttm) * payoff * (max_d <= b);
        sum_c += pc;
        ss_c += pc * pc;
        sum_u += pu;
        ss_u += pu * pu;
    }
    const double mean_c = sum_c / n, se_c = std::sqrt((ss_c / n - mean_c * mean_c) / n);
    const double mean_u = sum_u / n, se_u = std::sqrt((ss_u / n - mean_u * mean_u) / n);
    ok &= std::fabs(mean_c - want) < 3 * se_c;
    ok &= (mean_u - want) > 3 * se_u;
    detail += fmt("; barrier |mc-A2|/se = %.2f (<3), uncorrected bias/se = %.1f (>3)",
                  std::fabs(mean_c - want) / se_c, (mean_u - want) / se_u);

    HestonParams hp;
    hp.kappa = 50;
    hp.theta = 0.04;
    hp.sigma_v = 1e-4;
    hp.rho = 0;
    hp.v0 = 0.04;
    const double heston = heston_call_price(100, hp, 105, 0.05, 1.0);
    const double rel = std::fabs(heston - bs) / bs;
    ok &= rel < 1e-3;
    detail += fmt("; heston degenerate rel err = %.2e (<1e-3)", rel);

    c.report(ok, detail);
}

// ---- criterion 4: surface fitting ----------------------------------------------

double test_fn(double z1, double z2) { return z1 * z1 + std::sin(z2); }

TrainingSet sample_fn(long m, std::uint64_t seed) {
    RandomStream rs(fold(seed, 4004));
    Eigen::MatrixXd z(m, 2);
    Eigen::VectorXd y(m);
    for (long i = 0; i < m; ++i) {
        z(i, 0) = -2 + 4 * rs.uniform01();
        z(i, 1) = -2 + 4 * rs.uniform01();
        y[i] = test_fn(z(i, 0), z(i, 1)) + 0.05 * rs.normal();
    }
    return TrainingSet::build(std::move(z), std::move(y));
}

double grid_sup(const SurfaceModel& model) {
    double sup = 0;
    Eigen::VectorXd z(2);
    for (int i = 0; i <= 40; ++i)
        for (int j = 0; j <= 40; ++j) {
            z << -2 + 4.0 * i / 40, -2 + 4.0 * j / 40;
            sup = std::max(sup, std::fabs(model.evaluate_one(z) - test_fn(z[0], z[1])));
        }
    return sup;
}

void criterion_4() {
    Criterion c("criterion 4 surface-fitting", 600);
    const double range = 6.0;  // f on [-2,2]^2 spans [-1, 5]
    bool ok = true;
    std::string detail;

    for (SmootherFamily family :
         {SmootherFamily::kLinear, SmootherFamily::kKernelSmoothing, SmootherFamily::kKrr,
          SmootherFamily::kMlp}) {
        HyperparameterGrid grid;
        grid.lambdas = {1e-7, 1e-6, 1e-5};
        grid.length_scales = {0.5, 1.0, 2.0};
        grid.bandwidth_consts = {0.25, 0.5, 1.0, 2.0};
        grid.widths = {32, 64};
        grid.learning_rates = {0.01};
        grid.mlp_epochs = 300;
        BasisSpec quad;  // degree-2 default basis
        BasisSpec cubic;
        cubic.degree = 3;
        grid.bases = {quad, cubic};
        grid.cv_folds = 3;
        grid.cv_subsample = 800;
        grid.seed = 404;

        const TrainingSet tune_data = sample_fn(2000, 77);
        const TuneResult tuning = tune(tune_data, family, grid);
        const SurfaceModel tuned = fit_with_params(tune_data, family, grid, tuning.best);
        const double sup2000 = grid_sup(tuned);
        ok &= sup2000 < 0.08 * range;
        detail += fmt((family_name(family) + " sup=%.3f").c_str(), sup2000);

        int decreasing = 0;
        for (int seed = 0; seed < 5; ++seed) {
            double prev = 0;
            bool strict = true;
            int idx = 0;
            for (long m : {500L, 2000L, 8000L}) {
                const TrainingSet data = sample_fn(m, 900 + seed);
                const SurfaceModel model = fit_with_params(data, family, grid, tuning.best);
                const double sup = grid_sup(model);
                if (idx++ > 0 && sup >= prev) strict = false;
                prev = sup;
            }
            decreasing += strict;
        }
        ok &= decreasing >= 3;
        detail += fmt(" dec=%.0f/5; ", static_cast<double>(decreasing));
    }
    c.report(ok, detail + fmt("threshold %.3f", 0.08 * range));
}

// ---- criterion 5: decoupled beats coupled at desk scale -------------------------

void criterion_5() {
    Criterion c("criterion 5 decoupled-beats-sns", 1800);
    ExperimentPlan plan;
    plan.model = generate_market_model(10, 0.05, 50, 2, 1.0, 100.0, 20240101);
    Eigen::VectorXd ks = Eigen::VectorXd::Constant(10, 105.0);
    Eigen::VectorXd bar = Eigen::VectorXd::Constant(10, 120.0);
    plan.pa = make_portfolio(plan.model, 2, 1, -1, ks, ks, bar);
    plan.pb = make_portfolio(plan.model, 2, -1, 3, ks, ks, bar);
    plan.alpha = plan.beta = 0.95;
    plan.replications = 20;
    plan.seed = 9;
    plan.threads = 1;
    plan.reference.mode = ReferenceSpec::Mode::kClosedForm;
    plan.reference.n0 = 500000;
    plan.reference.precision = 0.002;
    plan.reference.max_doublings = 5;

    EstimatorRow sns;
    sns.id = "sns";
    sns.kind = "sns";
    sns.gamma = 1e5;

    EstimatorRow dec;
    dec.id = "dec_krr";
    dec.kind = "decoupled";
    dec.family = SmootherFamily::kKrr;
    dec.gamma = 1e5;
    dec.constants.l = 25;
    dec.k = 250;
    dec.h = 250;
    dec.smoother.grid.lambdas = {1e-6, 1e-5, 1e-4};
    dec.smoother.grid.length_scales = {2, 4, 8};
    dec.smoother.grid.cv_folds = 3;
    dec.smoother.grid.cv_subsample = 1500;

    plan.rows = {sns, dec};
    const ExperimentResult result = run_experiment(plan);
    const MetricRow& rs = result.rows[0];
    const MetricRow& rd = result.rows[1];
    const bool ok = !rs.failed && !rd.failed && rd.r_rmse < 0.5 * rs.r_rmse;
    c.report(ok, fmt("theta=%.2f, sns r-RMSE=%.4f, decoupled-KRR r-RMSE=%.4f (< 0.5x)",
                     result.reference_theta, rs.r_rmse, rd.r_rmse));
}

// ---- criterion 6: oracle-surface equivalence ------------------------------------

void criterion_6() {
    Criterion c("criterion 6 oracle-surface-equivalence", 60);
    bool ok = true;
    RandomStream rs(fold(6006, 3));
    for (int trial = 0; trial < 10; ++trial) {
        const int q = 1 + static_cast<int>(rs.below(3));
        const MarketModel model = generate_market_model(
            q, 0.05, 20, 1 + static_cast<int>(rs.below(3)), 1.0, 100.0, fold(6006, trial));
        Eigen::VectorXd k1 = Eigen::VectorXd::Constant(q, 100.0 + 10.0 * rs.uniform01());
        Eigen::VectorXd k2 = Eigen::VectorXd::Constant(q, 100.0 + 10.0 * rs.uniform01());
        Eigen::VectorXd barrier = Eigen::VectorXd::Constant(q, 115.0 + 10.0 * rs.uniform01());
        const PortfolioSpec pa = make_portfolio(model, 2, 1, -1, k1, k2, barrier);
        const PortfolioSpec pb = make_portfolio(model, 2, -1, 3, k1, k2, barrier);

        EstimatorConfig cfg;
        cfg.alpha = 0.8 + 0.15 * rs.uniform01();
        cfg.beta = 0.8 + 0.15 * rs.uniform01();
        cfg.k = 10 + static_cast<long>(rs.below(30));
        cfg.h = 10 + static_cast<long>(rs.below(30));
        cfg.n = cfg.k * cfg.h;
        cfg.seed = fold(42, trial);

        const FunctionSurface mu_oracle(3 * q, [&](const Eigen::VectorXd& z) {
            return closed_form_loss(pa, model, RiskFactorVector::unflatten(z));
        });
        const FunctionSurface pi_oracle(3 * q, [&](const Eigen::VectorXd& z) {
            return closed_form_loss(pb, model, RiskFactorVector::unflatten(z));
        });
        const EstimateReport dec = decoupled_covar(model, pa, pb, cfg, SmootherFamily::kKrr, {},
                                                   &mu_oracle, &pi_oracle);
        const EstimateReport alg1 = batching_exact_covar(model, pa, pb, cfg);
        ok &= dec.covar_hat == alg1.covar_hat;  // bit identical
    }
    c.report(ok, "10 random configs, decoupled(oracle surfaces) == Algorithm 1 bitwise");
}

// ---- criterion 7: determinism across runs and thread counts ----------------------

void criterion_7() {
    Criterion c("criterion 7 determinism", 300);
    bool ok = true;
    std::string detail;

    const std::string est_cmd = std::string("estimate --config ") + COVAR_CONFIG_DIR +
                                "/q1_mini.estimate --seed 5 --override estimator.gamma=5000"
                                " --override estimator.k=50 --override estimator.h=50";
    const CmdResult e1 = run_cli(est_cmd + " --threads 1");
    const CmdResult e4 = run_cli(est_cmd + " --threads 4");
    const CmdResult e1b = run_cli(est_cmd + " --threads 1");
    ok &= e1.exit_code == 0 && e4.exit_code == 0;
    ok &= e1.output == e4.output && e1.output == e1b.output;
    detail += "estimate JSON identical across re-runs and thread counts";

    std::ofstream plan("acc_det.plan");
    plan << "kind = toy\ntoy.rho = 0.5\nreplications = 8\nseed = 3\n"
            "row.a.kind = batching\nrow.a.k = 80\nrow.a.h = 40\n"
            "row.b.kind = batching\nrow.b.k = 40\nrow.b.h = 80\n"
            "output.dir = acc_det_out\n";
    plan.close();
    CmdResult x1 = run_cli("experiment --plan acc_det.plan --threads 1 --format json");
    const std::string csv1 = slurp("acc_det_out/results.csv");
    const std::string json1 = slurp("acc_det_out/results.json");
    CmdResult x4 = run_cli("experiment --plan acc_det.plan --threads 4 --format json");
    ok &= x1.exit_code == 0 && x4.exit_code == 0;
    ok &= slurp("acc_det_out/results.csv") == csv1 && !csv1.empty();
    ok &= slurp("acc_det_out/results.json") == json1 && !json1.empty();
    detail += "; experiment CSV/JSON identical at 1 vs 4 threads";
    std::remove("acc_det.plan");

    c.report(ok, detail);
}

}  // namespace

int main() {
    std::printf("acceptance suite (desk scale)\n");
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    std::printf(
        "[NOTE] criterion 8 full-scale-tables: configs/paper_q100.plan reproduces the "
        "100-asset, 300-dimensional study (budgets 1e4..1e6, 40 replications); it needs hours "
        "of compute and is intentionally not asserted here.\n");
    return g_failures == 0 ? 0 : 1;
}
