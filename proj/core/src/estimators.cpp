#include "covar/estimators.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "covar/errors.hpp"
#include "covar/parallel.hpp"
#include "covar/rng.hpp"

namespace covar {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

long round_half_up(double x) { return static_cast<long>(std::floor(x + 0.5)); }

long ceil_index(double p, long n) {
    // smallest integer >= p*n, clamped to [1, n]
    const long idx = static_cast<long>(std::ceil(p * static_cast<double>(n) - 1e-12));
    return std::max<long>(1, std::min<long>(idx, n));
}

std::string fmt_double(double x, const char* spec = "%.17g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, x);
    return buf;
}

}  // namespace

std::string strategy_name(AllocationStrategy s) {
    switch (s) {
        case AllocationStrategy::kSnsOpt: return "sns_opt";
        case AllocationStrategy::kSmoothFixedL: return "smooth_fixed_l";
        case AllocationStrategy::kDecoupled: return "decoupled";
    }
    return "?";
}

std::pair<long, long> batching_shape(long n, double c) {
    if (n < 1) throw DomainError("batching shape needs n >= 1");
    long h = round_half_up(std::cbrt(static_cast<double>(n) / (c * c)));
    h = std::max<long>(1, std::min<long>(h, n));
    long k = n / h;
    return {k, h};
}

BudgetAllocation allocate_budget(double gamma, AllocationStrategy strategy,
                                 const BudgetConstants& constants) {
    if (!(gamma >= 64.0))
        throw InfeasibleBudget("budget must be at least 64 inner observations");
    BudgetAllocation a;
    a.gamma = gamma;
    a.strategy = strategy;
    a.constants = constants;

    switch (strategy) {
        case AllocationStrategy::kSnsOpt: {
            const double g14 = std::pow(gamma, 0.25);
            a.l = std::max<long>(1, round_half_up(constants.c1 * g14));
            a.h = std::max<long>(1, round_half_up(constants.c2 * g14));
            a.k = std::max<long>(1, round_half_up(std::sqrt(gamma) / (constants.c1 * constants.c2)));
            while (static_cast<double>(a.k) * a.h * a.l > gamma && a.l > 1) --a.l;
            if (static_cast<double>(a.k) * a.h * a.l > gamma)
                throw InfeasibleBudget("cannot satisfy k*h*l <= budget with counts >= 1");
            a.n = a.k * a.h;
            a.m = a.n;
            break;
        }
        case AllocationStrategy::kSmoothFixedL: {
            if (constants.l < 1) throw InfeasibleBudget("fixed inner count must be >= 1");
            a.l = constants.l;
            const long n_raw = static_cast<long>(gamma / static_cast<double>(a.l));
            if (n_raw < 1) throw InfeasibleBudget("budget smaller than one scenario");
            auto [k, h] = batching_shape(n_raw, constants.c);
            a.k = k;
            a.h = h;
            a.n = k * h;
            a.m = a.n;
            break;
        }
        case AllocationStrategy::kDecoupled: {
            if (constants.l < 1) throw InfeasibleBudget("fixed inner count must be >= 1");
            a.l = constants.l;
            a.m = static_cast<long>(gamma / static_cast<double>(a.l));
            if (a.m < 1) throw InfeasibleBudget("budget smaller than one scenario");
            long n = constants.n;
            if (n <= 0) {
                if (!constants.rate_rule)
                    throw InfeasibleBudget("decoupled allocation needs n or the rate rule");
                n = static_cast<long>(std::ceil(std::pow(static_cast<double>(a.m), 1.5)));
            }
            auto [k, h] = batching_shape(n, constants.c);
            a.k = k;
            a.h = h;
            a.n = k * h;
            break;
        }
    }
    return a;
}

void EstimatorConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0))
        throw DomainError("alpha and beta must lie in (0,1)");
    if (k < 1 || h < 1) throw DomainError("batch counts must be >= 1");
    if (n != k * h) throw DomainError("estimator config requires n == k*h");
    if (l < 0 || m < 0) throw DomainError("counts must be nonnegative");
}

EstimatorConfig EstimatorConfig::from_allocation(const BudgetAllocation& alloc, double alpha,
                                                 double beta, std::uint64_t seed) {
    EstimatorConfig cfg;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.k = alloc.k;
    cfg.h = alloc.h;
    cfg.l = alloc.l;
    cfg.m = alloc.m;
    cfg.n = alloc.n;
    cfg.seed = seed;
    cfg.validate();
    return cfg;
}

double empirical_quantile(const std::vector<double>& values, double p) {
    if (values.empty()) throw EmptyInput("quantile of an empty sample");
    if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile level must lie in (0,1)");
    std::vector<double> copy = values;
    const long idx = ceil_index(p, static_cast<long>(copy.size()));
    std::nth_element(copy.begin(), copy.begin() + (idx - 1), copy.end());
    return copy[static_cast<std::size_t>(idx - 1)];
}

BatchingResult batching_covar(const Eigen::VectorXd& mu, const Eigen::VectorXd& pi, long k,
                              long h, double alpha, double beta) {
    if (mu.size() != pi.size()) throw ShapeMismatch("mu/pi length mismatch");
    if (k < 1 || h < 1) throw DomainError("batching needs k >= 1 and h >= 1");
    if (mu.size() != k * h)
        throw ShapeMismatch("batching expects exactly k*h pairs, got " +
                            std::to_string(mu.size()));
    if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0))
        throw DomainError("levels must lie in (0,1)");

    const long rank = ceil_index(alpha, h);
    std::vector<long> idx(static_cast<std::size_t>(h));
    std::vector<double> concomitants(static_cast<std::size_t>(k));
    std::vector<double> batch_var(static_cast<std::size_t>(k));
    for (long b = 0; b < k; ++b) {
        const long base = b * h;
        std::iota(idx.begin(), idx.end(), base);
        // ties in mu broken by original index => stable concomitant selection
        std::nth_element(idx.begin(), idx.begin() + (rank - 1), idx.end(),
                         [&](long a, long c) {
                             if (mu[a] != mu[c]) return mu[a] < mu[c];
                             return a < c;
                         });
        const long chosen = idx[static_cast<std::size_t>(rank - 1)];
        concomitants[static_cast<std::size_t>(b)] = pi[chosen];
        batch_var[static_cast<std::size_t>(b)] = mu[chosen];
    }

    BatchingResult res;
    res.concomitants = concomitants;

    std::vector<double> sorted = concomitants;
    const long krank = ceil_index(beta, k);
    std::nth_element(sorted.begin(), sorted.begin() + (krank - 1), sorted.end());
    res.covar = sorted[static_cast<std::size_t>(krank - 1)];

    std::sort(batch_var.begin(), batch_var.end());
    const std::size_t mid = batch_var.size() / 2;
    res.var_hat = batch_var.size() % 2 == 1
                      ? batch_var[mid]
                      : 0.5 * (batch_var[mid - 1] + batch_var[mid]);
    return res;
}

BatchingResult batching_covar(const std::vector<std::pair<double, double>>& pairs, long k,
                              long h, double alpha, double beta) {
    Eigen::VectorXd mu(static_cast<long>(pairs.size()));
    Eigen::VectorXd pi(static_cast<long>(pairs.size()));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        mu[static_cast<long>(i)] = pairs[i].first;
        pi[static_cast<long>(i)] = pairs[i].second;
    }
    return batching_covar(mu, pi, k, h, alpha, beta);
}

void stage_one_sample(const MarketModel& model, const PortfolioSpec& pa, const PortfolioSpec& pb,
                      long m, long l, std::uint64_t seed, int threads, Eigen::MatrixXd* z_rows,
                      Eigen::VectorXd* xbar, Eigen::VectorXd* ybar) {
    z_rows->resize(m, 3 * model.q);
    xbar->resize(m);
    ybar->resize(m);
    parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t i) {
        const RiskFactorVector z = simulate_outer_one(model, seed, static_cast<long>(i));
        const std::vector<PathBundle> bundles =
            simulate_inner(model, z, l, seed, static_cast<long>(i));
        const std::vector<double> la = discounted_losses(pa, model, z, bundles);
        const std::vector<double> lb = discounted_losses(pb, model, z, bundles);
        double sa = 0.0, sb = 0.0;
        for (double v : la) sa += v;
        for (double v : lb) sb += v;
        z_rows->row(static_cast<long>(i)) = z.flatten().transpose();
        (*xbar)[static_cast<long>(i)] = sa / static_cast<double>(l);
        (*ybar)[static_cast<long>(i)] = sb / static_cast<double>(l);
    });
}

namespace {

// Estimation-stage scenarios, flattened one row per scenario.
Eigen::MatrixXd stage_two_scenarios(const MarketModel& model, long n, std::uint64_t phase_seed,
                                    int threads) {
    Eigen::MatrixXd rows(n, 3 * model.q);
    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
        rows.row(static_cast<long>(i)) =
            simulate_outer_one(model, phase_seed, static_cast<long>(i)).flatten().transpose();
    });
    return rows;
}

EstimateReport finish_report(EstimateReport report, BatchingResult batching) {
    report.covar_hat = batching.covar;
    report.var_hat = batching.var_hat;
    if (report.config.keep_concomitants)
        report.concomitants = std::move(batching.concomitants);
    return report;
}

}  // namespace

EstimateReport batching_exact_covar(const MarketModel& model, const PortfolioSpec& pa,
                                    const PortfolioSpec& pb, const EstimatorConfig& cfg) {
    cfg.validate();
    EstimateReport report;
    report.config = cfg;
    report.family = "exact";
    report.coupling = "exact";

    const std::uint64_t phase = fold(cfg.seed, stream_tag::kStageTwo);
    const auto t0 = Clock::now();
    Eigen::VectorXd mu(cfg.n), pi(cfg.n);
    parallel_for(static_cast<std::size_t>(cfg.n), cfg.threads, [&](std::size_t i) {
        const RiskFactorVector z = simulate_outer_one(model, phase, static_cast<long>(i));
        mu[static_cast<long>(i)] = closed_form_loss(pa, model, z);
        pi[static_cast<long>(i)] = closed_form_loss(pb, model, z);
    });
    report.timings.sim2 = seconds_since(t0);

    const auto t1 = Clock::now();
    BatchingResult res = batching_covar(mu, pi, cfg.k, cfg.h, cfg.alpha, cfg.beta);
    report.timings.estimate = seconds_since(t1);
    return finish_report(std::move(report), std::move(res));
}

EstimateReport naive_sns_covar(const MarketModel& model, const PortfolioSpec& pa,
                               const PortfolioSpec& pb, const EstimatorConfig& cfg) {
    cfg.validate();
    if (cfg.l < 1) throw DomainError("nested estimation needs l >= 1");
    EstimateReport report;
    report.config = cfg;
    report.family = "sns";
    report.coupling = "sns";

    const std::uint64_t phase = fold(cfg.seed, stream_tag::kStageTwo);
    const auto t0 = Clock::now();
    Eigen::MatrixXd z_rows;
    Eigen::VectorXd xbar, ybar;
    stage_one_sample(model, pa, pb, cfg.n, cfg.l, phase, cfg.threads, &z_rows, &xbar, &ybar);
    report.timings.sim1 = seconds_since(t0);

    const auto t1 = Clock::now();
    BatchingResult res = batching_covar(xbar, ybar, cfg.k, cfg.h, cfg.alpha, cfg.beta);
    report.timings.estimate = seconds_since(t1);
    return finish_report(std::move(report), std::move(res));
}

EstimateReport naive_smoothed_covar(const MarketModel& model, const PortfolioSpec& pa,
                                    const PortfolioSpec& pb, const EstimatorConfig& cfg,
                                    SmootherFamily family, const SmootherOptions& opts) {
    cfg.validate();
    if (cfg.l < 1) throw DomainError("smoothed estimation needs l >= 1");
    EstimateReport report;
    report.config = cfg;
    report.family = family_name(family);
    report.coupling = "coupled";

    const std::uint64_t phase = fold(cfg.seed, stream_tag::kStageTwo);
    const auto t0 = Clock::now();
    Eigen::MatrixXd z_rows;
    Eigen::VectorXd xbar, ybar;
    stage_one_sample(model, pa, pb, cfg.n, cfg.l, phase, cfg.threads, &z_rows, &xbar, &ybar);
    report.timings.sim1 = seconds_since(t0);

    const TrainingSet da = TrainingSet::build(z_rows, xbar);
    const TrainingSet db = TrainingSet::build(std::move(z_rows), ybar);

    const auto t_tune = Clock::now();
    HyperparameterGrid grid_a = opts.grid;
    grid_a.seed = fold(cfg.seed, 0xA1);
    HyperparameterGrid grid_b = opts.grid;
    grid_b.seed = fold(cfg.seed, 0xB2);
    TunedParams pa_best = first_candidate(family, grid_a);
    TunedParams pb_best = first_candidate(family, grid_b);
    if (opts.tune_enabled) {
        pa_best = tune(da, family, grid_a).best;
        pb_best = tune(db, family, grid_b).best;
    }
    report.timings.tune = seconds_since(t_tune);

    const auto t_fit = Clock::now();
    const SurfaceModel mu_hat = fit_with_params(da, family, grid_a, pa_best);
    const SurfaceModel pi_hat = fit_with_params(db, family, grid_b, pb_best);
    report.timings.fit = seconds_since(t_fit);

    const auto t2 = Clock::now();
    const Eigen::VectorXd mu_vals = mu_hat.evaluate(mu_hat.standardization().invert(da.inputs),
                                                    cfg.threads);
    const Eigen::VectorXd pi_vals = pi_hat.evaluate(pi_hat.standardization().invert(db.inputs),
                                                    cfg.threads);
    BatchingResult res = batching_covar(mu_vals, pi_vals, cfg.k, cfg.h, cfg.alpha, cfg.beta);
    report.timings.estimate = seconds_since(t2);
    return finish_report(std::move(report), std::move(res));
}

EstimateReport decoupled_covar(const MarketModel& model, const PortfolioSpec& pa,
                               const PortfolioSpec& pb, const EstimatorConfig& cfg,
                               SmootherFamily family, const SmootherOptions& opts,
                               const LossSurface* fitted_mu, const LossSurface* fitted_pi,
                               TuneResult* tuning_mu, TuneResult* tuning_pi) {
    cfg.validate();
    if ((fitted_mu == nullptr) != (fitted_pi == nullptr))
        throw DomainError("supply both fitted surfaces or neither");
    EstimateReport report;
    report.config = cfg;
    report.family = fitted_mu ? "fitted" : family_name(family);
    report.coupling = "decoupled";

    SurfaceModel mu_model, pi_model;
    SurfaceModelRef mu_ref(mu_model), pi_ref(pi_model);
    const LossSurface* mu_surface = fitted_mu;
    const LossSurface* pi_surface = fitted_pi;

    if (!fitted_mu) {
        if (cfg.m < 1 || cfg.l < 1) throw DomainError("stage 1 needs m >= 1 and l >= 1");
        const std::uint64_t stage1 = fold(cfg.seed, stream_tag::kStageOne);
        const auto t0 = Clock::now();
        Eigen::MatrixXd z_rows;
        Eigen::VectorXd xbar, ybar;
        stage_one_sample(model, pa, pb, cfg.m, cfg.l, stage1, cfg.threads, &z_rows, &xbar, &ybar);
        report.timings.sim1 = seconds_since(t0);

        const TrainingSet da = TrainingSet::build(z_rows, xbar);
        const TrainingSet db = TrainingSet::build(std::move(z_rows), ybar);

        const auto t_tune = Clock::now();
        HyperparameterGrid grid_a = opts.grid;
        grid_a.seed = fold(cfg.seed, 0xA1);
        HyperparameterGrid grid_b = opts.grid;
        grid_b.seed = fold(cfg.seed, 0xB2);
        TuneResult ta, tb;
        ta.best = first_candidate(family, grid_a);
        tb.best = first_candidate(family, grid_b);
        if (opts.tune_enabled) {
            ta = tune(da, family, grid_a);
            tb = tune(db, family, grid_b);
        }
        report.timings.tune = seconds_since(t_tune);
        if (tuning_mu) *tuning_mu = ta;
        if (tuning_pi) *tuning_pi = tb;

        const auto t_fit = Clock::now();
        mu_model = fit_with_params(da, family, grid_a, ta.best);
        pi_model = fit_with_params(db, family, grid_b, tb.best);
        report.timings.fit = seconds_since(t_fit);
        mu_surface = &mu_ref;
        pi_surface = &pi_ref;
    }

    const std::uint64_t stage2 = fold(cfg.seed, stream_tag::kStageTwo);
    const auto t_sim2 = Clock::now();
    const Eigen::MatrixXd z2 = stage_two_scenarios(model, cfg.n, stage2, cfg.threads);
    report.timings.sim2 = seconds_since(t_sim2);

    const auto t_est = Clock::now();
    const Eigen::VectorXd mu_vals = mu_surface->values(z2, cfg.threads);
    const Eigen::VectorXd pi_vals = pi_surface->values(z2, cfg.threads);
    BatchingResult res = batching_covar(mu_vals, pi_vals, cfg.k, cfg.h, cfg.alpha, cfg.beta);
    report.timings.estimate = seconds_since(t_est);
    return finish_report(std::move(report), std::move(res));
}

std::string EstimateReport::to_json(bool with_timings) const {
    const PhaseTimings t = with_timings ? timings : PhaseTimings{};
    std::string s = "{";
    s += "\"covar_hat\":" + fmt_double(covar_hat);
    s += ",\"var_hat\":" + fmt_double(var_hat);
    s += ",\"family\":\"" + family + "\"";
    s += ",\"coupling\":\"" + coupling + "\"";
    s += ",\"alpha\":" + fmt_double(config.alpha, "%.6g");
    s += ",\"beta\":" + fmt_double(config.beta, "%.6g");
    s += ",\"k\":" + std::to_string(config.k);
    s += ",\"h\":" + std::to_string(config.h);
    s += ",\"m\":" + std::to_string(config.m);
    s += ",\"l\":" + std::to_string(config.l);
    s += ",\"n\":" + std::to_string(config.n);
    s += ",\"seed\":" + std::to_string(config.seed);
    s += ",\"timings\":{";
    s += "\"sim1\":" + fmt_double(t.sim1, "%.6g");
    s += ",\"tune\":" + fmt_double(t.tune, "%.6g");
    s += ",\"fit\":" + fmt_double(t.fit, "%.6g");
    s += ",\"sim2\":" + fmt_double(t.sim2, "%.6g");
    s += ",\"estimate\":" + fmt_double(t.estimate, "%.6g");
    s += "}";
    if (!concomitants.empty()) {
        s += ",\"concomitants\":[";
        for (std::size_t i = 0; i < concomitants.size(); ++i) {
            if (i) s += ",";
            s += fmt_double(concomitants[i]);
        }
        s += "]";
    }
    s += "}";
    return s;
}

}  // namespace covar
