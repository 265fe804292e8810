// Command-line front end: closed-form pricing, scenario simulation, surface
// fitting/tuning with persistence, single estimates, and the experiment
// runner. Exit codes: 0 success, 2 configuration/domain error, 3 runtime
// estimation failure, 4 unknown flag.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "covar/errors.hpp"
#include "covar/harness.hpp"
#include "covar/parallel.hpp"
#include "covar/rng.hpp"

namespace {

using namespace covar;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    long long seed = -1;  // -1: use the config's seed
    int threads = 0;      // 0: default pool size
    std::string out_path;
    bool timings = false;
    std::string format = "csv";
};

KeyValueConfig load_config(const CommonOpts& opts) {
    KeyValueConfig cfg = KeyValueConfig::from_file(opts.config_path);
    for (const auto& pair : opts.overrides) cfg.set_pair(pair);
    return cfg;
}

int resolve_threads(const CommonOpts& opts) {
    return opts.threads > 0 ? opts.threads : default_thread_count();
}

std::uint64_t resolve_seed(const CommonOpts& opts, KeyValueConfig& cfg) {
    if (opts.seed >= 0) {
        cfg.get_int("seed", 0);  // consume the config key if present
        return static_cast<std::uint64_t>(opts.seed);
    }
    return static_cast<std::uint64_t>(cfg.get_int("seed", 0));
}

void write_or_print(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open '" + out_path + "' for writing");
    out << text;
}

// ---- price ------------------------------------------------------------------

struct PriceArgs {
    double s = 100.0, k = 105.0, r = 0.05, sigma = 0.2, ttm = 1.0;
    double b = 120.0;
    double geo_partial = 1.0;
    int m = 50, m_tau = 0;
    double kappa = 2.0, theta = 0.04, sigma_v = 0.3, rho = -0.5, v0 = 0.04, lambda_h = 0.0;
};

int run_price(const std::string& instrument, const PriceArgs& a) {
    double price = 0.0;
    if (instrument == "bs") {
        price = bs_call_price(a.s, a.k, a.r, a.sigma, a.ttm);
    } else if (instrument == "barrier") {
        price = barrier_uoc_price(a.s, a.k, a.b, a.r, a.sigma, a.ttm);
        if (a.s >= a.b) std::cout << "# knocked out: spot at or above the barrier\n";
    } else if (instrument == "asian") {
        const double dt = a.ttm / a.m;
        price = geo_asian_call_conditional(a.s, a.geo_partial, a.k, a.r, a.sigma, dt, a.m,
                                           a.m_tau);
    } else if (instrument == "heston") {
        HestonParams p;
        p.kappa = a.kappa;
        p.theta = a.theta;
        p.sigma_v = a.sigma_v;
        p.rho = a.rho;
        p.v0 = a.v0;
        p.lambda_h = a.lambda_h;
        price = heston_call_price(a.s, p, a.k, a.r, a.ttm);
    } else {
        throw ConfigError("unknown instrument '" + instrument + "'");
    }
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.10g\n", price);
    std::cout << buf;
    return 0;
}

// ---- simulate ----------------------------------------------------------------

int run_simulate(CommonOpts& opts, long count) {
    KeyValueConfig cfg = load_config(opts);
    const std::uint64_t seed = resolve_seed(opts, cfg);
    MarketModel model = load_market_model(cfg);
    // full estimate configs are accepted; only the model section matters here
    cfg.consume_prefix("portfolio");
    cfg.consume_prefix("estimator");
    cfg.get_double("alpha", 0.95);
    cfg.get_double("beta", 0.95);
    cfg.ensure_all_consumed();

    const std::vector<RiskFactorVector> scenarios =
        simulate_outer(model, count, seed, resolve_threads(opts));

    std::string text;
    for (int i = 0; i < model.q; ++i) text += "s_tau_" + std::to_string(i + 1) + ",";
    for (int i = 0; i < model.q; ++i) text += "run_max_" + std::to_string(i + 1) + ",";
    for (int i = 0; i < model.q; ++i)
        text += "geo_partial_" + std::to_string(i + 1) + (i + 1 == model.q ? "" : ",");
    text += "\n";
    char buf[40];
    for (const auto& z : scenarios) {
        const Eigen::VectorXd flat = z.flatten();
        for (long j = 0; j < flat.size(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", flat[j]);
            text += buf;
            text += j + 1 == flat.size() ? "\n" : ",";
        }
    }
    write_or_print(text, opts.out_path);
    return 0;
}

// ---- fit / tune ---------------------------------------------------------------

ExperimentPlan plan_from_estimate_config(KeyValueConfig& cfg, EstimatorRow* row,
                                         CommonOpts& opts) {
    ExperimentPlan plan;
    plan.alpha = cfg.get_double("alpha", 0.95);
    plan.beta = cfg.get_double("beta", 0.95);
    plan.seed = resolve_seed(opts, cfg);
    plan.threads = resolve_threads(opts);
    plan.model = load_market_model(cfg);
    plan.pa = load_portfolio(cfg, "a", plan.model);
    plan.pb = load_portfolio(cfg, "b", plan.model);
    *row = load_estimator_row(cfg, "estimator", plan);
    return plan;
}

int run_fit(CommonOpts& opts) {
    KeyValueConfig cfg = load_config(opts);
    EstimatorRow row;
    ExperimentPlan plan = plan_from_estimate_config(cfg, &row, opts);
    cfg.ensure_all_consumed();
    if (opts.out_path.empty()) throw ConfigError("fit requires --out <artifact path>");

    BudgetConstants c = row.constants;
    if (row.k > 0 && row.h > 0 && c.n == 0) c.n = row.k * row.h;
    if (c.n == 0 && !c.rate_rule) c.n = 1;  // stage 2 is not run here
    const BudgetAllocation alloc =
        allocate_budget(row.gamma, AllocationStrategy::kDecoupled, c);

    Eigen::MatrixXd z_rows;
    Eigen::VectorXd xbar, ybar;
    const std::uint64_t stage1 = fold(plan.seed, stream_tag::kStageOne);
    stage_one_sample(plan.model, plan.pa, plan.pb, alloc.m, alloc.l, stage1, plan.threads,
                     &z_rows, &xbar, &ybar);
    const TrainingSet da = TrainingSet::build(z_rows, xbar);
    const TrainingSet db = TrainingSet::build(std::move(z_rows), ybar);

    HyperparameterGrid grid_a = row.smoother.grid;
    grid_a.seed = fold(plan.seed, 0xA1);
    HyperparameterGrid grid_b = row.smoother.grid;
    grid_b.seed = fold(plan.seed, 0xB2);
    TuneResult ta, tb;
    ta.best = first_candidate(row.family, grid_a);
    tb.best = first_candidate(row.family, grid_b);
    if (row.smoother.tune_enabled) {
        ta = tune(da, row.family, grid_a);
        tb = tune(db, row.family, grid_b);
    }
    const SurfaceModel mu = fit_with_params(da, row.family, grid_a, ta.best);
    const SurfaceModel pi = fit_with_params(db, row.family, grid_b, tb.best);
    save_surface_pair(mu, pi, opts.out_path);
    std::cout << "fitted " << family_name(row.family) << " surfaces on m=" << alloc.m
              << " scenarios (l=" << alloc.l << ")\n"
              << "mu: " << ta.best.describe(row.family) << "\n"
              << "pi: " << tb.best.describe(row.family) << "\n"
              << "saved to " << opts.out_path << "\n";
    return 0;
}

int run_tune(CommonOpts& opts) {
    KeyValueConfig cfg = load_config(opts);
    EstimatorRow row;
    ExperimentPlan plan = plan_from_estimate_config(cfg, &row, opts);
    cfg.ensure_all_consumed();

    BudgetConstants c = row.constants;
    if (c.n == 0 && !c.rate_rule) c.n = 1;
    const BudgetAllocation alloc =
        allocate_budget(row.gamma, AllocationStrategy::kDecoupled, c);

    Eigen::MatrixXd z_rows;
    Eigen::VectorXd xbar, ybar;
    const std::uint64_t stage1 = fold(plan.seed, stream_tag::kStageOne);
    stage_one_sample(plan.model, plan.pa, plan.pb, alloc.m, alloc.l, stage1, plan.threads,
                     &z_rows, &xbar, &ybar);
    const TrainingSet da = TrainingSet::build(std::move(z_rows), xbar);

    HyperparameterGrid grid = row.smoother.grid;
    grid.seed = fold(plan.seed, 0xA1);
    const TuneResult result = tune(da, row.family, grid);
    std::printf("%-40s %s\n", "candidate", "cv_mse");
    for (const auto& entry : result.table)
        std::printf("%-40s %.6g\n", entry.description.c_str(), entry.cv_mse);
    std::printf("best: %s\n", result.best.describe(row.family).c_str());
    if (result.budget_exhausted) std::printf("note: tuning budget exhausted; best-so-far\n");
    return 0;
}

// ---- estimate -----------------------------------------------------------------

int run_estimate(CommonOpts& opts, const std::string& fitted_path) {
    KeyValueConfig cfg = load_config(opts);
    EstimatorRow row;
    ExperimentPlan plan = plan_from_estimate_config(cfg, &row, opts);
    cfg.ensure_all_consumed();

    EstimateReport report;
    if (!fitted_path.empty()) {
        const auto [mu, pi] = load_surface_pair(fitted_path);
        EstimatorConfig ecfg;
        ecfg.alpha = plan.alpha;
        ecfg.beta = plan.beta;
        if (row.k > 0 && row.h > 0) {
            ecfg.k = row.k;
            ecfg.h = row.h;
        } else {
            auto [k, h] = batching_shape(row.constants.n, row.constants.c);
            ecfg.k = k;
            ecfg.h = h;
        }
        ecfg.n = ecfg.k * ecfg.h;
        ecfg.seed = plan.seed;
        ecfg.threads = plan.threads;
        const SurfaceModelRef mu_ref(mu), pi_ref(pi);
        report = decoupled_covar(plan.model, plan.pa, plan.pb, ecfg, row.family, row.smoother,
                                 &mu_ref, &pi_ref);
    } else {
        report = run_single_estimate(row, plan, plan.seed);
    }
    write_or_print(report.to_json(opts.timings) + "\n", opts.out_path);
    return 0;
}

// ---- reference ----------------------------------------------------------------

int run_reference(CommonOpts& opts) {
    KeyValueConfig cfg = load_config(opts);
    ExperimentPlan plan;
    plan.alpha = cfg.get_double("alpha", 0.95);
    plan.beta = cfg.get_double("beta", 0.95);
    plan.seed = resolve_seed(opts, cfg);
    plan.threads = resolve_threads(opts);
    plan.model = load_market_model(cfg);
    plan.pa = load_portfolio(cfg, "a", plan.model);
    plan.pb = load_portfolio(cfg, "b", plan.model);
    ReferenceSpec spec;
    spec.n0 = cfg.get_int("reference.n0", 250000);
    spec.precision = cfg.get_double("reference.precision", 0.002);
    spec.replications = static_cast<int>(cfg.get_int("reference.replications", 10));
    spec.max_doublings = static_cast<int>(cfg.get_int("reference.max_doublings", 8));
    cfg.consume_prefix("estimator");
    cfg.consume_prefix("row");
    cfg.ensure_all_consumed();

    const ReferenceResult ref = compute_reference(plan.model, plan.pa, plan.pb, plan.alpha,
                                                  plan.beta, spec, plan.seed, plan.threads);
    std::printf("reference_theta = %.10g\n", ref.theta);
    std::printf("spread_half_width = %.4g (%.4g relative)\n", ref.spread_half_width,
                ref.spread_half_width / std::fabs(ref.theta));
    std::printf("n_used = %ld\n", ref.n_used);
    return 0;
}

// ---- experiment ----------------------------------------------------------------

void print_table(const std::vector<MetricRow>& rows, bool timings) {
    std::printf("%-12s %8s %6s %6s %6s %-8s %-10s %9s %9s %9s", "row", "gamma", "m", "l", "k",
                "family", "coupling", "r_bias", "r_sd", "r_rmse");
    if (timings)
        std::printf(" %8s %8s %8s %8s %8s", "t_sim1", "t_tune", "t_fit", "t_sim2", "t_est");
    std::printf("\n");
    for (const MetricRow& r : rows) {
        if (r.failed) {
            std::printf("%-12s FAILED: %s\n", r.row_id.c_str(), r.error.c_str());
            continue;
        }
        std::printf("%-12s %8.3g %6ld %6ld %6ld %-8s %-10s %9.4f %9.4f %9.4f", r.row_id.c_str(),
                    r.gamma, r.m, r.l, r.k, r.family.c_str(), r.coupling.c_str(), r.r_bias,
                    r.r_sd, r.r_rmse);
        if (timings)
            std::printf(" %8.2f %8.2f %8.2f %8.2f %8.2f", r.timings.sim1, r.timings.tune,
                        r.timings.fit, r.timings.sim2, r.timings.estimate);
        std::printf("\n");
    }
}

void print_ladder_slopes(const std::vector<MetricRow>& rows) {
    std::map<std::string, std::vector<MetricRow>> ladders;
    for (const MetricRow& r : rows)
        if (!r.failed) ladders[r.family + "/" + r.coupling].push_back(r);
    for (const auto& [key, group] : ladders) {
        std::map<double, bool> gammas;
        for (const auto& r : group) gammas[r.gamma] = true;
        if (gammas.size() < 3) continue;
        try {
            const RateEstimate rate = rate_analysis(group);
            std::printf("rate slope (%s): %.4f +- %.4f\n", key.c_str(), rate.slope,
                        rate.std_error);
        } catch (const Error&) {
        }
    }
}

int run_experiment_cmd(CommonOpts& opts, const std::string& plan_path) {
    CommonOpts plan_opts = opts;
    plan_opts.config_path = plan_path;
    KeyValueConfig cfg = load_config(plan_opts);
    ExperimentPlan plan = load_plan(cfg);
    cfg.ensure_all_consumed();
    if (opts.seed >= 0) plan.seed = static_cast<std::uint64_t>(opts.seed);
    if (opts.threads > 0) plan.threads = opts.threads;
    if (!opts.out_path.empty()) plan.output_dir = opts.out_path;

    std::filesystem::create_directories(plan.output_dir);
    const std::string csv_path = plan.output_dir + "/results.csv";
    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot open '" + csv_path + "' for writing");
    csv << csv_header() << "\n";
    csv.flush();

    // Rows stream to the CSV as they complete, so an interrupted run leaves a
    // valid prefix of the results.
    const ExperimentResult result = run_experiment(plan, [&](const MetricRow& row) {
        if (!row.failed) {
            csv << csv_row(row, opts.timings) << "\n";
            csv.flush();
        }
    });

    if (opts.format == "json") {
        std::ofstream json(plan.output_dir + "/results.json");
        json << json_rows(result.rows, opts.timings);
    }

    std::printf("reference_theta = %.10g", result.reference_theta);
    if (result.reference_spread > 0.0)
        std::printf(" (spread half-width %.4g)", result.reference_spread);
    std::printf("\n\n");
    print_table(result.rows, opts.timings);
    std::printf("\n");
    print_ladder_slopes(result.rows);
    std::printf("\nresults: %s\n", csv_path.c_str());

    for (const MetricRow& r : result.rows)
        if (r.failed) return 3;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nested Monte Carlo CoVaR estimation"};
    app.require_subcommand(1);

    CommonOpts opts;
    PriceArgs price_args;
    std::string instrument, fitted_path, plan_path;
    long sim_count = 10;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", opts.config_path, "configuration file")->required();
        cmd->add_option("--override", opts.overrides, "key=value config override (repeatable)");
        cmd->add_option("--seed", opts.seed, "root seed (overrides the config)");
        cmd->add_option("--threads", opts.threads,
                        "worker pool cap (default: COVAR_THREADS or all cores)");
        cmd->add_option("--out", opts.out_path, "output path");
        cmd->add_flag("--timings", opts.timings,
                      "serialize measured phase timings (output no longer byte-stable)");
    };

    CLI::App* price = app.add_subcommand("price", "closed-form instrument prices");
    price->add_option("instrument", instrument, "bs | barrier | asian | heston")->required();
    price->add_option("--s", price_args.s, "spot");
    price->add_option("--k", price_args.k, "strike");
    price->add_option("--r", price_args.r, "risk-free rate");
    price->add_option("--sigma", price_args.sigma, "volatility");
    price->add_option("--ttm", price_args.ttm, "time to maturity");
    price->add_option("--b", price_args.b, "barrier level");
    price->add_option("--geo-partial", price_args.geo_partial, "known partial geometric mean");
    price->add_option("--m", price_args.m, "total monitoring count");
    price->add_option("--m-tau", price_args.m_tau, "monitoring count already observed");
    price->add_option("--kappa", price_args.kappa, "Heston mean reversion");
    price->add_option("--theta", price_args.theta, "Heston long-run variance");
    price->add_option("--sigma-v", price_args.sigma_v, "Heston vol of variance");
    price->add_option("--rho", price_args.rho, "Heston correlation");
    price->add_option("--v0", price_args.v0, "Heston spot variance");
    price->add_option("--lambda", price_args.lambda_h, "Heston volatility risk premium");

    CLI::App* simulate = app.add_subcommand("simulate", "outer-level scenario export");
    add_common(simulate);
    simulate->add_option("--count", sim_count, "scenario count");

    CLI::App* fit = app.add_subcommand("fit", "fit and persist both loss surfaces");
    add_common(fit);

    CLI::App* tune_cmd = app.add_subcommand("tune", "cross-validated grid search report");
    add_common(tune_cmd);

    CLI::App* estimate = app.add_subcommand("estimate", "one CoVaR estimate (JSON report)");
    add_common(estimate);
    estimate->add_option("--fitted", fitted_path, "surface-pair artifact (online mode)");

    CLI::App* reference = app.add_subcommand("reference", "closed-form reference CoVaR");
    add_common(reference);

    CLI::App* experiment = app.add_subcommand("experiment", "replicated estimation study");
    experiment->add_option("--plan", plan_path, "experiment plan file")->required();
    experiment->add_option("--override", opts.overrides, "key=value plan override (repeatable)");
    experiment->add_option("--seed", opts.seed, "root seed (overrides the plan)");
    experiment->add_option("--threads", opts.threads, "worker pool cap");
    experiment->add_option("--out", opts.out_path, "output directory (overrides the plan)");
    experiment->add_option("--format", opts.format, "csv | json (csv always written)");
    experiment->add_flag("--timings", opts.timings, "serialize measured phase timings");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ExtrasError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (price->parsed()) return run_price(instrument, price_args);
        if (simulate->parsed()) return run_simulate(opts, sim_count);
        if (fit->parsed()) return run_fit(opts);
        if (tune_cmd->parsed()) return run_tune(opts);
        if (estimate->parsed()) return run_estimate(opts, fitted_path);
        if (reference->parsed()) return run_reference(opts);
        if (experiment->parsed()) return run_experiment_cmd(opts, plan_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "domain error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
