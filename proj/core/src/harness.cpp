#include "covar/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "covar/errors.hpp"
#include "covar/rng.hpp"
#include "covar/stats.hpp"

namespace covar {

namespace {

std::string fmt6(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", x);
    return buf;
}

}  // namespace

double toy_gaussian_covar(double rho, double alpha, double beta) {
    if (!(std::fabs(rho) < 1.0)) throw DomainError("|rho| must be < 1");
    return rho * inv_norm_cdf(alpha) + std::sqrt(1.0 - rho * rho) * inv_norm_cdf(beta);
}

void toy_gaussian_pairs(double rho, long n, std::uint64_t seed, Eigen::VectorXd* mu,
                        Eigen::VectorXd* pi) {
    mu->resize(n);
    pi->resize(n);
    const double rbar = std::sqrt(1.0 - rho * rho);
    const std::uint64_t base = fold(seed, stream_tag::kToyPair);
    for (long i = 0; i < n; ++i) {
        RandomStream rs(fold(base, static_cast<std::uint64_t>(i)));
        const double e1 = rs.normal();
        const double e2 = rs.normal();
        (*mu)[i] = e1;
        (*pi)[i] = rho * e1 + rbar * e2;
    }
}

ReferenceResult compute_reference(const MarketModel& model, const PortfolioSpec& pa,
                                  const PortfolioSpec& pb, double alpha, double beta,
                                  const ReferenceSpec& spec, std::uint64_t seed, int threads) {
    if (spec.mode == ReferenceSpec::Mode::kValue)
        return {spec.value, 0.0, 0};
    long n = spec.n0;
    const std::uint64_t root = fold(seed, stream_tag::kReference);
    for (int doubling = 0; doubling <= spec.max_doublings; ++doubling, n *= 2) {
        // Balanced k = h = sqrt(n): the reference wants point accuracy, so
        // both the O(1/h) and O(1/k) bias terms shrink at the same rate (the
        // sqrt(k)/h -> c shape optimizes the rate-vs-budget tradeoff instead).
        const long h_bal = std::max<long>(1, static_cast<long>(std::llround(std::sqrt(
                                                  static_cast<double>(n)))));
        const long k = std::max<long>(1, n / h_bal);
        const long h = h_bal;
        EstimatorConfig cfg;
        cfg.alpha = alpha;
        cfg.beta = beta;
        cfg.k = k;
        cfg.h = h;
        cfg.n = k * h;
        cfg.threads = threads;
        double lo = 0.0, hi = 0.0, sum = 0.0;
        for (int rep = 0; rep < spec.replications; ++rep) {
            cfg.seed = fold(fold(root, static_cast<std::uint64_t>(doubling)),
                            static_cast<std::uint64_t>(rep));
            const double est = batching_exact_covar(model, pa, pb, cfg).covar_hat;
            if (rep == 0) {
                lo = hi = est;
            } else {
                lo = std::min(lo, est);
                hi = std::max(hi, est);
            }
            sum += est;
        }
        const double mean = sum / spec.replications;
        const double half = 0.5 * (hi - lo);
        if (half < spec.precision * std::fabs(mean)) return {mean, half, cfg.n};
    }
    throw PrecisionUnreachable("reference spread did not reach " +
                               std::to_string(spec.precision) + " within " +
                               std::to_string(spec.max_doublings) + " doublings");
}

std::uint64_t EstimatorRow::row_key() const {
    std::string desc = kind + "|" + family_name(family) + "|g=" + fmt6(gamma) +
                       "|l=" + std::to_string(constants.l) + "|n=" + std::to_string(constants.n) +
                       "|k=" + std::to_string(k) + "|h=" + std::to_string(h) +
                       "|c=" + fmt6(constants.c) + "|c1=" + fmt6(constants.c1) +
                       "|c2=" + fmt6(constants.c2) +
                       "|rr=" + (constants.rate_rule ? "1" : "0");
    return hash_bytes(desc.data(), desc.size());
}

namespace {

BasisSpec portfolio_basis(const MarketModel& model, const PortfolioSpec& pa,
                          const PortfolioSpec& pb, int degree, bool strike_hinges) {
    BasisSpec basis;
    basis.degree = degree;
    if (strike_hinges) {
        // Payoff-aware hinge terms on the s_tau block, knots at the strikes of
        // both portfolios (deduplicated per asset).
        for (int i = 0; i < model.q; ++i) {
            std::vector<double> knots{pa.k_asian[i], pa.k_barrier[i], pb.k_asian[i],
                                      pb.k_barrier[i]};
            std::sort(knots.begin(), knots.end());
            knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
            for (double kn : knots) basis.hinges.emplace_back(i, kn);
        }
    }
    return basis;
}

EstimatorConfig row_config(const EstimatorRow& row, const ExperimentPlan& plan,
                           std::uint64_t rep_seed) {
    BudgetAllocation alloc;
    if (row.kind == "sns") {
        alloc = allocate_budget(row.gamma, AllocationStrategy::kSnsOpt, row.constants);
    } else if (row.kind == "coupled") {
        alloc = allocate_budget(row.gamma, AllocationStrategy::kSmoothFixedL, row.constants);
    } else if (row.kind == "decoupled") {
        BudgetConstants c = row.constants;
        if (row.k > 0 && row.h > 0 && c.n == 0) c.n = row.k * row.h;
        alloc = allocate_budget(row.gamma, AllocationStrategy::kDecoupled, c);
    } else {
        throw ConfigError("unknown estimator kind '" + row.kind + "'");
    }
    if (row.k > 0 && row.h > 0) {
        alloc.k = row.k;
        alloc.h = row.h;
        alloc.n = row.k * row.h;
    }
    EstimatorConfig cfg =
        EstimatorConfig::from_allocation(alloc, plan.alpha, plan.beta, rep_seed);
    cfg.threads = plan.threads;
    return cfg;
}

}  // namespace

EstimateReport run_single_estimate(const EstimatorRow& row, const ExperimentPlan& plan,
                                   std::uint64_t rep_seed) {
    if (row.kind == "batching") {
        if (!plan.is_toy) throw ConfigError("row kind 'batching' requires a toy plan");
        if (row.k < 1 || row.h < 1) throw ConfigError("toy batching rows need k and h");
        Eigen::VectorXd mu, pi;
        toy_gaussian_pairs(plan.toy_rho, row.k * row.h, rep_seed, &mu, &pi);
        BatchingResult res = batching_covar(mu, pi, row.k, row.h, plan.alpha, plan.beta);
        EstimateReport report;
        report.covar_hat = res.covar;
        report.var_hat = res.var_hat;
        report.family = "exact";
        report.coupling = "batching";
        report.config.k = row.k;
        report.config.h = row.h;
        report.config.n = row.k * row.h;
        report.config.seed = rep_seed;
        return report;
    }
    if (row.kind == "exact") {
        EstimatorConfig cfg;
        cfg.alpha = plan.alpha;
        cfg.beta = plan.beta;
        if (row.k < 1 || row.h < 1) throw ConfigError("exact rows need k and h");
        cfg.k = row.k;
        cfg.h = row.h;
        cfg.n = row.k * row.h;
        cfg.seed = rep_seed;
        cfg.threads = plan.threads;
        return batching_exact_covar(plan.model, plan.pa, plan.pb, cfg);
    }
    const EstimatorConfig cfg = row_config(row, plan, rep_seed);
    if (row.kind == "sns") return naive_sns_covar(plan.model, plan.pa, plan.pb, cfg);
    if (row.kind == "coupled")
        return naive_smoothed_covar(plan.model, plan.pa, plan.pb, cfg, row.family, row.smoother);
    return decoupled_covar(plan.model, plan.pa, plan.pb, cfg, row.family, row.smoother);
}

ExperimentPlan load_plan(KeyValueConfig& cfg) {
    ExperimentPlan plan;
    const std::string kind = cfg.get_string("kind", "portfolio");
    plan.alpha = cfg.get_double("alpha", 0.95);
    plan.beta = cfg.get_double("beta", 0.95);
    plan.replications = cfg.get_int("replications", 40);
    plan.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 0));
    plan.threads = static_cast<int>(cfg.get_int("threads", 0));
    plan.output_dir = cfg.get_string("output.dir", "out");

    if (kind == "toy") {
        plan.is_toy = true;
        plan.toy_rho = cfg.get_double("toy.rho", 0.5);
        if (cfg.has("reference.value")) {
            plan.reference.mode = ReferenceSpec::Mode::kValue;
            plan.reference.value = cfg.get_double("reference.value");
        }
    } else if (kind == "portfolio") {
        plan.model = load_market_model(cfg);
        plan.pa = load_portfolio(cfg, "a", plan.model);
        plan.pb = load_portfolio(cfg, "b", plan.model);
        const std::string ref_mode = cfg.get_string("reference.mode", "closed_form");
        if (ref_mode == "value") {
            plan.reference.mode = ReferenceSpec::Mode::kValue;
            plan.reference.value = cfg.get_double("reference.value");
        } else if (ref_mode == "closed_form") {
            plan.reference.mode = ReferenceSpec::Mode::kClosedForm;
            plan.reference.n0 = cfg.get_int("reference.n0", 250000);
            plan.reference.precision = cfg.get_double("reference.precision", 0.002);
            plan.reference.replications =
                static_cast<int>(cfg.get_int("reference.replications", 10));
            plan.reference.max_doublings =
                static_cast<int>(cfg.get_int("reference.max_doublings", 8));
        } else {
            throw ConfigError("reference.mode must be 'value' or 'closed_form'");
        }
    } else {
        throw ConfigError("kind must be 'toy' or 'portfolio', got '" + kind + "'");
    }

    for (const std::string& name : cfg.subsections("row"))
        plan.rows.push_back(load_estimator_row(cfg, "row." + name, plan));
    if (plan.rows.empty()) throw ConfigError("plan defines no estimator rows");
    return plan;
}

EstimatorRow load_estimator_row(KeyValueConfig& cfg, const std::string& prefix,
                                const ExperimentPlan& plan) {
    const std::string base = prefix + ".";
    EstimatorRow row;
    const std::size_t dot = prefix.rfind('.');
    row.id = dot == std::string::npos ? prefix : prefix.substr(dot + 1);
    row.kind = cfg.get_string(base + "kind");
    row.gamma = cfg.get_double(base + "gamma", 0.0);
    row.constants.c = cfg.get_double(base + "c", 1.0);
    row.constants.c1 = cfg.get_double(base + "c1", 1.0);
    row.constants.c2 = cfg.get_double(base + "c2", 1.0);
    row.constants.l = cfg.get_int(base + "l", 1);
    row.constants.n = cfg.get_int(base + "n", 0);
    row.constants.rate_rule = cfg.get_bool(base + "rate_rule", false);
    row.k = cfg.get_int(base + "k", 0);
    row.h = cfg.get_int(base + "h", 0);
    if (cfg.has(base + "family"))
        row.family = family_from_name(cfg.get_string(base + "family"));

    HyperparameterGrid& grid = row.smoother.grid;
    row.smoother.tune_enabled = cfg.get_bool(base + "tune", true);
    grid.lambdas = cfg.get_double_list(base + "krr.lambdas", grid.lambdas);
    grid.length_scales = cfg.get_double_list(base + "krr.length_scales", grid.length_scales);
    const std::string ktype = cfg.get_string(base + "krr.kernel", "gaussian");
    grid.kernel_type = ktype == "matern" ? KernelSpec::Type::kMatern
                                         : KernelSpec::Type::kGaussian;
    grid.matern_nu = cfg.get_double(base + "krr.matern_nu", 2.5);
    grid.krr_train_cap = cfg.get_int(base + "krr.train_cap", 10000);
    grid.bandwidth_consts = cfg.get_double_list(base + "kernel.consts", grid.bandwidth_consts);
    {
        std::vector<double> widths = cfg.get_double_list(base + "mlp.widths", {});
        if (!widths.empty()) {
            grid.widths.clear();
            for (double w : widths) grid.widths.push_back(static_cast<int>(w));
        }
    }
    grid.learning_rates = cfg.get_double_list(base + "mlp.learning_rates", grid.learning_rates);
    grid.mlp_layers = static_cast<int>(cfg.get_int(base + "mlp.layers", 2));
    grid.mlp_weight_bound = cfg.get_double(base + "mlp.weight_bound", 10.0);
    grid.mlp_epochs = static_cast<int>(cfg.get_int(base + "mlp.epochs", 200));
    grid.mlp_batch = static_cast<int>(cfg.get_int(base + "mlp.batch", 256));
    grid.cv_folds = static_cast<int>(cfg.get_int(base + "cv_folds", 5));
    grid.cv_subsample = cfg.get_int(base + "cv_subsample", 0);
    if (cfg.has(base + "tune_budget_seconds"))
        grid.budget_seconds = cfg.get_double(base + "tune_budget_seconds");

    if (!plan.is_toy && row.family == SmootherFamily::kLinear) {
        const int degree = static_cast<int>(cfg.get_int(base + "linear.degree", 2));
        const bool hinges = cfg.get_bool(base + "linear.strike_hinges", true);
        grid.bases = {portfolio_basis(plan.model, plan.pa, plan.pb, degree, hinges)};
    }
    return row;
}

namespace {
constexpr char kPairMagic[4] = {'C', 'V', 'S', 'P'};
constexpr std::uint32_t kPairVersion = 1;
}  // namespace

void save_surface_pair(const SurfaceModel& mu, const SurfaceModel& pi, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    const std::string a = serialize_model(mu);
    const std::string b = serialize_model(pi);
    out.write(kPairMagic, 4);
    const std::uint32_t version = kPairVersion;
    out.write(reinterpret_cast<const char*>(&version), 4);
    const std::uint64_t la = a.size(), lb = b.size();
    out.write(reinterpret_cast<const char*>(&la), 8);
    out.write(a.data(), static_cast<std::streamsize>(a.size()));
    out.write(reinterpret_cast<const char*>(&lb), 8);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
    if (!out) throw IoError("failed writing surface pair to '" + path + "'");
}

std::pair<SurfaceModel, SurfaceModel> load_surface_pair(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open surface artifact '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kPairMagic, 4) != 0)
        throw CorruptArtifact("not a surface-pair artifact");
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (!in) throw CorruptArtifact("surface-pair artifact is truncated");
    if (version != kPairVersion)
        throw VersionMismatch("surface-pair format version " + std::to_string(version) +
                              " is not supported");
    auto read_blob = [&in, &path]() {
        std::uint64_t len = 0;
        in.read(reinterpret_cast<char*>(&len), 8);
        if (!in) throw CorruptArtifact("surface-pair artifact is truncated");
        std::string blob(len, '\0');
        in.read(blob.data(), static_cast<std::streamsize>(len));
        if (!in) throw CorruptArtifact("surface-pair artifact is truncated: " + path);
        return blob;
    };
    const std::string a = read_blob();
    const std::string b = read_blob();
    return {deserialize_model(a), deserialize_model(b)};
}

ExperimentResult run_experiment(const ExperimentPlan& plan,
                                const std::function<void(const MetricRow&)>& on_row) {
    ExperimentResult result;
    if (plan.is_toy) {
        result.reference_theta = plan.reference.mode == ReferenceSpec::Mode::kValue
                                     ? plan.reference.value
                                     : toy_gaussian_covar(plan.toy_rho, plan.alpha, plan.beta);
        result.reference_spread = 0.0;
    } else {
        const ReferenceResult ref =
            compute_reference(plan.model, plan.pa, plan.pb, plan.alpha, plan.beta,
                              plan.reference, plan.seed, plan.threads);
        result.reference_theta = ref.theta;
        result.reference_spread = ref.spread_half_width;
    }
    const double theta = result.reference_theta;

    for (const EstimatorRow& row : plan.rows) {
        MetricRow out;
        out.row_id = row.id;
        out.gamma = row.gamma;
        try {
            const std::uint64_t row_seed = fold(fold(plan.seed, stream_tag::kRow), row.row_key());
            double sum = 0.0, sum_sq_dev = 0.0, sum_sq_err = 0.0;
            std::vector<double> estimates(static_cast<std::size_t>(plan.replications));
            PhaseTimings total;
            EstimateReport last;
            for (long r = 0; r < plan.replications; ++r) {
                const std::uint64_t rep_seed =
                    fold(fold(row_seed, stream_tag::kReplication), static_cast<std::uint64_t>(r));
                last = run_single_estimate(row, plan, rep_seed);
                estimates[static_cast<std::size_t>(r)] = last.covar_hat;
                total.sim1 += last.timings.sim1;
                total.tune += last.timings.tune;
                total.fit += last.timings.fit;
                total.sim2 += last.timings.sim2;
                total.estimate += last.timings.estimate;
            }
            for (double e : estimates) sum += e;
            const double mean = sum / static_cast<double>(plan.replications);
            for (double e : estimates) {
                sum_sq_dev += (e - mean) * (e - mean);
                sum_sq_err += (e - theta) * (e - theta);
            }
            const double inv_r = 1.0 / static_cast<double>(plan.replications);
            // population SD (divisor R) so r_rmse^2 == r_bias^2 + r_sd^2
            out.r_bias = (mean - theta) / theta;
            out.r_sd = std::sqrt(sum_sq_dev * inv_r) / theta;
            out.r_rmse = std::sqrt(sum_sq_err * inv_r) / std::fabs(theta);
            out.m = last.config.m;
            out.l = last.config.l;
            out.k = last.config.k;
            out.h = last.config.h;
            out.family = last.family;
            out.coupling = last.coupling;
            out.timings.sim1 = total.sim1 * inv_r;
            out.timings.tune = total.tune * inv_r;
            out.timings.fit = total.fit * inv_r;
            out.timings.sim2 = total.sim2 * inv_r;
            out.timings.estimate = total.estimate * inv_r;
            if (plan.is_toy) out.gamma = static_cast<double>(last.config.n);
        } catch (const std::exception& e) {
            out.failed = true;
            out.error = e.what();
        }
        result.rows.push_back(out);
        if (on_row) on_row(out);
    }
    return result;
}

RateEstimate rate_analysis(const std::vector<std::pair<double, double>>& x_y) {
    const std::size_t n = x_y.size();
    if (n < 3) throw InsufficientPoints("rate analysis needs at least 3 ladder points");
    double sx = 0, sy = 0;
    for (const auto& [x, y] : x_y) {
        if (!(x > 0.0) || !(y > 0.0))
            throw DomainError("rate analysis needs positive budget and error values");
        sx += std::log(x);
        sy += std::log(y);
    }
    const double mx = sx / static_cast<double>(n);
    const double my = sy / static_cast<double>(n);
    double sxx = 0, sxy = 0;
    for (const auto& [x, y] : x_y) {
        const double dx = std::log(x) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(y) - my);
    }
    if (sxx == 0.0) throw DomainError("rate analysis needs distinct budgets");
    const double slope = sxy / sxx;
    double rss = 0;
    for (const auto& [x, y] : x_y) {
        const double fit = my + slope * (std::log(x) - mx);
        const double res = std::log(y) - fit;
        rss += res * res;
    }
    const double sigma2 = rss / static_cast<double>(n - 2);
    return {slope, std::sqrt(sigma2 / sxx)};
}

RateEstimate rate_analysis(const std::vector<MetricRow>& rows) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : rows)
        if (!r.failed) pts.emplace_back(r.gamma, r.r_rmse);
    return rate_analysis(pts);
}

std::string csv_header() {
    return "gamma,m,l,k,h,family,coupling,r_bias,r_sd,r_rmse,t_sim1,t_tune,t_fit,t_sim2,"
           "t_estimate";
}

std::string csv_row(const MetricRow& row, bool with_timings) {
    const PhaseTimings t = with_timings ? row.timings : PhaseTimings{};
    std::string s;
    s += fmt6(row.gamma);
    s += "," + std::to_string(row.m);
    s += "," + std::to_string(row.l);
    s += "," + std::to_string(row.k);
    s += "," + std::to_string(row.h);
    s += "," + row.family;
    s += "," + row.coupling;
    s += "," + fmt6(row.r_bias);
    s += "," + fmt6(row.r_sd);
    s += "," + fmt6(row.r_rmse);
    s += "," + fmt6(t.sim1);
    s += "," + fmt6(t.tune);
    s += "," + fmt6(t.fit);
    s += "," + fmt6(t.sim2);
    s += "," + fmt6(t.estimate);
    return s;
}

std::string json_rows(const std::vector<MetricRow>& rows, bool with_timings) {
    std::string s = "[";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const MetricRow& r = rows[i];
        const PhaseTimings t = with_timings ? r.timings : PhaseTimings{};
        if (i) s += ",";
        s += "\n  {";
        s += "\"gamma\":" + fmt6(r.gamma);
        s += ",\"m\":" + std::to_string(r.m);
        s += ",\"l\":" + std::to_string(r.l);
        s += ",\"k\":" + std::to_string(r.k);
        s += ",\"h\":" + std::to_string(r.h);
        s += ",\"family\":\"" + r.family + "\"";
        s += ",\"coupling\":\"" + r.coupling + "\"";
        s += ",\"r_bias\":" + fmt6(r.r_bias);
        s += ",\"r_sd\":" + fmt6(r.r_sd);
        s += ",\"r_rmse\":" + fmt6(r.r_rmse);
        s += ",\"t_sim1\":" + fmt6(t.sim1);
        s += ",\"t_tune\":" + fmt6(t.tune);
        s += ",\"t_fit\":" + fmt6(t.fit);
        s += ",\"t_sim2\":" + fmt6(t.sim2);
        s += ",\"t_estimate\":" + fmt6(t.estimate);
        if (r.failed) {
            std::string msg = r.error;
            for (auto& ch : msg)
                if (ch == '"') ch = '\'';
            s += ",\"failed\":true,\"error\":\"" + msg + "\"";
        }
        s += "}";
    }
    s += "\n]\n";
    return s;
}

void emit_results(const std::vector<MetricRow>& rows, const std::string& format,
                  const std::string& path, bool with_timings) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    if (format == "csv") {
        out << csv_header() << "\n";
        for (const auto& r : rows) out << csv_row(r, with_timings) << "\n";
    } else if (format == "json") {
        out << json_rows(rows, with_timings);
    } else {
        throw ConfigError("output format must be 'csv' or 'json', got '" + format + "'");
    }
    if (!out) throw IoError("failed writing results to '" + path + "'");
}

}  // namespace covar
