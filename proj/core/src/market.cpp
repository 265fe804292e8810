#include "covar/market.hpp"

#include <cmath>
#include <string>

#include "covar/errors.hpp"
#include "covar/parallel.hpp"
#include "covar/rng.hpp"

namespace covar {

Eigen::VectorXd RiskFactorVector::flatten() const {
    const auto q = s_tau.size();
    Eigen::VectorXd z(3 * q);
    z.segment(0, q) = s_tau;
    z.segment(q, q) = run_max;
    z.segment(2 * q, q) = geo_partial;
    return z;
}

RiskFactorVector RiskFactorVector::unflatten(const Eigen::VectorXd& z) {
    if (z.size() % 3 != 0)
        throw DimensionMismatch("risk-factor vector length must be a multiple of 3");
    const auto q = z.size() / 3;
    RiskFactorVector out;
    out.s_tau = z.segment(0, q);
    out.run_max = z.segment(q, q);
    out.geo_partial = z.segment(2 * q, q);
    return out;
}

std::uint64_t RiskFactorVector::content_tag() const {
    std::uint64_t h = hash_bytes(s_tau.data(), sizeof(double) * s_tau.size());
    h = hash_bytes(run_max.data(), sizeof(double) * run_max.size(), h);
    h = hash_bytes(geo_partial.data(), sizeof(double) * geo_partial.size(), h);
    return h;
}

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& cov) {
    const auto n = cov.rows();
    if (cov.cols() != n) throw DomainError("covariance must be square");
    const double asym = (cov - cov.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff()))
        throw DomainError("covariance must be symmetric within 1e-12");

    const double pivot_floor = 1e-12 * cov.diagonal().maxCoeff();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double d = cov(j, j) - a.row(j).head(j).squaredNorm();
        if (d <= pivot_floor)
            throw NotPositiveDefinite("covariance pivot " + std::to_string(j) +
                                      " is not positive (bad correlation input?)");
        a(j, j) = std::sqrt(d);
        for (Eigen::Index i = j + 1; i < n; ++i) {
            const double s = cov(i, j) - a.row(i).head(j).dot(a.row(j).head(j));
            a(i, j) = s / a(j, j);
        }
    }
    return a;
}

MarketModel make_market_model(int q, Eigen::VectorXd drift_real, double r_f,
                              Eigen::MatrixXd cov, Eigen::VectorXd grid,
                              int tau_index, Eigen::VectorXd s0) {
    if (q < 1) throw DomainError("asset count must be >= 1");
    if (drift_real.size() != q || s0.size() != q)
        throw DimensionMismatch("drift and s0 must have q entries");
    if (cov.rows() != q || cov.cols() != q)
        throw DimensionMismatch("covariance must be q x q");
    const int M = static_cast<int>(grid.size());
    if (M < 1) throw DomainError("monitoring grid must be nonempty");
    if (tau_index < 1 || tau_index >= M)
        throw DomainError("tau_index must satisfy 1 <= tau_index < M");
    if (grid[0] <= 0.0) throw DomainError("grid times must be positive");
    for (int l = 1; l < M; ++l)
        if (grid[l] <= grid[l - 1]) throw DomainError("grid must be strictly increasing");
    if ((s0.array() <= 0.0).any()) throw DomainError("initial prices must be positive");
    if ((cov.diagonal().array() <= 0.0).any())
        throw DomainError("covariance diagonal must be strictly positive");

    MarketModel m;
    m.q = q;
    m.drift_real = std::move(drift_real);
    m.r_f = r_f;
    m.chol = cholesky_factor(cov);
    m.cov = std::move(cov);
    m.grid = std::move(grid);
    m.tau_index = tau_index;
    m.s0 = std::move(s0);
    m.sigma_bar = m.cov.diagonal().array().sqrt();

    const double recon = (m.chol * m.chol.transpose() - m.cov).cwiseAbs().maxCoeff();
    if (recon > 1e-10 * m.cov.cwiseAbs().maxCoeff())
        throw NotPositiveDefinite("Cholesky factor does not reproduce covariance");
    return m;
}

double bridge_max_sample(double s_start, double s_end, double sigma, double dt, double u) {
    if (!(s_start > 0.0) || !(s_end > 0.0))
        throw DomainError("bridge endpoints must be positive");
    if (!(u > 0.0) || !(u < 1.0)) throw DomainError("bridge uniform must lie in (0,1)");
    if (!(sigma > 0.0) || !(dt > 0.0)) throw DomainError("bridge needs sigma > 0 and dt > 0");
    const double x = std::log(s_start);
    const double y = std::log(s_end);
    const double dxy = y - x;
    const double m = 0.5 * (x + y + std::sqrt(dxy * dxy - 2.0 * sigma * sigma * dt * std::log(u)));
    return std::exp(m);
}

namespace {

// Advances log prices over [t_{from}, t_to] with the given per-asset drift,
// updating the cumulative bridge max and the log-fixing sum at each monitored
// time. Draw order per step: q correlated normals, then q bridge uniforms.
void advance_path(const MarketModel& model, RandomStream& rs, int step_from, int step_to,
                  const Eigen::VectorXd& drift, Eigen::VectorXd& log_s,
                  Eigen::VectorXd& bmax, Eigen::VectorXd& geo_log_sum,
                  Eigen::MatrixXd* record) {
    const int q = model.q;
    Eigen::VectorXd eps(q), shock(q), log_next(q);
    for (int l = step_from + 1; l <= step_to; ++l) {
        const double dt = model.time_at(l) - model.time_at(l - 1);
        const double sdt = std::sqrt(dt);
        for (int i = 0; i < q; ++i) eps[i] = rs.normal();
        shock.noalias() = model.chol * eps;
        for (int i = 0; i < q; ++i) {
            const double sig = model.sigma_bar[i];
            log_next[i] = log_s[i] + (drift[i] - 0.5 * sig * sig) * dt + sdt * shock[i];
        }
        for (int i = 0; i < q; ++i) {
            const double u = rs.uniform01();
            const double m = bridge_max_sample(std::exp(log_s[i]), std::exp(log_next[i]),
                                               model.sigma_bar[i], dt, u);
            if (m > bmax[i]) bmax[i] = m;
        }
        log_s = log_next;
        geo_log_sum += log_s;
        if (record) record->col(l - step_from - 1) = log_s.array().exp();
    }
}

}  // namespace

RiskFactorVector simulate_outer_one(const MarketModel& model, std::uint64_t seed, long index) {
    RandomStream rs(fold(fold(seed, stream_tag::kOuterScenario), static_cast<std::uint64_t>(index)));
    Eigen::VectorXd log_s = model.s0.array().log();
    Eigen::VectorXd bmax = model.s0;
    Eigen::VectorXd geo_log_sum = Eigen::VectorXd::Zero(model.q);
    advance_path(model, rs, 0, model.tau_index, model.drift_real, log_s, bmax, geo_log_sum,
                 nullptr);
    RiskFactorVector z;
    z.s_tau = log_s.array().exp();
    z.run_max = bmax;
    z.geo_partial = (geo_log_sum / static_cast<double>(model.tau_index)).array().exp();
    return z;
}

std::vector<RiskFactorVector> simulate_outer(const MarketModel& model, long m,
                                             std::uint64_t seed, int threads) {
    if (m < 1) throw DomainError("scenario count must be >= 1");
    std::vector<RiskFactorVector> out(static_cast<std::size_t>(m));
    parallel_for(static_cast<std::size_t>(m), threads, [&](std::size_t i) {
        out[i] = simulate_outer_one(model, seed, static_cast<long>(i));
    });
    return out;
}

std::vector<PathBundle> simulate_inner(const MarketModel& model, const RiskFactorVector& z,
                                       long l, std::uint64_t seed, long scenario_id) {
    if (l < 1) throw DomainError("inner path count must be >= 1");
    if (z.s_tau.size() != model.q)
        throw DimensionMismatch("scenario dimension does not match model");
    const int remaining = model.steps() - model.tau_index;
    const std::uint64_t tag = z.content_tag();
    const std::uint64_t base =
        fold(fold(seed, stream_tag::kInnerPath), static_cast<std::uint64_t>(scenario_id));
    const Eigen::VectorXd drift = Eigen::VectorXd::Constant(model.q, model.r_f);
    const Eigen::VectorXd log_tau = z.s_tau.array().log();
    const Eigen::VectorXd geo_base =
        static_cast<double>(model.tau_index) * z.geo_partial.array().log();

    std::vector<PathBundle> bundles(static_cast<std::size_t>(l));
    for (long j = 0; j < l; ++j) {
        PathBundle& b = bundles[static_cast<std::size_t>(j)];
        b.stream_key = fold(base, static_cast<std::uint64_t>(j));
        b.scenario_tag = tag;
        b.prices.resize(model.q, remaining);
        RandomStream rs(b.stream_key);
        Eigen::VectorXd log_s = log_tau;
        b.bridge_max = z.run_max;
        b.geo_log_sum = geo_base;
        advance_path(model, rs, model.tau_index, model.steps(), drift, log_s, b.bridge_max,
                     b.geo_log_sum, &b.prices);
    }
    return bundles;
}

MarketModel generate_market_model(int q, double r_f, int grid_size, int tau_index,
                                  double horizon, double s0, std::uint64_t gen_seed) {
    RandomStream rs(fold(gen_seed, stream_tag::kModelGen));
    Eigen::VectorXd drift(q), vols(q);
    for (int i = 0; i < q; ++i) drift[i] = 0.05 + 0.10 * rs.uniform01();
    for (int i = 0; i < q; ++i) vols[i] = 0.10 + 0.30 * rs.uniform01();

    // Random Gram correlation, blended toward identity so pivots stay healthy
    // at large q.
    Eigen::MatrixXd g(q, q);
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j) g(i, j) = rs.normal();
    Eigen::MatrixXd gram = g * g.transpose() / static_cast<double>(q);
    Eigen::MatrixXd corr(q, q);
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j)
            corr(i, j) = gram(i, j) / std::sqrt(gram(i, i) * gram(j, j));
    corr = 0.7 * corr + 0.3 * Eigen::MatrixXd::Identity(q, q);

    Eigen::MatrixXd cov(q, q);
    for (int i = 0; i < q; ++i)
        for (int j = 0; j < q; ++j) cov(i, j) = corr(i, j) * vols[i] * vols[j];

    Eigen::VectorXd grid(grid_size);
    for (int l = 1; l <= grid_size; ++l)
        grid[l - 1] = horizon * static_cast<double>(l) / static_cast<double>(grid_size);

    return make_market_model(q, drift, r_f, cov, grid,
                             tau_index, Eigen::VectorXd::Constant(q, s0));
}

MarketModel load_market_model(KeyValueConfig& cfg) {
    const std::string kind = cfg.get_string("model.kind", "generated");
    const int q = static_cast<int>(cfg.get_int("model.q"));
    const double r_f = cfg.get_double("model.r_f", 0.05);
    const int grid_size = static_cast<int>(cfg.get_int("model.grid_size", 50));
    const int tau_index = static_cast<int>(cfg.get_int("model.tau_index", 2));
    const double horizon = cfg.get_double("model.horizon", 1.0);

    Eigen::VectorXd grid(grid_size);
    for (int l = 1; l <= grid_size; ++l)
        grid[l - 1] = horizon * static_cast<double>(l) / static_cast<double>(grid_size);

    auto broadcast = [&](const std::string& key, double fallback) {
        std::vector<double> v = cfg.get_double_list(key, {fallback});
        if (v.size() == 1) return Eigen::VectorXd::Constant(q, v[0]).eval();
        if (static_cast<int>(v.size()) != q)
            throw ConfigError("key '" + key + "': expected 1 or q values");
        return Eigen::Map<Eigen::VectorXd>(v.data(), q).eval();
    };

    if (kind == "generated") {
        const std::uint64_t gen_seed =
            static_cast<std::uint64_t>(cfg.get_int("model.seed", 20240101));
        const double s0 = cfg.get_double("model.s0", 100.0);
        return generate_market_model(q, r_f, grid_size, tau_index, horizon, s0, gen_seed);
    }
    if (kind == "explicit") {
        Eigen::VectorXd drift = broadcast("model.drift", 0.08);
        Eigen::VectorXd s0 = broadcast("model.s0", 100.0);
        Eigen::MatrixXd cov(q, q);
        if (cfg.has("model.cov")) {
            std::vector<double> flat = cfg.get_double_list("model.cov");
            if (static_cast<int>(flat.size()) != q * q)
                throw ConfigError("model.cov must list q*q entries row-major");
            for (int i = 0; i < q; ++i)
                for (int j = 0; j < q; ++j) cov(i, j) = flat[static_cast<std::size_t>(i) * q + j];
        } else {
            Eigen::VectorXd vols = broadcast("model.vol", 0.2);
            const double rho = cfg.get_double("model.rho", 0.0);
            for (int i = 0; i < q; ++i)
                for (int j = 0; j < q; ++j)
                    cov(i, j) = (i == j ? 1.0 : rho) * vols[i] * vols[j];
        }
        return make_market_model(q, drift, r_f, cov, grid, tau_index, s0);
    }
    throw ConfigError("model.kind must be 'generated' or 'explicit', got '" + kind + "'");
}

}  // namespace covar
