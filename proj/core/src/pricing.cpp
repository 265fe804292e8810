#include "covar/pricing.hpp"

#include <cmath>

#include "covar/errors.hpp"
#include "covar/stats.hpp"

namespace covar {

double bs_call_price(double s, double k, double r, double sigma, double ttm) {
    if (!(s > 0.0) || !(k > 0.0)) throw DomainError("spot and strike must be positive");
    if (ttm < 0.0 || sigma < 0.0) throw DomainError("sigma and ttm must be nonnegative");
    if (ttm == 0.0 || sigma == 0.0) {
        const double fwd_intrinsic = s - k * std::exp(-r * ttm);
        return fwd_intrinsic > 0.0 ? fwd_intrinsic : 0.0;
    }
    const double vol = sigma * std::sqrt(ttm);
    const double d1 = (std::log(s / k) + (r + 0.5 * sigma * sigma) * ttm) / vol;
    const double d2 = d1 - vol;
    return s * norm_cdf(d1) - k * std::exp(-r * ttm) * norm_cdf(d2);
}

double barrier_uoc_price(double s, double k, double b, double r, double sigma, double ttm) {
    if (!(k > 0.0) || !(b > 0.0)) throw DomainError("strike and barrier must be positive");
    if (!(s > 0.0)) throw DomainError("spot must be positive");
    if (s >= b) return 0.0;  // knocked out by convention
    if (!(sigma > 0.0) || !(ttm > 0.0)) throw DomainError("sigma and ttm must be positive");
    if (k >= b) return 0.0;  // payoff region is empty

    const double vol = sigma * std::sqrt(ttm);
    auto delta_p = [&](double x) { return (std::log(x) + (r + 0.5 * sigma * sigma) * ttm) / vol; };
    auto delta_m = [&](double x) { return (std::log(x) + (r - 0.5 * sigma * sigma) * ttm) / vol; };

    const double disc = std::exp(-r * ttm);
    const double power = -2.0 * r / (sigma * sigma);
    const double sb = s / b;

    double price = s * (norm_cdf(delta_p(s / k)) - norm_cdf(delta_p(sb)));
    price -= disc * k * (norm_cdf(delta_m(s / k)) - norm_cdf(delta_m(sb)));
    price -= b * std::pow(sb, power) *
             (norm_cdf(delta_p(b * b / (k * s))) - norm_cdf(delta_p(b / s)));
    price += disc * k * std::pow(sb, power + 1.0) *
             (norm_cdf(delta_m(b * b / (k * s))) - norm_cdf(delta_m(b / s)));
    return price;
}

double geo_asian_call_conditional(double s_tau, double geo_partial, double k, double r,
                                  double sigma, double dt, int m, int m_tau) {
    if (!(s_tau > 0.0) || !(k > 0.0)) throw DomainError("spot and strike must be positive");
    if (m_tau > 0 && !(geo_partial > 0.0))
        throw DomainError("partial geometric mean must be positive");
    if (!(sigma >= 0.0) || !(dt > 0.0)) throw DomainError("sigma >= 0 and dt > 0 required");
    if (m < 1 || m_tau < 0 || m_tau > m) throw DomainError("need 0 <= m_tau <= m >= 1");

    const double rem_ttm = dt * static_cast<double>(m - m_tau);
    const double disc = std::exp(-r * rem_ttm);
    if (m_tau == m) {
        const double intrinsic = geo_partial - k;
        return intrinsic > 0.0 ? intrinsic : 0.0;  // disc == 1 here (tau == T)
    }

    // ln G | F_tau is Gaussian: the known fixings contribute m_tau*ln(geo_partial),
    // the remaining R fixings are a lognormal random walk from s_tau.
    const double R = static_cast<double>(m - m_tau);
    const double known = m_tau > 0 ? static_cast<double>(m_tau) * std::log(geo_partial) : 0.0;
    const double drift = r - 0.5 * sigma * sigma;
    const double mean_sum = R * std::log(s_tau) + drift * dt * R * (R + 1.0) * 0.5;
    const double var_sum = sigma * sigma * dt * R * (R + 1.0) * (2.0 * R + 1.0) / 6.0;

    const double mu_g = (known + mean_sum) / static_cast<double>(m);
    const double sd_g = std::sqrt(var_sum) / static_cast<double>(m);

    if (sd_g == 0.0) {
        const double intrinsic = std::exp(mu_g) - k;
        return disc * (intrinsic > 0.0 ? intrinsic : 0.0);
    }
    const double d1 = (mu_g - std::log(k) + sd_g * sd_g) / sd_g;
    const double d2 = d1 - sd_g;
    return disc * (std::exp(mu_g + 0.5 * sd_g * sd_g) * norm_cdf(d1) - k * norm_cdf(d2));
}

PortfolioSpec make_portfolio(const MarketModel& model, double w1, double w2, double w3,
                             Eigen::VectorXd k_asian, Eigen::VectorXd k_barrier,
                             Eigen::VectorXd barrier) {
    const int q = model.q;
    if (k_asian.size() != q || k_barrier.size() != q || barrier.size() != q)
        throw DimensionMismatch("portfolio strike/barrier vectors must have q entries");
    if ((k_asian.array() <= 0.0).any() || (k_barrier.array() <= 0.0).any() ||
        (barrier.array() <= 0.0).any())
        throw DomainError("strikes and barriers must be positive");
    for (int i = 0; i < q; ++i)
        if (!(barrier[i] > model.s0[i]))
            throw DomainError("barrier must exceed the initial price (leg worthless otherwise)");

    PortfolioSpec p;
    p.w1 = w1;
    p.w2 = w2;
    p.w3 = w3;
    p.k_asian = std::move(k_asian);
    p.k_barrier = std::move(k_barrier);
    p.barrier = std::move(barrier);

    const double dt = model.maturity() / static_cast<double>(model.steps());
    double v0 = 0.0;
    for (int i = 0; i < q; ++i) {
        v0 += p.w1 * model.s0[i];
        v0 += p.w2 * geo_asian_call_conditional(model.s0[i], 1.0, p.k_asian[i], model.r_f,
                                                model.sigma_bar[i], dt, model.steps(), 0);
        v0 += p.w3 * barrier_uoc_price(model.s0[i], p.k_barrier[i], p.barrier[i], model.r_f,
                                       model.sigma_bar[i], model.maturity());
    }
    p.v0 = v0;
    return p;
}

PortfolioSpec load_portfolio(KeyValueConfig& cfg, const std::string& name,
                             const MarketModel& model) {
    const std::string base = "portfolio." + name + ".";
    std::vector<double> w = cfg.get_double_list(base + "weights");
    if (w.size() != 3) throw ConfigError("key '" + base + "weights': expected 3 values");

    auto broadcast = [&](const std::string& key, double fallback) {
        std::vector<double> v = cfg.get_double_list(key, {fallback});
        if (v.size() == 1) return Eigen::VectorXd::Constant(model.q, v[0]).eval();
        if (static_cast<int>(v.size()) != model.q)
            throw ConfigError("key '" + key + "': expected 1 or q values");
        return Eigen::Map<Eigen::VectorXd>(v.data(), model.q).eval();
    };
    Eigen::VectorXd ka = broadcast(base + "k_asian", 105.0);
    Eigen::VectorXd kb = broadcast(base + "k_barrier", 105.0);
    Eigen::VectorXd bar = broadcast(base + "barrier", 120.0);
    return make_portfolio(model, w[0], w[1], w[2], std::move(ka), std::move(kb), std::move(bar));
}

double closed_form_value_tau(const PortfolioSpec& p, const MarketModel& model,
                             const RiskFactorVector& z) {
    const int q = model.q;
    if (z.s_tau.size() != q) throw DimensionMismatch("scenario dimension != model assets");
    const double dt = model.maturity() / static_cast<double>(model.steps());
    const double rem = model.maturity() - model.tau();

    double v = 0.0;
    for (int i = 0; i < q; ++i) {
        v += p.w1 * z.s_tau[i];
        if (p.w2 != 0.0)
            v += p.w2 * geo_asian_call_conditional(z.s_tau[i], z.geo_partial[i], p.k_asian[i],
                                                   model.r_f, model.sigma_bar[i], dt,
                                                   model.steps(), model.tau_index);
        if (p.w3 != 0.0 && z.run_max[i] <= p.barrier[i]) {
            v += p.w3 * barrier_uoc_price(z.s_tau[i], p.k_barrier[i], p.barrier[i], model.r_f,
                                          model.sigma_bar[i], rem);
        }
    }
    return v;
}

double closed_form_loss(const PortfolioSpec& p, const MarketModel& model,
                        const RiskFactorVector& z) {
    return p.v0 - closed_form_value_tau(p, model, z);
}

std::vector<double> discounted_losses(const PortfolioSpec& p, const MarketModel& model,
                                      const RiskFactorVector& z,
                                      const std::vector<PathBundle>& bundles) {
    const int q = model.q;
    if (z.s_tau.size() != q) throw DimensionMismatch("scenario dimension != model assets");
    const std::uint64_t tag = z.content_tag();
    const double disc = std::exp(-model.r_f * (model.maturity() - model.tau()));
    const double inv_m = 1.0 / static_cast<double>(model.steps());
    const int last = static_cast<int>(model.steps() - model.tau_index) - 1;

    const double stock_leg = p.w1 * z.s_tau.sum();

    std::vector<double> out;
    out.reserve(bundles.size());
    for (const PathBundle& b : bundles) {
        if (b.scenario_tag != tag)
            throw MismatchedScenario("path bundle was not simulated from this scenario");
        double v = stock_leg;
        for (int i = 0; i < q; ++i) {
            if (p.w2 != 0.0) {
                const double g = std::exp(b.geo_log_sum[i] * inv_m);
                if (g > p.k_asian[i]) v += p.w2 * disc * (g - p.k_asian[i]);
            }
            if (p.w3 != 0.0 && b.bridge_max[i] <= p.barrier[i]) {
                const double st = b.prices(i, last);
                if (st > p.k_barrier[i]) v += p.w3 * disc * (st - p.k_barrier[i]);
            }
        }
        out.push_back(p.v0 - v);
    }
    return out;
}

}  // namespace covar
