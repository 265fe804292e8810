#pragma once

#include <Eigen/Dense>
#include <vector>

#include "covar/config.hpp"
#include "covar/market.hpp"

namespace covar {

// Positions and contract terms of one portfolio: w1 stocks, w2 geometric
// Asian calls, w3 up-and-out barrier calls per asset. v0 is the portfolio
// value at t=0, computed once from the closed forms, never simulated.
struct PortfolioSpec {
    double w1 = 0.0, w2 = 0.0, w3 = 0.0;
    Eigen::VectorXd k_asian;    // strikes of the Asian leg
    Eigen::VectorXd k_barrier;  // strikes of the barrier leg
    Eigen::VectorXd barrier;    // knockout levels, must exceed s0
    double v0 = 0.0;
};

struct HestonParams {
    double kappa = 0.0;     // mean-reversion speed
    double theta = 0.0;     // long-run variance
    double sigma_v = 0.0;   // vol of variance
    double rho = 0.0;       // price-variance correlation
    double v0 = 0.0;        // spot variance
    double lambda_h = 0.0;  // volatility risk premium
};

double bs_call_price(double s, double k, double r, double sigma, double ttm);

// Four-term up-and-out closed form. s >= b returns 0 (knocked out).
double barrier_uoc_price(double s, double k, double b, double r, double sigma, double ttm);

// Characteristic-function quadrature; abs tolerance 1e-8, truncation doubled
// from 200 until the tail integrand falls below 1e-10 of its peak.
double heston_call_price(double s, const HestonParams& params, double k, double r, double ttm);

struct HestonProbabilities {
    double p1 = 0.0, p2 = 0.0;
    double phi_max = 0.0;     // largest truncation used across the two integrals
    double tail_ratio = 0.0;  // worst |integrand(phi_max)| / peak
};
HestonProbabilities heston_call_probabilities(double s, const HestonParams& params, double k,
                                              double r, double ttm);

// Time-tau value of a discretely monitored geometric Asian call conditional
// on the first m_tau of m fixings (pass m_tau = 0 with geo_partial = 1 for
// the unconditional t=0 price). Fixings are dt apart; the remaining product
// is lognormal, so this is a single lognormal call.
double geo_asian_call_conditional(double s_tau, double geo_partial, double k, double r,
                                  double sigma, double dt, int m, int m_tau);

// Builds the spec and computes v0 from the closed forms at t=0.
PortfolioSpec make_portfolio(const MarketModel& model, double w1, double w2, double w3,
                             Eigen::VectorXd k_asian, Eigen::VectorXd k_barrier,
                             Eigen::VectorXd barrier);

// Portfolio section of a config file, e.g. `portfolio.a.weights = 2,1,-1`
// with strike/barrier defaults broadcastable per asset.
PortfolioSpec load_portfolio(KeyValueConfig& cfg, const std::string& name,
                             const MarketModel& model);

// Exact portfolio value at tau given the scenario.
double closed_form_value_tau(const PortfolioSpec& p, const MarketModel& model,
                             const RiskFactorVector& z);

// v0 - V_tau(z); the loss surface mu(z) (or pi(z)).
double closed_form_loss(const PortfolioSpec& p, const MarketModel& model,
                        const RiskFactorVector& z);

// One discounted loss sample v0 - V_hat_tau per bundle. Bundles must have
// been simulated from this z (content tags are checked).
std::vector<double> discounted_losses(const PortfolioSpec& p, const MarketModel& model,
                                      const RiskFactorVector& z,
                                      const std::vector<PathBundle>& bundles);

}  // namespace covar
