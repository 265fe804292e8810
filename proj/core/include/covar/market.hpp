#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "covar/config.hpp"

namespace covar {

// Correlated multi-asset GBM world. Real-world drifts apply on [0,tau]
// (outer scenarios), the risk-free rate on [tau,T] (inner repricing paths).
// Immutable after construction; safe to share across threads.
struct MarketModel {
    int q = 0;
    Eigen::VectorXd drift_real;   // per-asset annual drift on [0,tau]
    double r_f = 0.0;             // risk-free rate on [tau,T] and for discounting
    Eigen::MatrixXd cov;          // q x q covariance of log-return vols
    Eigen::MatrixXd chol;         // lower-triangular A with A A^T = cov
    Eigen::VectorXd grid;         // monitoring times t_1 < ... < t_M = T
    int tau_index = 0;            // M_tau with tau = t_{M_tau} (1-based count)
    Eigen::VectorXd s0;           // initial prices
    Eigen::VectorXd sigma_bar;    // sqrt(diag(cov)), cached

    int steps() const { return static_cast<int>(grid.size()); }
    double tau() const { return grid[tau_index - 1]; }
    double maturity() const { return grid[grid.size() - 1]; }
    double time_at(int l) const { return l == 0 ? 0.0 : grid[l - 1]; }  // l in [0,M]
};

// One outer-level scenario: terminal prices at tau, bridge-adjusted running
// maxima over [0,tau], and partial geometric means over the first M_tau fixings.
struct RiskFactorVector {
    Eigen::VectorXd s_tau;
    Eigen::VectorXd run_max;
    Eigen::VectorXd geo_partial;

    // Flattened (s_tau, run_max, geo_partial) in R^{3q}.
    Eigen::VectorXd flatten() const;
    static RiskFactorVector unflatten(const Eigen::VectorXd& z);
    // Content key binding inner bundles to the scenario they continue.
    std::uint64_t content_tag() const;
};

// One inner-level continuation from tau to T.
struct PathBundle {
    Eigen::MatrixXd prices;       // q x (M - M_tau) monitored prices on (tau, T]
    Eigen::VectorXd bridge_max;   // cumulative bridge-adjusted running max over [0, T]
    Eigen::VectorXd geo_log_sum;  // sum over all M fixings of ln S_i(t_l)
    std::uint64_t stream_key = 0;  // RNG stream that produced the path
    std::uint64_t scenario_tag = 0;
};

// Fails on indefinite input rather than regularizing; pivot tolerance is
// 1e-12 times the largest diagonal entry.
Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& cov);

// Validates invariants (SPD covariance, increasing grid, positive s0,
// 1 <= tau_index < M) and fills the derived fields.
MarketModel make_market_model(int q, Eigen::VectorXd drift_real, double r_f,
                              Eigen::MatrixXd cov, Eigen::VectorXd grid,
                              int tau_index, Eigen::VectorXd s0);

// Samples the maximum of a log-price Brownian bridge over one interval given
// both endpoints. Always >= max(s_start, s_end).
double bridge_max_sample(double s_start, double s_end, double sigma, double dt, double u);

// m independent scenarios under the real-world drift; scenario i is a pure
// function of (seed, i), regardless of m, ordering, or thread count.
std::vector<RiskFactorVector> simulate_outer(const MarketModel& model, long m,
                                             std::uint64_t seed, int threads = 1);

// Single scenario draw, exposed for streaming consumers.
RiskFactorVector simulate_outer_one(const MarketModel& model, std::uint64_t seed, long index);

// l conditional continuations from tau to T under the risk-neutral drift.
// Path j is a pure function of (seed, scenario_id, j).
std::vector<PathBundle> simulate_inner(const MarketModel& model, const RiskFactorVector& z,
                                       long l, std::uint64_t seed, long scenario_id);

// Model loading: either an explicit spec (drifts + covariance or correlation
// and vols) or the documented seeded generator for any q.
MarketModel load_market_model(KeyValueConfig& cfg);

// Seeded generator used when the config asks for `model.kind = generated`:
// drifts U[0.05,0.15], vols U[0.1,0.4], correlation from a normalized random
// Gram matrix blended toward identity.
MarketModel generate_market_model(int q, double r_f, int grid_size, int tau_index,
                                  double horizon, double s0, std::uint64_t gen_seed);

}  // namespace covar
