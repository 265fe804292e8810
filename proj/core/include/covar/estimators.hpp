#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "covar/market.hpp"
#include "covar/pricing.hpp"
#include "covar/surface.hpp"

namespace covar {

enum class AllocationStrategy : std::uint8_t {
    kSnsOpt = 0,      // l = c1*G^{1/4}, h = c2*G^{1/4}, k = G^{1/2}/(c1 c2)
    kSmoothFixedL = 1,  // coupled smoothing: constant l, n = G/l
    kDecoupled = 2,   // m = G/l, stage-2 n independent of G
};

std::string strategy_name(AllocationStrategy s);

struct BudgetConstants {
    double c = 1.0;   // sqrt(k)/h target for the batching shape
    double c1 = 1.0;  // SNS_OPT inner-count constant
    double c2 = 1.0;  // SNS_OPT batch-size constant
    long l = 1;       // fixed inner count (smoothing / decoupled)
    long n = 0;       // decoupled stage-2 scenario count; 0 = use the rate rule
    bool rate_rule = false;  // n = ceil(m^{3/2}), the n^{-1/3} <= a_m condition
                             // for a_m ~ m^{-1/2} smoothers
};

struct BudgetAllocation {
    double gamma = 0.0;
    AllocationStrategy strategy = AllocationStrategy::kSnsOpt;
    long k = 0, h = 0, l = 0, m = 0, n = 0;
    BudgetConstants constants;
};

// Integer allocation with documented rounding: round half up on the
// real-valued formulas, then repair k*h*l <= gamma by decrementing l.
BudgetAllocation allocate_budget(double gamma, AllocationStrategy strategy,
                                 const BudgetConstants& constants);

// Batching shape for a given n: h = round((n/c^2)^{1/3}), k = floor(n/h).
std::pair<long, long> batching_shape(long n, double c);

struct EstimatorConfig {
    double alpha = 0.95;
    double beta = 0.95;
    long k = 0;  // batch count
    long h = 0;  // batch size
    long m = 0;  // stage-1 outer scenarios
    long l = 0;  // inner observations per scenario
    long n = 0;  // estimation-stage outer scenarios (= k*h)
    std::uint64_t seed = 0;
    int threads = 1;
    bool keep_concomitants = false;

    void validate() const;
    static EstimatorConfig from_allocation(const BudgetAllocation& alloc, double alpha,
                                           double beta, std::uint64_t seed);
};

struct PhaseTimings {
    double sim1 = 0.0;      // stage-1 (or coupled) simulation
    double tune = 0.0;
    double fit = 0.0;
    double sim2 = 0.0;      // stage-2 outer simulation
    double estimate = 0.0;  // surface evaluation + batching
};

struct EstimateReport {
    double covar_hat = 0.0;
    // Median across batches of the per-batch ceil(alpha*h)-th mu order
    // statistic; a diagnostic, not an estimator with proven properties.
    double var_hat = 0.0;
    EstimatorConfig config;
    std::string family;    // "exact", "sns", "linear", "kernel", "krr", "mlp"
    std::string coupling;  // "exact", "sns", "coupled", "decoupled"
    PhaseTimings timings;
    std::vector<double> concomitants;  // retained when config.keep_concomitants

    // Stable key-ordered JSON; timings are zeroed unless with_timings so that
    // equal (config, seed) runs produce byte-identical output.
    std::string to_json(bool with_timings = false) const;
};

// The ceil(p*N)-th smallest value (1-based order-statistic convention).
double empirical_quantile(const std::vector<double>& values, double p);

struct BatchingResult {
    double covar = 0.0;
    double var_hat = 0.0;
    std::vector<double> concomitants;
};

// Algorithm core: consecutive batches of h pairs in input order; per batch
// the concomitant of the ceil(alpha*h)-th smallest mu (ties broken by
// original index); the estimate is the ceil(beta*k)-th smallest concomitant.
BatchingResult batching_covar(const std::vector<std::pair<double, double>>& pairs, long k,
                              long h, double alpha, double beta);
BatchingResult batching_covar(const Eigen::VectorXd& mu, const Eigen::VectorXd& pi, long k,
                              long h, double alpha, double beta);

// Per-family knobs the estimators pass through to tune()/fit.
struct SmootherOptions {
    HyperparameterGrid grid;
    bool tune_enabled = true;
};

// Batching on exact closed-form losses (no repricing error). Estimation-stage
// scenarios come from the kStageTwo stream of `seed`.
EstimateReport batching_exact_covar(const MarketModel& model, const PortfolioSpec& pa,
                                    const PortfolioSpec& pb, const EstimatorConfig& cfg);

// Nested-simulation estimator: (Xbar, Ybar) plugged directly into batching.
EstimateReport naive_sns_covar(const MarketModel& model, const PortfolioSpec& pa,
                               const PortfolioSpec& pb, const EstimatorConfig& cfg);

// Coupled smoothing estimator: surfaces fitted on the same n scenarios used
// for batching, evaluated at those scenarios.
EstimateReport naive_smoothed_covar(const MarketModel& model, const PortfolioSpec& pa,
                                    const PortfolioSpec& pb, const EstimatorConfig& cfg,
                                    SmootherFamily family, const SmootherOptions& opts);

// Two-stage decoupled estimator. Pass fitted surfaces to skip stage 1
// (offline/online split); stage-2 scenarios use a stream disjoint from
// stage 1.
EstimateReport decoupled_covar(const MarketModel& model, const PortfolioSpec& pa,
                               const PortfolioSpec& pb, const EstimatorConfig& cfg,
                               SmootherFamily family, const SmootherOptions& opts,
                               const LossSurface* fitted_mu = nullptr,
                               const LossSurface* fitted_pi = nullptr,
                               TuneResult* tuning_mu = nullptr,
                               TuneResult* tuning_pi = nullptr);

// Stage-1 two-level sample only: scenarios (flattened rows), Xbar and Ybar.
// Exposed for the fit/tune workflows.
void stage_one_sample(const MarketModel& model, const PortfolioSpec& pa, const PortfolioSpec& pb,
                      long m, long l, std::uint64_t seed, int threads, Eigen::MatrixXd* z_rows,
                      Eigen::VectorXd* xbar, Eigen::VectorXd* ybar);

}  // namespace covar
