#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "covar/config.hpp"
#include "covar/estimators.hpp"

namespace covar {

// Bivariate standard normal toy with correlation rho: mu = e1,
// pi = rho*e1 + sqrt(1-rho^2)*e2. Its CoVaR is known in closed form, which
// makes it the calibration target for the batching machinery.
double toy_gaussian_covar(double rho, double alpha, double beta);
void toy_gaussian_pairs(double rho, long n, std::uint64_t seed, Eigen::VectorXd* mu,
                        Eigen::VectorXd* pi);

struct ReferenceSpec {
    enum class Mode { kValue, kClosedForm };
    Mode mode = Mode::kClosedForm;
    double value = 0.0;     // kValue only
    long n0 = 250000;       // starting scenario count
    double precision = 0.002;  // spread half-width target, relative
    int replications = 10;
    int max_doublings = 8;
};

struct ReferenceResult {
    double theta = 0.0;
    double spread_half_width = 0.0;  // (max-min)/2 over the replication set
    long n_used = 0;
};

// Batching on closed-form losses, doubling n until the replication spread
// half-width is below precision * |estimate|. Returns the replication mean.
ReferenceResult compute_reference(const MarketModel& model, const PortfolioSpec& pa,
                                  const PortfolioSpec& pb, double alpha, double beta,
                                  const ReferenceSpec& spec, std::uint64_t seed, int threads);

struct EstimatorRow {
    std::string id;
    // "exact" (closed-form batching), "sns", "coupled", "decoupled",
    // "batching" (toy pairs; plans with kind = toy only)
    std::string kind;
    SmootherFamily family = SmootherFamily::kKrr;
    double gamma = 0.0;
    BudgetConstants constants;
    long k = 0, h = 0;  // explicit batching shape; 0 = derive from constants.c
    SmootherOptions smoother;

    std::uint64_t row_key() const;  // content hash, independent of plan order
};

struct ExperimentPlan {
    bool is_toy = false;
    double toy_rho = 0.5;
    MarketModel model;
    PortfolioSpec pa, pb;
    double alpha = 0.95, beta = 0.95;
    long replications = 40;
    std::uint64_t seed = 0;
    int threads = 1;
    ReferenceSpec reference;
    std::vector<EstimatorRow> rows;
    std::string output_dir = "out";
};

// Parses the documented plan format; unknown keys are rejected by name.
ExperimentPlan load_plan(KeyValueConfig& cfg);

// One `<prefix>.` estimator section (the plan rows use prefix "row.<name>").
EstimatorRow load_estimator_row(KeyValueConfig& cfg, const std::string& prefix,
                                const ExperimentPlan& plan);

// One estimate for one seed; dispatches on row.kind.
EstimateReport run_single_estimate(const EstimatorRow& row, const ExperimentPlan& plan,
                                   std::uint64_t seed);

// Two fitted surfaces (mu then pi) in one versioned artifact for the
// offline-fit / online-estimate workflow.
void save_surface_pair(const SurfaceModel& mu, const SurfaceModel& pi, const std::string& path);
std::pair<SurfaceModel, SurfaceModel> load_surface_pair(const std::string& path);

struct MetricRow {
    std::string row_id;
    double gamma = 0.0;
    long m = 0, l = 0, k = 0, h = 0;
    std::string family, coupling;
    double r_bias = 0.0, r_sd = 0.0, r_rmse = 0.0;
    PhaseTimings timings;  // averaged over replications
    bool failed = false;
    std::string error;
};

struct ExperimentResult {
    double reference_theta = 0.0;
    double reference_spread = 0.0;
    std::vector<MetricRow> rows;
};

// Runs every row for plan.replications replications. Replication r of a row
// seeds from (root, row content key, r) only, so plan order cannot change
// values. Rows are delivered through on_row as they complete; failures are
// recorded per row, not fatal.
ExperimentResult run_experiment(const ExperimentPlan& plan,
                                const std::function<void(const MetricRow&)>& on_row = {});

struct RateEstimate {
    double slope = 0.0;
    double std_error = 0.0;
};

// OLS slope of log(y) on log(x); needs >= 3 points.
RateEstimate rate_analysis(const std::vector<std::pair<double, double>>& x_y);
// Convenience: log r-RMSE against log gamma over the given rows.
RateEstimate rate_analysis(const std::vector<MetricRow>& rows);

// CSV columns:
// gamma,m,l,k,h,family,coupling,r_bias,r_sd,r_rmse,t_sim1,t_tune,t_fit,t_sim2,t_estimate
// Numbers use 6 significant digits. Timings serialize as zero unless
// with_timings, so equal-seed runs emit identical bytes.
std::string csv_header();
std::string csv_row(const MetricRow& row, bool with_timings);
std::string json_rows(const std::vector<MetricRow>& rows, bool with_timings);
void emit_results(const std::vector<MetricRow>& rows, const std::string& format,
                  const std::string& path, bool with_timings);

}  // namespace covar
