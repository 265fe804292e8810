#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace covar {

enum class SmootherFamily : std::uint8_t {
    kLinear = 0,
    kKernelSmoothing = 1,
    kKrr = 2,
    kMlp = 3,
};

std::string family_name(SmootherFamily f);
SmootherFamily family_from_name(const std::string& name);

// Per-dimension affine transform (location, scale) recorded at fit time.
// Constant columns get scale 1 and a flag.
struct Standardizer {
    Eigen::VectorXd loc;
    Eigen::VectorXd scale;
    std::vector<std::uint8_t> constant_col;

    Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const;
    Eigen::VectorXd apply_row(const Eigen::VectorXd& raw) const;
    // raw = loc + scale * standardized
    Eigen::MatrixXd invert(const Eigen::MatrixXd& standardized) const;
};

// Stage-1 sample: standardized scenario inputs plus raw response values.
struct TrainingSet {
    Eigen::MatrixXd inputs;  // m x d, standardized
    Eigen::VectorXd targets;
    Standardizer standardization;

    long m() const { return inputs.rows(); }
    int d() const { return static_cast<int>(inputs.cols()); }

    // Computes the standardization from the data and validates finiteness.
    static TrainingSet build(Eigen::MatrixXd raw_inputs, Eigen::VectorXd targets);
    // First n rows, same standardization.
    TrainingSet head(long n) const;
};

// Basis for the linear smoother: optional intercept, per-dimension powers
// z_i..z_i^degree evaluated on standardized coordinates, plus hinge terms
// (z_i - knot)+ evaluated in raw units.
struct BasisSpec {
    bool intercept = true;
    int degree = 2;
    std::vector<std::pair<int, double>> hinges;

    long size(int d) const {
        return (intercept ? 1 : 0) + static_cast<long>(degree) * d +
               static_cast<long>(hinges.size());
    }
    std::string describe() const;
};

struct KernelSpec {
    enum class Type : std::uint8_t { kGaussian = 0, kMatern = 1 };
    Type type = Type::kGaussian;
    double length_scale = 1.0;  // in standardized units
    double matern_nu = 2.5;     // one of 0.5, 1.5, 2.5
};

struct MlpArch {
    int layers = 2;            // hidden layers
    int width = 64;            // units per hidden layer
    double weight_bound = 10.0;  // |w_ij| clipped to this after every step
};

struct MlpTrainConfig {
    int epochs = 200;
    int batch_size = 256;
    double learning_rate = 0.01;
    std::uint64_t train_seed = 0;
};

// --- fitted states -----------------------------------------------------------

struct LinearState {
    BasisSpec basis;
    Eigen::VectorXd coeffs;
};

struct KernelSmootherState {
    double bandwidth = 0.0;  // standardized units
    Eigen::MatrixXd train;   // standardized inputs, kept by reference semantics of the model
    Eigen::VectorXd targets;
    Eigen::MatrixXd train_t;  // d x m evaluation cache (one contiguous column per point)
};

struct KrrState {
    KernelSpec kernel;
    double lambda = 0.0;
    Eigen::MatrixXd train;
    Eigen::VectorXd weights;  // (K + m*lambda*I)^{-1} X
    Eigen::MatrixXd train_t;  // d x m evaluation cache
};

struct MlpState {
    MlpArch arch;
    std::vector<Eigen::MatrixXd> w;  // layer weight matrices
    std::vector<Eigen::VectorXd> b;  // layer biases
    double target_loc = 0.0;         // training standardizes targets internally
    double target_scale = 1.0;
};

// A fitted approximation of one loss surface. Evaluation is deterministic
// and identical under any partitioning of the evaluation points; the model
// is immutable and safe to evaluate from many threads.
class SurfaceModel {
public:
    struct Metadata {
        double fit_seconds = 0.0;
        long sample_size = 0;
        std::string hyperparams;
    };

    SurfaceModel() = default;
    SurfaceModel(Standardizer std, LinearState s, Metadata meta);
    SurfaceModel(Standardizer std, KernelSmootherState s, Metadata meta);
    SurfaceModel(Standardizer std, KrrState s, Metadata meta);
    SurfaceModel(Standardizer std, MlpState s, Metadata meta);

    SmootherFamily family() const;
    int dim() const { return static_cast<int>(standardization_.loc.size()); }
    const Standardizer& standardization() const { return standardization_; }
    const Metadata& metadata() const { return meta_; }

    double evaluate_one(const Eigen::VectorXd& z) const;
    Eigen::VectorXd evaluate(const Eigen::MatrixXd& points, int threads = 1) const;
    // Count of probe points whose nearest kernel weight underflowed (kernel
    // smoothing only; such points fall back to the nearest sample's target).
    Eigen::VectorXd evaluate_reporting(const Eigen::MatrixXd& points, long* empty_neighborhoods,
                                       int threads = 1) const;

    // Raw-unit polynomial coefficients (intercept, then degree-major blocks);
    // defined for the linear family with degree <= 2 and no hinges.
    Eigen::VectorXd raw_coefficients() const;

    const LinearState* linear_state() const { return std::get_if<LinearState>(&state_); }
    const KernelSmootherState* kernel_state() const {
        return std::get_if<KernelSmootherState>(&state_);
    }
    const KrrState* krr_state() const { return std::get_if<KrrState>(&state_); }
    const MlpState* mlp_state() const { return std::get_if<MlpState>(&state_); }

private:
    Standardizer standardization_;
    std::variant<LinearState, KernelSmootherState, KrrState, MlpState> state_;
    Metadata meta_;
};

// --- fitting -----------------------------------------------------------------

SurfaceModel fit_linear(const TrainingSet& data, const BasisSpec& basis);

// bandwidth: explicit positive value, or nullopt for AUTO
// (h = c * m^{-1/(4+d)} with c picked by a small cross-validated search).
SurfaceModel fit_kernel_smoother(const TrainingSet& data, std::optional<double> bandwidth);

// train_cap bounds the O(m^3) fit; exceeding it is an error, not a silent cut.
SurfaceModel fit_krr(const TrainingSet& data, const KernelSpec& kernel, double lambda,
                     long train_cap = 10000);

SurfaceModel fit_mlp(const TrainingSet& data, const MlpArch& arch, const MlpTrainConfig& train);

// MSE of the MLP on given weights plus its analytic gradient; exposed for
// finite-difference verification.
double mlp_mse_and_gradient(const MlpState& net, const Eigen::MatrixXd& inputs,
                            const Eigen::VectorXd& targets, std::vector<Eigen::MatrixXd>* grad_w,
                            std::vector<Eigen::VectorXd>* grad_b);

// --- tuning ------------------------------------------------------------------

struct HyperparameterGrid {
    // KRR
    std::vector<double> lambdas{1e-6, 1e-5, 1e-4};
    std::vector<double> length_scales{1.0, 2.0, 4.0};
    KernelSpec::Type kernel_type = KernelSpec::Type::kGaussian;
    double matern_nu = 2.5;
    // kernel smoothing: h = c * m^{-1/(4+d)}
    std::vector<double> bandwidth_consts{0.5, 1.0, 2.0, 4.0};
    // MLP
    std::vector<int> widths{64};
    std::vector<double> learning_rates{0.01};
    int mlp_layers = 2;
    double mlp_weight_bound = 10.0;
    int mlp_epochs = 200;
    int mlp_batch = 256;
    // linear
    std::vector<BasisSpec> bases{BasisSpec{}};

    int cv_folds = 5;
    double budget_seconds = std::numeric_limits<double>::infinity();
    std::uint64_t seed = 0;
    long cv_subsample = 0;  // 0 = all rows; else CV runs on the first n rows
    long krr_train_cap = 10000;
};

struct TunedParams {
    double lambda = 1e-5;
    double length_scale = 2.0;
    double bandwidth_const = 1.0;
    int width = 64;
    double learning_rate = 0.01;
    int basis_index = 0;
    std::string describe(SmootherFamily f) const;
};

struct CvEntry {
    std::string description;
    double cv_mse = 0.0;
};

struct TuneResult {
    TunedParams best;
    std::vector<CvEntry> table;
    bool budget_exhausted = false;
};

// K-fold CV grid search with a deterministic seeded fold assignment;
// candidates are evaluated in the documented lexicographic order and
// truncated when the wall-clock budget runs out (best-so-far returned).
TuneResult tune(const TrainingSet& data, SmootherFamily family, const HyperparameterGrid& grid);

// Fits one candidate from the grid with the chosen hyperparameters.
SurfaceModel fit_with_params(const TrainingSet& data, SmootherFamily family,
                             const HyperparameterGrid& grid, const TunedParams& params);

// First candidate in the documented enumeration order (used when tuning is off).
TunedParams first_candidate(SmootherFamily family, const HyperparameterGrid& grid);

// tune + final fit on the full training set.
SurfaceModel fit_tuned(const TrainingSet& data, SmootherFamily family,
                       const HyperparameterGrid& grid, TuneResult* tuning = nullptr);

// --- generic surface handle --------------------------------------------------

// Read-only evaluation interface shared by fitted models and closed-form
// oracles; estimators only see this.
class LossSurface {
public:
    virtual ~LossSurface() = default;
    virtual int dim() const = 0;
    virtual double value(const Eigen::VectorXd& z) const = 0;
    virtual Eigen::VectorXd values(const Eigen::MatrixXd& points, int threads) const;
};

class SurfaceModelRef final : public LossSurface {
public:
    explicit SurfaceModelRef(const SurfaceModel& model) : model_(&model) {}
    int dim() const override { return model_->dim(); }
    double value(const Eigen::VectorXd& z) const override { return model_->evaluate_one(z); }
    Eigen::VectorXd values(const Eigen::MatrixXd& points, int threads) const override {
        return model_->evaluate(points, threads);
    }

private:
    const SurfaceModel* model_;
};

class FunctionSurface final : public LossSurface {
public:
    FunctionSurface(int dim, std::function<double(const Eigen::VectorXd&)> fn)
        : dim_(dim), fn_(std::move(fn)) {}
    int dim() const override { return dim_; }
    double value(const Eigen::VectorXd& z) const override { return fn_(z); }

private:
    int dim_;
    std::function<double(const Eigen::VectorXd&)> fn_;
};

// --- error measurement and persistence ----------------------------------------

struct SupErrorResult {
    double sup_abs = 0.0;
    double l2 = 0.0;  // root mean square
};

// Monte Carlo approximation of the essential sup (and L2 error) under the
// probe distribution; probe(i) must be a pure function of i.
SupErrorResult sup_error(const LossSurface& model,
                         const std::function<double(const Eigen::VectorXd&)>& oracle,
                         const std::function<Eigen::VectorXd(long)>& probe, long count);

// Versioned binary container; round-trips bit-exactly.
void save_model(const SurfaceModel& model, const std::string& path);
SurfaceModel load_model(const std::string& path);
std::string serialize_model(const SurfaceModel& model);
SurfaceModel deserialize_model(const std::string& bytes);

}  // namespace covar
