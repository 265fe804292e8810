#include "covar/surface.hpp"

#include <cmath>

#include "covar/errors.hpp"
#include "covar/parallel.hpp"

namespace covar {

std::string family_name(SmootherFamily f) {
    switch (f) {
        case SmootherFamily::kLinear: return "linear";
        case SmootherFamily::kKernelSmoothing: return "kernel";
        case SmootherFamily::kKrr: return "krr";
        case SmootherFamily::kMlp: return "mlp";
    }
    return "?";
}

SmootherFamily family_from_name(const std::string& name) {
    if (name == "linear" || name == "lr") return SmootherFamily::kLinear;
    if (name == "kernel" || name == "ks" || name == "nw") return SmootherFamily::kKernelSmoothing;
    if (name == "krr") return SmootherFamily::kKrr;
    if (name == "mlp" || name == "nn") return SmootherFamily::kMlp;
    throw DomainError("unknown smoother family '" + name + "'");
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& raw) const {
    if (raw.cols() != loc.size())
        throw DimensionMismatch("points dimension does not match the recorded transform");
    return (raw.rowwise() - loc.transpose()).array().rowwise() / scale.transpose().array();
}

Eigen::VectorXd Standardizer::apply_row(const Eigen::VectorXd& raw) const {
    if (raw.size() != loc.size())
        throw DimensionMismatch("point dimension does not match the recorded transform");
    return (raw - loc).cwiseQuotient(scale);
}

Eigen::MatrixXd Standardizer::invert(const Eigen::MatrixXd& standardized) const {
    return (standardized.array().rowwise() * scale.transpose().array()).rowwise() +
           loc.transpose().array();
}

TrainingSet TrainingSet::build(Eigen::MatrixXd raw_inputs, Eigen::VectorXd targets) {
    const long m = raw_inputs.rows();
    const long d = raw_inputs.cols();
    if (m < 1) throw EmptyInput("training set must be nonempty");
    if (targets.size() != m) throw ShapeMismatch("inputs and targets disagree on m");
    if (!raw_inputs.allFinite() || !targets.allFinite())
        throw DomainError("training data contains non-finite entries");

    Standardizer s;
    s.loc = raw_inputs.colwise().mean();
    s.scale.resize(d);
    s.constant_col.assign(static_cast<std::size_t>(d), 0);
    for (long j = 0; j < d; ++j) {
        const double var = (raw_inputs.col(j).array() - s.loc[j]).square().sum() /
                           static_cast<double>(m);
        const double sd = std::sqrt(var);
        if (sd <= 1e-12 * std::max(1.0, std::fabs(s.loc[j]))) {
            s.scale[j] = 1.0;
            s.constant_col[static_cast<std::size_t>(j)] = 1;
        } else {
            s.scale[j] = sd;
        }
    }

    TrainingSet t;
    t.inputs = s.apply(raw_inputs);
    t.targets = std::move(targets);
    t.standardization = std::move(s);
    return t;
}

TrainingSet TrainingSet::head(long n) const {
    if (n < 1 || n > m()) throw DomainError("head size out of range");
    TrainingSet t;
    t.inputs = inputs.topRows(n);
    t.targets = targets.head(n);
    t.standardization = standardization;
    return t;
}

std::string BasisSpec::describe() const {
    std::string s = "basis(degree=" + std::to_string(degree) +
                    (intercept ? ",intercept" : ",no-intercept");
    if (!hinges.empty()) s += "," + std::to_string(hinges.size()) + " hinges";
    return s + ")";
}

SurfaceModel::SurfaceModel(Standardizer std_in, LinearState s, Metadata meta)
    : standardization_(std::move(std_in)), state_(std::move(s)), meta_(std::move(meta)) {}
SurfaceModel::SurfaceModel(Standardizer std_in, KernelSmootherState s, Metadata meta)
    : standardization_(std::move(std_in)), state_(std::move(s)), meta_(std::move(meta)) {
    auto& st = std::get<KernelSmootherState>(state_);
    if (st.train_t.size() == 0) st.train_t = st.train.transpose();
}
SurfaceModel::SurfaceModel(Standardizer std_in, KrrState s, Metadata meta)
    : standardization_(std::move(std_in)), state_(std::move(s)), meta_(std::move(meta)) {
    auto& st = std::get<KrrState>(state_);
    if (st.train_t.size() == 0) st.train_t = st.train.transpose();
}
SurfaceModel::SurfaceModel(Standardizer std_in, MlpState s, Metadata meta)
    : standardization_(std::move(std_in)), state_(std::move(s)), meta_(std::move(meta)) {}

SmootherFamily SurfaceModel::family() const {
    return static_cast<SmootherFamily>(state_.index());
}

// The single-point evaluators live in linear.cpp / kernel_models.cpp / mlp.cpp;
// these externs give this TU access without widening the public header.
double detail_eval_linear_one(const LinearState&, const Standardizer&, const Eigen::VectorXd&);
double detail_eval_kernel_one(const KernelSmootherState&, const Eigen::VectorXd&, bool*);
double detail_eval_krr_one(const KrrState&, const Eigen::VectorXd&);
double detail_eval_mlp_one(const MlpState&, const Eigen::VectorXd&);

double SurfaceModel::evaluate_one(const Eigen::VectorXd& z) const {
    if (z.size() != dim()) throw DimensionMismatch("evaluation point has wrong dimension");
    switch (family()) {
        case SmootherFamily::kLinear:
            return detail_eval_linear_one(std::get<LinearState>(state_), standardization_, z);
        case SmootherFamily::kKernelSmoothing:
            return detail_eval_kernel_one(std::get<KernelSmootherState>(state_),
                                          standardization_.apply_row(z), nullptr);
        case SmootherFamily::kKrr:
            return detail_eval_krr_one(std::get<KrrState>(state_), standardization_.apply_row(z));
        case SmootherFamily::kMlp:
            return detail_eval_mlp_one(std::get<MlpState>(state_), standardization_.apply_row(z));
    }
    throw Error("unreachable");
}

Eigen::VectorXd SurfaceModel::evaluate(const Eigen::MatrixXd& points, int threads) const {
    return evaluate_reporting(points, nullptr, threads);
}

Eigen::VectorXd SurfaceModel::evaluate_reporting(const Eigen::MatrixXd& points,
                                                 long* empty_neighborhoods, int threads) const {
    if (points.cols() != dim() && points.rows() > 0)
        throw DimensionMismatch("points dimension does not match model");
    const long n = points.rows();
    Eigen::VectorXd out(n);
    if (n == 0) {
        if (empty_neighborhoods) *empty_neighborhoods = 0;
        return out;
    }
    std::vector<std::uint8_t> fallback;
    if (family() == SmootherFamily::kKernelSmoothing)
        fallback.assign(static_cast<std::size_t>(n), 0);

    // Per-point evaluation keeps results independent of any batching of the
    // input; each point touches only its own output slot.
    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
        const Eigen::VectorXd z = points.row(static_cast<long>(i)).transpose();
        switch (family()) {
            case SmootherFamily::kLinear:
                out[static_cast<long>(i)] =
                    detail_eval_linear_one(std::get<LinearState>(state_), standardization_, z);
                break;
            case SmootherFamily::kKernelSmoothing: {
                bool fell = false;
                out[static_cast<long>(i)] = detail_eval_kernel_one(
                    std::get<KernelSmootherState>(state_), standardization_.apply_row(z), &fell);
                if (fell) fallback[i] = 1;
                break;
            }
            case SmootherFamily::kKrr:
                out[static_cast<long>(i)] = detail_eval_krr_one(std::get<KrrState>(state_),
                                                                standardization_.apply_row(z));
                break;
            case SmootherFamily::kMlp:
                out[static_cast<long>(i)] = detail_eval_mlp_one(std::get<MlpState>(state_),
                                                                standardization_.apply_row(z));
                break;
        }
    });
    if (empty_neighborhoods) {
        long count = 0;
        for (const auto f : fallback) count += f;
        *empty_neighborhoods = count;
    }
    return out;
}

Eigen::VectorXd LossSurface::values(const Eigen::MatrixXd& points, int threads) const {
    const long n = points.rows();
    Eigen::VectorXd out(n);
    parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
        out[static_cast<long>(i)] = value(points.row(static_cast<long>(i)).transpose());
    });
    return out;
}

SupErrorResult sup_error(const LossSurface& model,
                         const std::function<double(const Eigen::VectorXd&)>& oracle,
                         const std::function<Eigen::VectorXd(long)>& probe, long count) {
    if (count < 1) throw DomainError("sup_error needs at least one probe point");
    double sup = 0.0;
    double sq = 0.0;
    for (long i = 0; i < count; ++i) {
        const Eigen::VectorXd z = probe(i);
        const double err = std::fabs(model.value(z) - oracle(z));
        if (err > sup) sup = err;
        sq += err * err;
    }
    return {sup, std::sqrt(sq / static_cast<double>(count))};
}

}  // namespace covar
