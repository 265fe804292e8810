#include <chrono>
#include <cmath>
#include <sstream>

#include "covar/errors.hpp"
#include "covar/rng.hpp"
#include "covar/surface.hpp"

namespace covar {

namespace {

struct Candidate {
    TunedParams params;
    std::string description;
};

std::string fmt(double x) {
    std::ostringstream os;
    os << x;
    return os.str();
}

// Candidate order is fixed and documented: the grid lists are walked
// lexicographically (first list outermost). Budget truncation therefore cuts
// a deterministic tail.
std::vector<Candidate> enumerate(SmootherFamily family, const HyperparameterGrid& grid) {
    std::vector<Candidate> out;
    switch (family) {
        case SmootherFamily::kLinear:
            for (std::size_t i = 0; i < grid.bases.size(); ++i) {
                TunedParams p;
                p.basis_index = static_cast<int>(i);
                out.push_back({p, grid.bases[i].describe()});
            }
            break;
        case SmootherFamily::kKernelSmoothing:
            for (double c : grid.bandwidth_consts) {
                TunedParams p;
                p.bandwidth_const = c;
                out.push_back({p, "c=" + fmt(c)});
            }
            break;
        case SmootherFamily::kKrr:
            for (double lam : grid.lambdas)
                for (double ell : grid.length_scales) {
                    TunedParams p;
                    p.lambda = lam;
                    p.length_scale = ell;
                    out.push_back({p, "lambda=" + fmt(lam) + ",ell=" + fmt(ell)});
                }
            break;
        case SmootherFamily::kMlp:
            for (int w : grid.widths)
                for (double lr : grid.learning_rates) {
                    TunedParams p;
                    p.width = w;
                    p.learning_rate = lr;
                    out.push_back({p, "width=" + std::to_string(w) + ",lr=" + fmt(lr)});
                }
            break;
    }
    if (out.empty()) throw EmptyInput("hyperparameter grid is empty for this family");
    return out;
}

}  // namespace

SurfaceModel fit_with_params(const TrainingSet& data, SmootherFamily family,
                             const HyperparameterGrid& grid, const TunedParams& p) {
    switch (family) {
        case SmootherFamily::kLinear:
            return fit_linear(data, grid.bases[static_cast<std::size_t>(p.basis_index)]);
        case SmootherFamily::kKernelSmoothing: {
            const double h =
                p.bandwidth_const * std::pow(static_cast<double>(data.m()),
                                             -1.0 / (4.0 + data.d()));
            return fit_kernel_smoother(data, h);
        }
        case SmootherFamily::kKrr: {
            KernelSpec k;
            k.type = grid.kernel_type;
            k.matern_nu = grid.matern_nu;
            k.length_scale = p.length_scale;
            return fit_krr(data, k, p.lambda, grid.krr_train_cap);
        }
        case SmootherFamily::kMlp: {
            MlpArch arch;
            arch.layers = grid.mlp_layers;
            arch.width = p.width;
            arch.weight_bound = grid.mlp_weight_bound;
            MlpTrainConfig t;
            t.epochs = grid.mlp_epochs;
            t.batch_size = grid.mlp_batch;
            t.learning_rate = p.learning_rate;
            t.train_seed = fold(grid.seed, stream_tag::kTraining);
            return fit_mlp(data, arch, t);
        }
    }
    throw Error("unreachable");
}

TunedParams first_candidate(SmootherFamily family, const HyperparameterGrid& grid) {
    return enumerate(family, grid).front().params;
}

namespace {

// Preference when CV scores tie exactly: smaller lambda, then larger
// bandwidth, then smaller width, then earlier candidate.
bool tie_prefer(SmootherFamily family, const TunedParams& a, const TunedParams& b) {
    switch (family) {
        case SmootherFamily::kKrr:
            if (a.lambda != b.lambda) return a.lambda < b.lambda;
            return false;
        case SmootherFamily::kKernelSmoothing:
            if (a.bandwidth_const != b.bandwidth_const)
                return a.bandwidth_const > b.bandwidth_const;
            return false;
        case SmootherFamily::kMlp:
            if (a.width != b.width) return a.width < b.width;
            return false;
        case SmootherFamily::kLinear:
            return false;
    }
    return false;
}

}  // namespace

std::string TunedParams::describe(SmootherFamily f) const {
    switch (f) {
        case SmootherFamily::kLinear: return "basis#" + std::to_string(basis_index);
        case SmootherFamily::kKernelSmoothing: return "c=" + fmt(bandwidth_const);
        case SmootherFamily::kKrr:
            return "lambda=" + fmt(lambda) + ",ell=" + fmt(length_scale);
        case SmootherFamily::kMlp:
            return "width=" + std::to_string(width) + ",lr=" + fmt(learning_rate);
    }
    return "?";
}

TuneResult tune(const TrainingSet& data, SmootherFamily family, const HyperparameterGrid& grid) {
    if (grid.cv_folds < 2) throw DomainError("cross-validation needs at least 2 folds");
    const auto t0 = std::chrono::steady_clock::now();

    const TrainingSet* cv_data = &data;
    TrainingSet subsample;
    if (grid.cv_subsample > 0 && grid.cv_subsample < data.m()) {
        subsample = data.head(grid.cv_subsample);
        cv_data = &subsample;
    }
    const long m = cv_data->m();
    const int folds = static_cast<int>(std::min<long>(grid.cv_folds, m));
    if (folds < 2) throw DomainError("not enough samples for cross-validation");

    // Deterministic fold assignment: seeded shuffle, then contiguous blocks.
    std::vector<long> perm(static_cast<std::size_t>(m));
    for (long i = 0; i < m; ++i) perm[static_cast<std::size_t>(i)] = i;
    RandomStream rs(fold(grid.seed, stream_tag::kCvFolds));
    for (long i = m - 1; i > 0; --i)
        std::swap(perm[static_cast<std::size_t>(i)],
                  perm[static_cast<std::size_t>(rs.below(static_cast<std::uint64_t>(i + 1)))]);

    std::vector<int> fold_of(static_cast<std::size_t>(m));
    for (long i = 0; i < m; ++i)
        fold_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] =
            static_cast<int>(i % folds);

    const std::vector<Candidate> candidates = enumerate(family, grid);

    TuneResult result;
    bool have_best = false;
    TunedParams best;
    double best_mse = 0.0;

    for (const Candidate& cand : candidates) {
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (have_best && elapsed > grid.budget_seconds) {
            result.budget_exhausted = true;
            break;
        }
        double sq_sum = 0.0;
        long n_val = 0;
        for (int f = 0; f < folds; ++f) {
            long n_train = 0;
            for (long i = 0; i < m; ++i)
                if (fold_of[static_cast<std::size_t>(i)] != f) ++n_train;
            TrainingSet fold_set;
            fold_set.standardization = cv_data->standardization;
            fold_set.inputs.resize(n_train, cv_data->d());
            fold_set.targets.resize(n_train);
            Eigen::MatrixXd val_in(m - n_train, cv_data->d());
            Eigen::VectorXd val_y(m - n_train);
            long a = 0, b = 0;
            for (long i = 0; i < m; ++i) {
                if (fold_of[static_cast<std::size_t>(i)] != f) {
                    fold_set.inputs.row(a) = cv_data->inputs.row(i);
                    fold_set.targets[a++] = cv_data->targets[i];
                } else {
                    val_in.row(b) = cv_data->inputs.row(i);
                    val_y[b++] = cv_data->targets[i];
                }
            }
            const SurfaceModel model = fit_with_params(fold_set, family, grid, cand.params);
            // Validation rows are already standardized; undo before evaluate()
            // (which standardizes with the model's recorded transform).
            const Eigen::MatrixXd raw_val = cv_data->standardization.invert(val_in);
            const Eigen::VectorXd pred = model.evaluate(raw_val);
            sq_sum += (pred - val_y).squaredNorm();
            n_val += val_y.size();
        }
        const double mse = sq_sum / static_cast<double>(n_val);
        result.table.push_back({cand.description, mse});
        if (!have_best || mse < best_mse ||
            (mse == best_mse && tie_prefer(family, cand.params, best))) {
            have_best = true;
            best = cand.params;
            best_mse = mse;
        }
    }
    result.best = best;
    return result;
}

SurfaceModel fit_tuned(const TrainingSet& data, SmootherFamily family,
                       const HyperparameterGrid& grid, TuneResult* tuning) {
    const TuneResult t = tune(data, family, grid);
    if (tuning) *tuning = t;
    return fit_with_params(data, family, grid, t.best);
}

}  // namespace covar
