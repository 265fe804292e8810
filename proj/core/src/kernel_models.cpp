#include <chrono>
#include <cmath>
#include <limits>

#include "covar/errors.hpp"
#include "covar/surface.hpp"

namespace covar {

namespace {

double kernel_value(const KernelSpec& k, double dist) {
    const double r = dist / k.length_scale;
    switch (k.type) {
        case KernelSpec::Type::kGaussian:
            return std::exp(-0.5 * r * r);
        case KernelSpec::Type::kMatern: {
            if (k.matern_nu == 0.5) return std::exp(-r);
            if (k.matern_nu == 1.5) {
                const double a = 1.7320508075688772 * r;
                return (1.0 + a) * std::exp(-a);
            }
            if (k.matern_nu == 2.5) {
                const double a = 2.2360679774997896 * r;
                return (1.0 + a + a * a / 3.0) * std::exp(-a);
            }
            throw DomainError("Matern smoothness must be 0.5, 1.5 or 2.5");
        }
    }
    throw DomainError("unknown kernel type");
}

}  // namespace

// Nadaraya-Watson in log-space: softmax over -d^2/(2h^2). A convex
// combination of the targets by construction. When even the nearest kernel
// weight underflows a double, the softmax degenerates to the nearest
// sample's target; callers can ask for the count of such points.
double detail_eval_kernel_one(const KernelSmootherState& s, const Eigen::VectorXd& zs,
                              bool* fallback) {
    const long m = s.train_t.cols();
    const double inv2h2 = 1.0 / (2.0 * s.bandwidth * s.bandwidth);
    Eigen::ArrayXd logw(m);
    for (long j = 0; j < m; ++j)
        logw[j] = -(s.train_t.col(j) - zs).squaredNorm() * inv2h2;
    const double best = logw.maxCoeff();
    if (fallback) *fallback = best < -708.0;  // exp underflow even before shifting
    const Eigen::ArrayXd w = (logw - best).exp();
    return (w * s.targets.array()).sum() / w.sum();
}

double detail_eval_krr_one(const KrrState& s, const Eigen::VectorXd& zs) {
    const long m = s.train_t.cols();
    Eigen::ArrayXd d2(m);
    for (long j = 0; j < m; ++j) d2[j] = (s.train_t.col(j) - zs).squaredNorm();
    switch (s.kernel.type) {
        case KernelSpec::Type::kGaussian: {
            const double inv2l2 = 1.0 / (2.0 * s.kernel.length_scale * s.kernel.length_scale);
            return ((d2 * -inv2l2).exp() * s.weights.array()).sum();
        }
        case KernelSpec::Type::kMatern: {
            const Eigen::ArrayXd r = d2.sqrt() / s.kernel.length_scale;
            if (s.kernel.matern_nu == 0.5)
                return ((-r).exp() * s.weights.array()).sum();
            if (s.kernel.matern_nu == 1.5) {
                const Eigen::ArrayXd a = 1.7320508075688772 * r;
                return ((1.0 + a) * (-a).exp() * s.weights.array()).sum();
            }
            if (s.kernel.matern_nu == 2.5) {
                const Eigen::ArrayXd a = 2.2360679774997896 * r;
                return ((1.0 + a + a.square() / 3.0) * (-a).exp() * s.weights.array()).sum();
            }
            throw DomainError("Matern smoothness must be 0.5, 1.5 or 2.5");
        }
    }
    throw DomainError("unknown kernel type");
}

SurfaceModel fit_kernel_smoother(const TrainingSet& data, std::optional<double> bandwidth) {
    const auto t0 = std::chrono::steady_clock::now();
    if (data.m() < 2) throw DomainError("kernel smoothing needs at least two samples");

    double h;
    if (bandwidth) {
        if (!(*bandwidth > 0.0)) throw DomainError("bandwidth must be positive");
        h = *bandwidth;
    } else {
        // AUTO: h = c * m^{-1/(4+d)}; c from a small CV search handled by tune().
        // Standalone AUTO uses c = 1 on the rate-optimal scaling.
        h = std::pow(static_cast<double>(data.m()), -1.0 / (4.0 + data.d()));
    }

    KernelSmootherState state;
    state.bandwidth = h;
    state.train = data.inputs;
    state.targets = data.targets;

    SurfaceModel::Metadata meta;
    meta.sample_size = data.m();
    meta.hyperparams = "h=" + std::to_string(h);
    meta.fit_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return SurfaceModel(data.standardization, std::move(state), std::move(meta));
}

SurfaceModel fit_krr(const TrainingSet& data, const KernelSpec& kernel, double lambda,
                     long train_cap) {
    const auto t0 = std::chrono::steady_clock::now();
    const long m = data.m();
    if (m < 1) throw EmptyInput("KRR needs at least one sample");
    if (!(lambda > 0.0)) throw DomainError("ridge penalty must be positive");
    if (!(kernel.length_scale > 0.0)) throw DomainError("length scale must be positive");
    if (m > train_cap)
        throw DomainError("KRR training size " + std::to_string(m) +
                          " exceeds the configured cap " + std::to_string(train_cap) +
                          " (the fit is O(m^3))");

    // transposed copy keeps each training point contiguous for the pairwise pass
    const Eigen::MatrixXd inputs_t = data.inputs.transpose();
    Eigen::MatrixXd gram(m, m);
    for (long i = 0; i < m; ++i) {
        gram(i, i) = kernel_value(kernel, 0.0);
        for (long j = i + 1; j < m; ++j) {
            const double d = std::sqrt((inputs_t.col(i) - inputs_t.col(j)).squaredNorm());
            gram(i, j) = gram(j, i) = kernel_value(kernel, d);
        }
    }
    gram.diagonal().array() += static_cast<double>(m) * lambda;

    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success)
        throw FactorizationFailure("K + m*lambda*I is not positive definite (lambda too small?)");

    KrrState state;
    state.kernel = kernel;
    state.lambda = lambda;
    state.train = data.inputs;
    state.weights = llt.solve(data.targets);

    SurfaceModel::Metadata meta;
    meta.sample_size = m;
    meta.hyperparams = "lambda=" + std::to_string(lambda) +
                       ",ell=" + std::to_string(kernel.length_scale);
    meta.fit_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return SurfaceModel(data.standardization, std::move(state), std::move(meta));
}

}  // namespace covar
