#include <chrono>

#include "covar/errors.hpp"
#include "covar/surface.hpp"

namespace covar {

namespace {

// Column order: [intercept][z_1..z_d][z_1^2..z_d^2]...[hinges].
// Polynomial terms use standardized coordinates; hinge knots are raw units.
void fill_design_row(const BasisSpec& basis, const Standardizer& st,
                     const Eigen::VectorXd& z_std, Eigen::RowVectorXd& row) {
    const int d = static_cast<int>(z_std.size());
    long c = 0;
    if (basis.intercept) row[c++] = 1.0;
    for (int p = 1; p <= basis.degree; ++p)
        for (int j = 0; j < d; ++j) row[c++] = std::pow(z_std[j], p);
    for (const auto& [j, knot] : basis.hinges) {
        if (j < 0 || j >= d) throw DomainError("hinge dimension out of range");
        const double raw = st.loc[j] + st.scale[j] * z_std[j];
        row[c++] = raw > knot ? raw - knot : 0.0;
    }
}

Eigen::MatrixXd build_design(const BasisSpec& basis, const Standardizer& st,
                             const Eigen::MatrixXd& z_std) {
    const long m = z_std.rows();
    Eigen::MatrixXd design(m, basis.size(static_cast<int>(z_std.cols())));
    Eigen::RowVectorXd row(design.cols());
    for (long i = 0; i < m; ++i) {
        fill_design_row(basis, st, z_std.row(i).transpose(), row);
        design.row(i) = row;
    }
    return design;
}

}  // namespace

double detail_eval_linear_one(const LinearState& s, const Standardizer& st,
                              const Eigen::VectorXd& z) {
    const Eigen::VectorXd zs = st.apply_row(z);
    Eigen::RowVectorXd row(s.coeffs.size());
    fill_design_row(s.basis, st, zs, row);
    return row.dot(s.coeffs.transpose());
}

SurfaceModel fit_linear(const TrainingSet& data, const BasisSpec& basis) {
    const auto t0 = std::chrono::steady_clock::now();
    const long s = basis.size(data.d());
    if (data.m() <= s)
        throw DomainError("linear fit needs more samples than basis functions (m=" +
                          std::to_string(data.m()) + ", s=" + std::to_string(s) + ")");

    const Eigen::MatrixXd design = build_design(basis, data.standardization, data.inputs);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < design.cols()) {
        const int offending = static_cast<int>(qr.colsPermutation().indices()[qr.rank()]);
        throw RankDeficient("design matrix is rank deficient at column " +
                                std::to_string(offending),
                            offending);
    }
    LinearState state;
    state.basis = basis;
    state.coeffs = qr.solve(data.targets);

    SurfaceModel::Metadata meta;
    meta.sample_size = data.m();
    meta.hyperparams = basis.describe();
    meta.fit_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return SurfaceModel(data.standardization, std::move(state), std::move(meta));
}

Eigen::VectorXd SurfaceModel::raw_coefficients() const {
    const LinearState* s = linear_state();
    if (!s) throw DomainError("raw_coefficients is defined for the linear family");
    if (s->basis.degree > 2 || !s->basis.hinges.empty() || !s->basis.intercept)
        throw DomainError("raw_coefficients needs intercept + degree <= 2 and no hinges");
    const int d = dim();
    const Standardizer& st = standardization_;
    // beta0 + sum_j b1_j zs_j + b2_j zs_j^2 with zs = (z - a)/c expands to raw
    // coefficients per dimension (no cross terms in this basis).
    Eigen::VectorXd out = Eigen::VectorXd::Zero(1 + static_cast<long>(s->basis.degree) * d);
    double c0 = s->coeffs[0];
    for (int j = 0; j < d; ++j) {
        const double a = st.loc[j];
        const double c = st.scale[j];
        const double b1 = s->coeffs[1 + j];
        const double b2 = s->basis.degree >= 2 ? s->coeffs[1 + d + j] : 0.0;
        c0 += -b1 * a / c + b2 * a * a / (c * c);
        out[1 + j] = b1 / c - 2.0 * b2 * a / (c * c);
        if (s->basis.degree >= 2) out[1 + d + j] = b2 / (c * c);
    }
    out[0] = c0;
    return out;
}

}  // namespace covar
