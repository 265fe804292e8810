#include <chrono>
#include <cmath>

#include "covar/errors.hpp"
#include "covar/rng.hpp"
#include "covar/surface.hpp"

namespace covar {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Forward pass, keeping activations for backprop. Layer 0..L-1 are sigmoid
// hidden layers, layer L is linear.
void forward(const MlpState& net, const Eigen::VectorXd& x, std::vector<Eigen::VectorXd>& act) {
    const std::size_t layers = net.w.size();
    act.resize(layers + 1);
    act[0] = x;
    for (std::size_t l = 0; l < layers; ++l) {
        Eigen::VectorXd pre = net.w[l] * act[l] + net.b[l];
        if (l + 1 < layers)
            act[l + 1] = pre.unaryExpr([](double v) { return sigmoid(v); });
        else
            act[l + 1] = std::move(pre);  // linear output
    }
}

void clip_weights(MlpState& net) {
    const double bound = net.arch.weight_bound;
    for (auto& w : net.w) w = w.cwiseMax(-bound).cwiseMin(bound);
}

}  // namespace

double detail_eval_mlp_one(const MlpState& s, const Eigen::VectorXd& zs) {
    std::vector<Eigen::VectorXd> act;
    forward(s, zs, act);
    return s.target_loc + s.target_scale * act.back()[0];
}

double mlp_mse_and_gradient(const MlpState& net, const Eigen::MatrixXd& inputs,
                            const Eigen::VectorXd& targets, std::vector<Eigen::MatrixXd>* grad_w,
                            std::vector<Eigen::VectorXd>* grad_b) {
    const long n = inputs.rows();
    const std::size_t layers = net.w.size();
    if (grad_w) {
        grad_w->resize(layers);
        grad_b->resize(layers);
        for (std::size_t l = 0; l < layers; ++l) {
            (*grad_w)[l] = Eigen::MatrixXd::Zero(net.w[l].rows(), net.w[l].cols());
            (*grad_b)[l] = Eigen::VectorXd::Zero(net.b[l].size());
        }
    }
    double mse = 0.0;
    std::vector<Eigen::VectorXd> act;
    for (long i = 0; i < n; ++i) {
        forward(net, inputs.row(i).transpose(), act);
        const double err = act.back()[0] - targets[i];
        mse += err * err;
        if (!grad_w) continue;
        // dMSE/dout = 2 err / n
        Eigen::VectorXd delta = Eigen::VectorXd::Constant(1, 2.0 * err / static_cast<double>(n));
        for (std::size_t l = layers; l-- > 0;) {
            (*grad_w)[l].noalias() += delta * act[l].transpose();
            (*grad_b)[l] += delta;
            if (l > 0) {
                Eigen::VectorXd up = net.w[l].transpose() * delta;
                // sigmoid'(pre) = a (1 - a) with a = act[l]
                delta = up.cwiseProduct(act[l].cwiseProduct(
                    (Eigen::VectorXd::Ones(act[l].size()) - act[l])));
            }
        }
    }
    return mse / static_cast<double>(n);
}

SurfaceModel fit_mlp(const TrainingSet& data, const MlpArch& arch, const MlpTrainConfig& train) {
    const auto t0 = std::chrono::steady_clock::now();
    if (arch.layers < 1 || arch.width < 1) throw DomainError("MLP needs layers >= 1, width >= 1");
    if (!(arch.weight_bound > 0.0)) throw DomainError("weight bound must be positive");
    const long m = data.m();
    const int d = data.d();

    // Targets are standardized for training; the inverse affine is stored in
    // the model, so the weight bound applies in standardized space.
    const double t_loc = data.targets.mean();
    double t_sd = std::sqrt((data.targets.array() - t_loc).square().sum() /
                            static_cast<double>(m));
    if (t_sd <= 1e-12 * std::max(1.0, std::fabs(t_loc))) t_sd = 1.0;
    Eigen::VectorXd y = (data.targets.array() - t_loc) / t_sd;

    MlpState net;
    net.arch = arch;
    net.target_loc = t_loc;
    net.target_scale = t_sd;
    const std::size_t layers = static_cast<std::size_t>(arch.layers) + 1;
    net.w.resize(layers);
    net.b.resize(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        const int fan_in = l == 0 ? d : arch.width;
        const int fan_out = l + 1 == layers ? 1 : arch.width;
        RandomStream rs(fold(fold(train.train_seed, stream_tag::kMlpInit), l));
        const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        net.w[l].resize(fan_out, fan_in);
        for (int i = 0; i < fan_out; ++i)
            for (int j = 0; j < fan_in; ++j) net.w[l](i, j) = r * (2.0 * rs.uniform01() - 1.0);
        net.b[l] = Eigen::VectorXd::Zero(fan_out);
    }
    clip_weights(net);

    // Adam moments.
    std::vector<Eigen::MatrixXd> mw(layers), vw(layers);
    std::vector<Eigen::VectorXd> mb(layers), vb(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        mw[l] = Eigen::MatrixXd::Zero(net.w[l].rows(), net.w[l].cols());
        vw[l] = mw[l];
        mb[l] = Eigen::VectorXd::Zero(net.b[l].size());
        vb[l] = mb[l];
    }
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;

    std::vector<long> order(static_cast<std::size_t>(m));
    for (long i = 0; i < m; ++i) order[static_cast<std::size_t>(i)] = i;

    std::vector<Eigen::MatrixXd> gw;
    std::vector<Eigen::VectorXd> gb;
    const int batch = std::max(1, std::min<int>(train.batch_size, static_cast<int>(m)));

    for (int epoch = 0; epoch < train.epochs; ++epoch) {
        RandomStream shuffle(fold(fold(train.train_seed, stream_tag::kMlpShuffle),
                                  static_cast<std::uint64_t>(epoch)));
        for (long i = m - 1; i > 0; --i)
            std::swap(order[static_cast<std::size_t>(i)],
                      order[static_cast<std::size_t>(shuffle.below(static_cast<std::uint64_t>(i + 1)))]);

        for (long start = 0; start < m; start += batch) {
            const long count = std::min<long>(batch, m - start);
            Eigen::MatrixXd bx(count, d);
            Eigen::VectorXd by(count);
            for (long r = 0; r < count; ++r) {
                bx.row(r) = data.inputs.row(order[static_cast<std::size_t>(start + r)]);
                by[r] = y[order[static_cast<std::size_t>(start + r)]];
            }
            const double loss = mlp_mse_and_gradient(net, bx, by, &gw, &gb);
            if (!std::isfinite(loss)) throw Diverged("MLP training loss became non-finite");
            ++step;
            const double corr1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double corr2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t l = 0; l < layers; ++l) {
                mw[l] = beta1 * mw[l] + (1.0 - beta1) * gw[l];
                vw[l] = beta2 * vw[l] + (1.0 - beta2) * gw[l].cwiseProduct(gw[l]);
                mb[l] = beta1 * mb[l] + (1.0 - beta1) * gb[l];
                vb[l] = beta2 * vb[l] + (1.0 - beta2) * gb[l].cwiseProduct(gb[l]);
                net.w[l] -= (train.learning_rate / corr1) *
                            (mw[l].array() / ((vw[l].array() / corr2).sqrt() + eps)).matrix();
                net.b[l] -= (train.learning_rate / corr1) *
                            (mb[l].array() / ((vb[l].array() / corr2).sqrt() + eps)).matrix();
            }
            clip_weights(net);
        }
    }

    SurfaceModel::Metadata meta;
    meta.sample_size = m;
    meta.hyperparams = "L=" + std::to_string(arch.layers) + ",h=" + std::to_string(arch.width) +
                       ",lr=" + std::to_string(train.learning_rate) +
                       ",epochs=" + std::to_string(train.epochs);
    meta.fit_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return SurfaceModel(data.standardization, std::move(net), std::move(meta));
}

}  // namespace covar
