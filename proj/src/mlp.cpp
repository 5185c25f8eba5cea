#include "p2pgrid/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace p2pgrid::rl {

Eigen::MatrixXd glorot_init(int fan_in, int fan_out, Rng& rng) {
    if (fan_in < 1 || fan_out < 1) throw std::invalid_argument("fans must be >= 1");
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i)
        for (int j = 0; j < fan_in; ++j) w(i, j) = rng.uniform(-limit, limit);
    return w;
}

Mlp Mlp::create(const std::vector<int>& dims, Rng& rng) {
    if (dims.size() < 2) throw std::invalid_argument("Mlp needs at least input and output dims");
    Mlp net;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        net.weights.push_back(glorot_init(dims[l], dims[l + 1], rng));
        net.biases.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
    }
    return net;
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x, Cache* cache) const {
    if (x.size() != input_dim()) throw std::invalid_argument("Mlp input dimension mismatch");
    if (cache) {
        cache->input = x;
        cache->activations.clear();
    }
    Eigen::VectorXd h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        h = weights[l] * h + biases[l];
        if (l + 1 < weights.size()) {
            h = h.array().tanh().matrix();
            if (cache) cache->activations.push_back(h);
        }
    }
    return h;
}

Mlp::Grads Mlp::Grads::zeros_like(const Mlp& net) {
    Grads g;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        g.weights.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
        g.biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    }
    return g;
}

void Mlp::Grads::setZero() {
    for (auto& w : weights) w.setZero();
    for (auto& b : biases) b.setZero();
}

void Mlp::Grads::scale(double s) {
    for (auto& w : weights) w *= s;
    for (auto& b : biases) b *= s;
}

void Mlp::backward(const Cache& cache, const Eigen::VectorXd& upstream, Grads& out) const {
    const int last = static_cast<int>(weights.size()) - 1;
    Eigen::VectorXd delta = upstream;  // d(loss)/d(pre-activation of layer l)
    for (int l = last; l >= 0; --l) {
        const Eigen::VectorXd& in = l == 0 ? cache.input : cache.activations[l - 1];
        out.weights[l].noalias() += delta * in.transpose();
        out.biases[l] += delta;
        if (l > 0) {
            // tanh' = 1 - tanh^2, evaluated at the stored activation.
            const auto& a = cache.activations[l - 1];
            delta = ((weights[l].transpose() * delta).array() * (1.0 - a.array().square()))
                        .matrix();
        }
    }
}

bool Mlp::all_finite() const {
    for (const auto& w : weights)
        if (!w.allFinite()) return false;
    for (const auto& b : biases)
        if (!b.allFinite()) return false;
    return true;
}

void adam_step(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::Ref<const Eigen::MatrixXd>& grad,
               AdamMoments& moments, double lr, long t, const AdamConfig& cfg) {
    if (t < 1) throw std::invalid_argument("Adam step counter must be >= 1");
    if (moments.m.size() == 0) {
        moments.m = Eigen::MatrixXd::Zero(param.rows(), param.cols());
        moments.v = Eigen::MatrixXd::Zero(param.rows(), param.cols());
    }
    moments.m = cfg.beta1 * moments.m + (1.0 - cfg.beta1) * grad;
    moments.v = (cfg.beta2 * moments.v.array() + (1.0 - cfg.beta2) * grad.array().square())
                    .matrix();
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    param.array() -=
        lr * (moments.m.array() / bc1) / ((moments.v.array() / bc2).sqrt() + cfg.eps);
}

MlpAdam MlpAdam::zeros_like(const Mlp& net) {
    MlpAdam a;
    a.w_moments.resize(net.weights.size());
    a.b_moments.resize(net.biases.size());
    return a;
}

void MlpAdam::step(Mlp& net, const Mlp::Grads& grads, double lr, const AdamConfig& cfg) {
    ++t;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        adam_step(net.weights[l], grads.weights[l], w_moments[l], lr, t, cfg);
        Eigen::MatrixXd b = net.biases[l];
        adam_step(b, grads.biases[l], b_moments[l], lr, t, cfg);
        net.biases[l] = b;
    }
}

}  // namespace p2pgrid::rl
