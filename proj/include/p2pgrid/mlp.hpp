#pragma once

#include <Eigen/Dense>
#include <vector>

#include "p2pgrid/rng.hpp"

namespace p2pgrid::rl {

/// Glorot-uniform weight matrix (rows = fan_out, cols = fan_in); entries i.i.d.
/// uniform on [-L, L] with L = sqrt(6 / (fan_in + fan_out)).
Eigen::MatrixXd glorot_init(int fan_in, int fan_out, Rng& rng);

/// Fully connected net, tanh hidden activations, linear output layer.
struct Mlp {
    std::vector<Eigen::MatrixXd> weights;  // weights[l]: dims[l+1] x dims[l]
    std::vector<Eigen::VectorXd> biases;   // zero-initialized

    static Mlp create(const std::vector<int>& dims, Rng& rng);

    int input_dim() const { return static_cast<int>(weights.front().cols()); }
    int output_dim() const { return static_cast<int>(weights.back().rows()); }
    std::size_t layer_count() const { return weights.size(); }

    struct Cache {
        Eigen::VectorXd input;
        std::vector<Eigen::VectorXd> activations;  // post-tanh per hidden layer
    };

    Eigen::VectorXd forward(const Eigen::VectorXd& x, Cache* cache = nullptr) const;

    struct Grads {
        std::vector<Eigen::MatrixXd> weights;
        std::vector<Eigen::VectorXd> biases;

        static Grads zeros_like(const Mlp& net);
        void setZero();
        void scale(double s);
    };

    /// Accumulates exact reverse-mode gradients of forward() into `out` for the
    /// given upstream gradient d(loss)/d(output).
    void backward(const Cache& cache, const Eigen::VectorXd& upstream, Grads& out) const;

    bool all_finite() const;
};

/// Bias-corrected Adam moments for one tensor.
struct AdamMoments {
    Eigen::MatrixXd m;
    Eigen::MatrixXd v;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One Adam step (t is 1-based) on a single tensor.
void adam_step(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::Ref<const Eigen::MatrixXd>& grad,
               AdamMoments& moments, double lr, long t, const AdamConfig& cfg = {});

/// Adam state covering every tensor of an Mlp plus its shared step counter.
struct MlpAdam {
    std::vector<AdamMoments> w_moments;
    std::vector<AdamMoments> b_moments;
    long t = 0;

    static MlpAdam zeros_like(const Mlp& net);
    /// Descends along `grads` (gradient of a loss to minimize).
    void step(Mlp& net, const Mlp::Grads& grads, double lr, const AdamConfig& cfg = {});
};

}  // namespace p2pgrid::rl
