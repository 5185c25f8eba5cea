#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "p2pgrid/mlp.hpp"
#include "p2pgrid/rng.hpp"

namespace p2pgrid::rl {

struct PpoConfig {
    double gamma = 0.999;
    double clip_eps = 0.2;
    double actor_lr = 3e-4;
    double critic_lr = 1e-3;
    int epochs_per_update = 10;
    int minibatch_size = 64;
    int steps_per_update = 240;
    double gae_lambda = -1.0;          // <= 0 disables GAE, uses return-to-go
    std::string value_target = "return";  // "return" | "reward"
    int hidden = 64;
};

struct Transition {
    Eigen::VectorXd obs;     // normalized observation
    Eigen::VectorXd action;  // pre-clamp normalized policy output
    double log_prob = 0.0;
    double reward = 0.0;
    double value = 0.0;  // critic output (denormalized) under behavior params
    bool done = false;   // 24-h episode boundary; chunks value bootstrapping
};

/// Diagonal-Gaussian policy: MLP mean head plus a state-independent learnable
/// log-std per action dimension.
struct GaussianPolicy {
    Mlp net;
    Eigen::VectorXd log_std;

    static GaussianPolicy create(int obs_dim, int act_dim, int hidden, double init_std,
                                 Rng& rng);

    std::pair<Eigen::VectorXd, double> sample(const Eigen::VectorXd& obs, Rng& rng) const;
    Eigen::VectorXd mean(const Eigen::VectorXd& obs) const;
    double log_prob(const Eigen::VectorXd& obs, const Eigen::VectorXd& action) const;
};

/// Discounted return-to-go per 24-step chunk (bootstrapping the critic value
/// of the state after each chunk boundary) and batch-normalized advantages.
/// values[t] must hold V(s_t); bootstrap_value is V of the state following the
/// final transition.
std::pair<std::vector<double>, std::vector<double>> compute_advantages(
    const std::vector<Transition>& traj, const PpoConfig& cfg, double bootstrap_value);

/// One agent's PPO learner: actor + critic + optimizers + rollout buffer.
class Learner {
public:
    Learner(int obs_dim, int act_dim, const PpoConfig& cfg, double init_std,
            std::uint64_t master_seed, const std::string& name);

    const GaussianPolicy& actor() const { return actor_; }
    const Mlp& critic() const { return critic_; }
    const PpoConfig& config() const { return cfg_; }

    double value(const Eigen::VectorXd& obs) const;  // denormalized critic output
    std::pair<Eigen::VectorXd, double> act(const Eigen::VectorXd& obs, Rng& rng) const {
        return actor_.sample(obs, rng);
    }
    Eigen::VectorXd act_mean(const Eigen::VectorXd& obs) const { return actor_.mean(obs); }

    void record(Transition t) { buffer_.push_back(std::move(t)); }
    bool ready() const { return static_cast<int>(buffer_.size()) >= cfg_.steps_per_update; }
    std::size_t buffered() const { return buffer_.size(); }

    /// Runs the clipped-surrogate actor update and the value regression on the
    /// buffered batch, then clears the buffer. bootstrap_obs is the normalized
    /// observation following the last buffered transition (ignored if that
    /// transition is a chunk boundary).
    void update(const Eigen::VectorXd& bootstrap_obs);

    long updates_done() const { return updates_done_; }

    std::string save_checkpoint() const;          // JSON blob
    void load_checkpoint(const std::string& blob);

private:
    void actor_update(const std::vector<double>& advantages);
    void critic_update(const std::vector<double>& targets);

    PpoConfig cfg_;
    GaussianPolicy actor_;
    Mlp critic_;
    MlpAdam actor_opt_;
    AdamMoments log_std_opt_;
    long log_std_t_ = 0;
    MlpAdam critic_opt_;
    Rng shuffle_rng_;
    std::vector<Transition> buffer_;
    long updates_done_ = 0;

    // Running return statistics; the critic regresses normalized targets.
    long ret_count_ = 0;
    double ret_mean_ = 0.0;
    double ret_m2_ = 0.0;
    double ret_std() const;
};

}  // namespace p2pgrid::rl
