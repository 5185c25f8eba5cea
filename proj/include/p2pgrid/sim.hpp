#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "p2pgrid/grid.hpp"
#include "p2pgrid/market.hpp"
#include "p2pgrid/ppo.hpp"
#include "p2pgrid/prosumer.hpp"
#include "p2pgrid/scenario.hpp"

namespace p2pgrid::sim {

struct StepRecord {
    int episode = 0;
    int hour = 0;
    double sdr = 0.0;
    double price_cents = 0.0;
    double total_buy_kwh = 0.0;
    double total_sell_kwh = 0.0;
    bool pf_converged = true;
    double r_v = 0.0;  // system voltage penalty
    std::vector<double> bids_kwh;
    std::vector<double> r_comfort;
    std::vector<double> r_market;
    std::vector<double> r_total;
    Eigen::VectorXd v_mag;
};

struct EpisodeMetrics {
    double total_cost = 0.0;            // discounted by the global step index
    double voltage_deviation_pu = 0.0;  // undiscounted band-deviation sum
    double mean_price_cents = 0.0;
    std::array<double, 24> prices_cents{};
};

/// Trailing moving average: entry i is the mean of the last min(window, i+1) values.
std::vector<double> moving_average(const std::vector<double>& series, int window);

/// Fixed affine normalization of the 8-component observation onto roughly
/// [-1, 1] per component, from documented config ranges.
Eigen::VectorXd normalized_observation(const prosumer::Observation& obs,
                                       const prosumer::ProsumerConfig& cfg,
                                       const market::Tariffs& tariffs);

/// The coupled market / power-flow / learning loop over all agents.
class Simulation {
public:
    explicit Simulation(const ScenarioConfig& cfg);

    StepRecord step(bool learning, bool stochastic);
    EpisodeMetrics run_episode(bool learning, bool stochastic,
                               const std::function<void(const StepRecord&)>& on_step = {});

    /// Runs cfg.n_episodes of training. The optional callbacks observe each
    /// episode's metrics and each step record (for --log-steps).
    std::vector<EpisodeMetrics> train(
        const std::function<void(int, const EpisodeMetrics&)>& on_episode = {},
        const std::function<void(const StepRecord&)>& on_step = {});

    /// Greedy (mean-action) rollout with learning disabled.
    std::vector<StepRecord> evaluate(int n_days, bool stochastic = false);

    void save_checkpoints(const std::string& dir) const;
    void load_checkpoints(const std::string& dir);

    long global_step() const { return global_t_; }
    int agent_count() const { return static_cast<int>(agents_.size()); }
    const grid::NetworkModel& network() const { return net_; }
    const rl::Learner& learner(int i) const { return *agents_[i].learner; }
    const prosumer::ProsumerState& state(int i) const { return agents_[i].state; }
    const ScenarioConfig& config() const { return cfg_; }

private:
    struct AgentSlot {
        prosumer::ProsumerConfig cfg;
        prosumer::ProsumerState state;
        std::unique_ptr<rl::Learner> learner;
        std::unique_ptr<Rng> rng_exo;
        std::unique_ptr<Rng> rng_policy;
    };

    ScenarioConfig cfg_;
    grid::NetworkModel net_;
    prosumer::ExogenousProfiles profiles_;
    std::vector<AgentSlot> agents_;
    Rng rng_price0_;
    std::vector<double> price_history_;
    Eigen::VectorXd last_v_;
    long global_t_ = 0;
    int episode_index_ = 0;
};

/// Writes manifest.json (resolved scenario, config hash, seed, version) into
/// out_dir before any computation.
void write_manifest(const std::string& out_dir, const ScenarioConfig& cfg,
                    const std::string& config_path);

}  // namespace p2pgrid::sim
