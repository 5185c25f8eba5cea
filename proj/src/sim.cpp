#include "p2pgrid/sim.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace p2pgrid::sim {

namespace fs = std::filesystem;

std::vector<double> moving_average(const std::vector<double>& series, int window) {
    if (window < 1) throw std::invalid_argument("window must be >= 1");
    std::vector<double> out;
    out.reserve(series.size());
    double running = 0.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        running += series[i];
        if (i >= static_cast<std::size_t>(window)) running -= series[i - window];
        const int span = std::min<int>(window, static_cast<int>(i) + 1);
        out.push_back(running / span);
    }
    return out;
}

Eigen::VectorXd normalized_observation(const prosumer::Observation& obs,
                                       const prosumer::ProsumerConfig& cfg,
                                       const market::Tariffs& tariffs) {
    auto norm = [](double x, double lo, double hi) {
        return (x - 0.5 * (lo + hi)) / (0.5 * (hi - lo));
    };
    const double load_hi = std::max(1.0, 1.5 * cfg.peak_load_kw);
    Eigen::VectorXd v(prosumer::Observation::kDim);
    v << norm(obs.hour, 0.0, 23.0), norm(obs.outside_temp_c, 15.0, 40.0),
        norm(obs.pv_kw, 0.0, std::max(1.0, cfg.pv_capacity_kw)),
        norm(obs.load_p_kw, 0.0, load_hi), norm(obs.load_q_kvar, 0.0, 0.5 * load_hi),
        norm(obs.v_mag_pu, 0.9, 1.1), norm(obs.soc_kwh, 0.0, cfg.battery_capacity_kwh),
        norm(obs.price_lag24_cents, tariffs.fit_cents, tariffs.ur_cents);
    return v;
}

Simulation::Simulation(const ScenarioConfig& cfg)
    : cfg_(cfg),
      net_(grid::load_network(cfg.network_path)),
      profiles_(prosumer::ExogenousProfiles::load(cfg.profiles_path)),
      rng_price0_(cfg.seed, "price0") {
    const int slack = net_.slack_bus();
    std::vector<bool> used(net_.bus_count(), false);
    for (const auto& pc : cfg_.prosumers) {
        if (pc.bus_id < 0 || pc.bus_id >= net_.bus_count() || pc.bus_id == slack)
            throw ConfigError("prosumers.bus",
                              "bus " + std::to_string(pc.bus_id) + " is not a load bus");
        if (used[pc.bus_id]) throw ConfigError("prosumers.bus", "duplicate bus");
        used[pc.bus_id] = true;
    }
    if (static_cast<int>(cfg_.prosumers.size()) != net_.bus_count() - 1)
        throw ConfigError("prosumers", "need exactly one prosumer per non-slack bus");

    for (std::size_t i = 0; i < cfg_.prosumers.size(); ++i) {
        AgentSlot slot;
        slot.cfg = cfg_.prosumers[i];
        slot.state.soc_kwh = 0.0;
        slot.state.zone_temps_c.assign(slot.cfg.zones, 24.0);
        const std::string name = "agent" + std::to_string(i);
        slot.learner = std::make_unique<rl::Learner>(prosumer::Observation::kDim,
                                                     slot.cfg.action_dim(), cfg_.ppo, 0.5,
                                                     cfg_.seed, name);
        slot.rng_exo = std::make_unique<Rng>(cfg_.seed, name + "/exo");
        slot.rng_policy = std::make_unique<Rng>(cfg_.seed, name + "/policy");
        agents_.push_back(std::move(slot));
    }
    last_v_ = Eigen::VectorXd::Ones(net_.bus_count());
}

StepRecord Simulation::step(bool learning, bool stochastic) {
    const int n = agent_count();
    const int hour = static_cast<int>(global_t_ % 24);
    const bool parallel = cfg_.threads != 1;

    // The first-day price fallback is one shared draw per step.
    const double fallback_price =
        global_t_ < 24
            ? rng_price0_.uniform(cfg_.tariffs.fit_cents, cfg_.tariffs.ur_cents)
            : 0.0;

    std::vector<prosumer::ExogenousSample> exo(n);
    std::vector<Eigen::VectorXd> obs_norm(n);
#pragma omp parallel for schedule(static) if (parallel)
    for (int i = 0; i < n; ++i) {
        auto& a = agents_[i];
        exo[i] = prosumer::sample_exogenous(hour, profiles_, a.cfg.peak_load_kw,
                                            a.cfg.pv_capacity_kw, a.cfg.power_factor,
                                            *a.rng_exo);
        const double lag = global_t_ < 24 ? fallback_price
                                          : price_history_[global_t_ - 24];
        const auto obs = prosumer::assemble_observation(
            hour, exo[i], last_v_(a.cfg.bus_id), a.state.soc_kwh, lag);
        obs_norm[i] = normalized_observation(obs, a.cfg, cfg_.tariffs);
    }

    // A full rollout buffer is flushed here, where the bootstrap observation
    // for the buffer's final transition is known.
    if (learning) {
#pragma omp parallel for schedule(static) if (parallel)
        for (int i = 0; i < n; ++i)
            if (agents_[i].learner->ready()) agents_[i].learner->update(obs_norm[i]);
    }

    std::vector<Eigen::VectorXd> a_norm(n);
    std::vector<double> log_probs(n, 0.0);
    std::vector<prosumer::Action> actions(n);
    std::vector<double> q_actual(n), soc_next(n), grid_kwh(n), hvac_kw(n);
    std::vector<std::vector<double>> temps_next(n);
    std::vector<double> p_kw(n), q_kvar(n);
#pragma omp parallel for schedule(static) if (parallel)
    for (int i = 0; i < n; ++i) {
        auto& a = agents_[i];
        if (stochastic) {
            auto [act, lp] = a.learner->act(obs_norm[i], *a.rng_policy);
            a_norm[i] = std::move(act);
            log_probs[i] = lp;
        } else {
            a_norm[i] = a.learner->act_mean(obs_norm[i]);
        }
        actions[i] = prosumer::action_from_normalized(a_norm[i], a.cfg);
        q_actual[i] = prosumer::inverter_limit(exo[i].pv_kw, actions[i].reactive_kvar,
                                               a.cfg.inverter_s_max_kva);
        std::tie(soc_next[i], grid_kwh[i]) =
            prosumer::battery_step(a.state.soc_kwh, actions[i].storage_kwh, a.cfg);
        std::tie(temps_next[i], hvac_kw[i]) =
            prosumer::hvac_step(a.state.zone_temps_c, actions[i].flow_kgs,
                                actions[i].discharge_temp_c, exo[i].outside_temp_c, a.cfg);
        std::tie(p_kw[i], q_kvar[i]) =
            prosumer::net_injection(exo[i].pv_kw, exo[i].load_p_kw, exo[i].load_q_kvar,
                                    hvac_kw[i], grid_kwh[i], q_actual[i]);
    }

    // Market clearing: one synchronization barrier per hour.
    std::vector<market::Bid> bids(n);
    for (int i = 0; i < n; ++i) bids[i] = {i, actions[i].bid_kwh};
    const market::ClearingResult clearing =
        cfg_.p2p_enabled ? market::settle(bids, cfg_.tariffs)
                         : market::settle_no_p2p(bids, cfg_.tariffs);

    // One power-flow solve per hour from the realized injections.
    Eigen::VectorXd p_pu = Eigen::VectorXd::Zero(net_.bus_count());
    Eigen::VectorXd q_pu = Eigen::VectorXd::Zero(net_.bus_count());
    for (int i = 0; i < n; ++i) {
        p_pu(agents_[i].cfg.bus_id) = p_kw[i] / net_.s_base_kva;
        q_pu(agents_[i].cfg.bus_id) = q_kvar[i] / net_.s_base_kva;
    }
    const grid::PowerFlowSolution sol = grid::solve_power_flow(net_, p_pu, q_pu);

    StepRecord rec;
    rec.episode = episode_index_;
    rec.hour = hour;
    rec.sdr = clearing.sdr;
    rec.price_cents = clearing.price_cents;
    rec.pf_converged = sol.converged;
    for (const auto& b : bids) {
        if (b.quantity_kwh >= 0.0)
            rec.total_sell_kwh += b.quantity_kwh;
        else
            rec.total_buy_kwh += -b.quantity_kwh;
    }

    double r_v;
    if (sol.converged) {
        last_v_ = sol.v_mag;
        r_v = grid::voltage_violation(sol, cfg_.v_lo, cfg_.v_hi, cfg_.lambda).second;
    } else {
        // Solver failure counts as a maximal violation; last_v_ keeps the
        // previous converged magnitudes for the next observations.
        r_v = grid::max_violation_penalty(net_.bus_count(), cfg_.v_lo, cfg_.v_hi,
                                          cfg_.lambda);
    }
    rec.r_v = r_v;
    rec.v_mag = last_v_;

    rec.bids_kwh.resize(n);
    rec.r_comfort.resize(n);
    rec.r_market.resize(n);
    rec.r_total.resize(n);
    const bool done = hour == 23;
    for (int i = 0; i < n; ++i) {
        auto& a = agents_[i];
        double r_m = clearing.rewards_cents.at(i);
        if (cfg_.imbalance_enabled)
            r_m += market::settle_imbalance(actions[i].bid_kwh, p_kw[i], cfg_.tariffs);
        const double r_c = prosumer::comfort_reward(temps_next[i], a.cfg);
        const double total = r_c + r_m + r_v / n;
        rec.bids_kwh[i] = actions[i].bid_kwh;
        rec.r_comfort[i] = r_c;
        rec.r_market[i] = r_m;
        rec.r_total[i] = total;
        if (learning) {
            rl::Transition tr;
            tr.obs = obs_norm[i];
            tr.action = a_norm[i];
            tr.log_prob = log_probs[i];
            tr.reward = total;
            tr.value = a.learner->value(obs_norm[i]);
            tr.done = done;
            a.learner->record(std::move(tr));
        }
        a.state.soc_kwh = soc_next[i];
        a.state.zone_temps_c = temps_next[i];
    }

    price_history_.push_back(clearing.price_cents);
    ++global_t_;
    return rec;
}

EpisodeMetrics Simulation::run_episode(bool learning, bool stochastic,
                                       const std::function<void(const StepRecord&)>& on_step) {
    EpisodeMetrics m;
    double price_sum = 0.0;
    for (int h = 0; h < 24; ++h) {
        const double discount = std::pow(cfg_.ppo.gamma, static_cast<double>(global_t_));
        const StepRecord rec = step(learning, stochastic);
        if (on_step) on_step(rec);
        double reward_sum = 0.0;
        for (double r : rec.r_total) reward_sum += r;
        m.total_cost += -discount * reward_sum;  // cost = negated reward
        for (int k = 0; k < rec.v_mag.size(); ++k) {
            const double v = rec.v_mag(k);
            m.voltage_deviation_pu +=
                std::max(0.0, v - cfg_.v_hi) + std::max(0.0, cfg_.v_lo - v);
        }
        m.prices_cents[h] = rec.price_cents;
        price_sum += rec.price_cents;
    }
    m.mean_price_cents = price_sum / 24.0;
    ++episode_index_;
    return m;
}

std::vector<EpisodeMetrics> Simulation::train(
    const std::function<void(int, const EpisodeMetrics&)>& on_episode,
    const std::function<void(const StepRecord&)>& on_step) {
    std::vector<EpisodeMetrics> log;
    log.reserve(cfg_.n_episodes);
    for (int ep = 0; ep < cfg_.n_episodes; ++ep) {
        const EpisodeMetrics m = run_episode(true, true, on_step);
        if (!std::isfinite(m.total_cost) || !std::isfinite(m.voltage_deviation_pu))
            throw std::runtime_error("non-finite metric at episode " + std::to_string(ep));
        if (on_episode) on_episode(ep, m);
        log.push_back(m);
    }
    return log;
}

std::vector<StepRecord> Simulation::evaluate(int n_days, bool stochastic) {
    std::vector<StepRecord> records;
    records.reserve(24 * n_days);
    for (int t = 0; t < 24 * n_days; ++t) records.push_back(step(false, stochastic));
    return records;
}

void Simulation::save_checkpoints(const std::string& dir) const {
    for (int i = 0; i < agent_count(); ++i) {
        const fs::path agent_dir = fs::path(dir) / ("agent_" + std::to_string(i));
        fs::create_directories(agent_dir);
        const fs::path file = agent_dir / ("step_" + std::to_string(global_t_) + ".json");
        std::ofstream out(file);
        if (!out) throw std::runtime_error("cannot write checkpoint: " + file.string());
        nlohmann::json j = nlohmann::json::parse(agents_[i].learner->save_checkpoint());
        j["rng_policy"] = agents_[i].rng_policy->serialize();
        j["rng_exo"] = agents_[i].rng_exo->serialize();
        out << j.dump();
    }
}

void Simulation::load_checkpoints(const std::string& dir) {
    for (int i = 0; i < agent_count(); ++i) {
        const fs::path agent_dir = fs::path(dir) / ("agent_" + std::to_string(i));
        if (!fs::is_directory(agent_dir))
            throw std::runtime_error("missing checkpoint directory: " + agent_dir.string());
        // Pick the latest step_<n>.json.
        long best = -1;
        fs::path best_path;
        for (const auto& e : fs::directory_iterator(agent_dir)) {
            const std::string name = e.path().filename().string();
            if (name.rfind("step_", 0) == 0 && e.path().extension() == ".json") {
                const long s = std::stol(name.substr(5, name.size() - 10));
                if (s > best) {
                    best = s;
                    best_path = e.path();
                }
            }
        }
        if (best < 0)
            throw std::runtime_error("no checkpoint found in " + agent_dir.string());
        std::ifstream in(best_path);
        std::ostringstream buf;
        buf << in.rdbuf();
        nlohmann::json j = nlohmann::json::parse(buf.str());
        agents_[i].learner->load_checkpoint(buf.str());
        if (j.contains("rng_policy"))
            agents_[i].rng_policy->deserialize(j.at("rng_policy").get<std::string>());
        if (j.contains("rng_exo"))
            agents_[i].rng_exo->deserialize(j.at("rng_exo").get<std::string>());
    }
}

void write_manifest(const std::string& out_dir, const ScenarioConfig& cfg,
                    const std::string& config_path) {
    fs::create_directories(out_dir);
    nlohmann::json j;
    j["artifact_version"] = "0.1.0";
    j["seed"] = cfg.seed;
    j["config_path"] = config_path;
    j["config_hash"] = file_hash_hex(config_path);
    j["out_dir"] = out_dir;
    j["scenario"] = nlohmann::json::parse(scenario_to_json(cfg));
    std::ofstream out(fs::path(out_dir) / "manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest in " + out_dir);
    out << j.dump(2) << "\n";
}

}  // namespace p2pgrid::sim
