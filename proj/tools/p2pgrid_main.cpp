#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "p2pgrid/grid.hpp"
#include "p2pgrid/market.hpp"
#include "p2pgrid/sim.hpp"

namespace fs = std::filesystem;
using namespace p2pgrid;

namespace {

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", x);
    return buf;
}

int log_level() {
    const char* v = std::getenv("P2PGRID_LOG");
    if (!v) return 0;
    const std::string s(v);
    if (s == "debug") return 2;
    if (s == "info") return 1;
    return 0;
}

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "runs/run";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int episodes = -1;
    bool no_p2p = false;
    bool paper_literal = false;
    int threads = -1;
};

sim::ScenarioConfig resolve_scenario(const CommonOpts& o) {
    sim::Overrides ov;
    if (o.seed_set) ov.seed = o.seed;
    if (o.episodes >= 0) ov.episodes = o.episodes;
    if (o.no_p2p) ov.p2p = false;
    if (o.paper_literal) ov.paper_literal = true;
    if (o.threads >= 0) ov.threads = o.threads;
    return sim::load_scenario(o.config_path, ov);
}

int cmd_train(const CommonOpts& o, bool log_steps) {
    const sim::ScenarioConfig cfg = resolve_scenario(o);
    sim::write_manifest(o.out_dir, cfg, o.config_path);

    std::ofstream metrics(fs::path(o.out_dir) / "metrics.csv");
    metrics << "episode,total_cost,ma30_cost,voltage_deviation_pu,mean_price\n";
    std::ofstream steps;
    if (log_steps) {
        steps.open(fs::path(o.out_dir) / "steps.csv");
        steps << "episode,hour,sdr,price_cents_kwh,total_buy_kwh,total_sell_kwh\n";
    }

    sim::Simulation simulation(cfg);
    std::deque<double> window;
    double window_sum = 0.0;
    const int lvl = log_level();

    auto on_episode = [&](int ep, const sim::EpisodeMetrics& m) {
        window.push_back(m.total_cost);
        window_sum += m.total_cost;
        if (window.size() > 30) {
            window_sum -= window.front();
            window.pop_front();
        }
        metrics << ep << ',' << fmt(m.total_cost) << ','
                << fmt(window_sum / window.size()) << ',' << fmt(m.voltage_deviation_pu)
                << ',' << fmt(m.mean_price_cents) << '\n';
        if (lvl >= 1 && (ep % 100 == 0 || lvl >= 2))
            std::cerr << "episode " << ep << " cost=" << m.total_cost
                      << " vdev=" << m.voltage_deviation_pu << "\n";
        if (cfg.checkpoint_every > 0 && (ep + 1) % cfg.checkpoint_every == 0)
            simulation.save_checkpoints((fs::path(o.out_dir) / "agents").string());
    };
    std::function<void(const sim::StepRecord&)> on_step;
    if (log_steps)
        on_step = [&](const sim::StepRecord& r) {
            steps << r.episode << ',' << r.hour << ',' << fmt(r.sdr) << ','
                  << fmt(r.price_cents) << ',' << fmt(r.total_buy_kwh) << ','
                  << fmt(r.total_sell_kwh) << '\n';
        };

    simulation.train(on_episode, on_step);
    simulation.save_checkpoints((fs::path(o.out_dir) / "agents").string());
    return 0;
}

int cmd_evaluate(const CommonOpts& o, const std::string& checkpoint_dir, int days,
                 bool stochastic) {
    const sim::ScenarioConfig cfg = resolve_scenario(o);
    sim::Simulation simulation(cfg);
    simulation.load_checkpoints(checkpoint_dir);

    fs::create_directories(o.out_dir);
    std::ofstream prices(fs::path(o.out_dir) / "eval_prices.csv");
    prices << "day,hour,price_cents_kwh,sdr,total_buy_kwh,total_sell_kwh\n";
    std::ofstream volts(fs::path(o.out_dir) / "eval_voltages.csv");
    volts << "day,hour,bus,v_pu\n";

    const auto records = simulation.evaluate(days, stochastic);
    for (std::size_t t = 0; t < records.size(); ++t) {
        const auto& r = records[t];
        const int day = static_cast<int>(t / 24);
        prices << day << ',' << r.hour << ',' << fmt(r.price_cents) << ',' << fmt(r.sdr)
               << ',' << fmt(r.total_buy_kwh) << ',' << fmt(r.total_sell_kwh) << '\n';
        for (int b = 0; b < r.v_mag.size(); ++b)
            volts << day << ',' << r.hour << ',' << b << ',' << fmt(r.v_mag(b)) << '\n';
    }
    std::cout << "evaluated " << records.size() << " hours over " << days << " days\n";
    return 0;
}

int cmd_pf_check(const std::string& network_path) {
    const grid::NetworkModel net = grid::load_network(network_path);
    if (!net.is_connected()) {
        std::cerr << "error: network has islanded buses\n";
        return 1;
    }
    const int n = net.bus_count();
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
    const auto sol = grid::solve_power_flow(net, zero, zero);
    std::cout << "buses: " << n << "  iterations: " << sol.iterations
              << "  residual: " << fmt(sol.mismatch) << "\n";
    for (int k = 0; k < n; ++k)
        std::cout << "bus " << k << "  |V| = " << fmt(sol.v_mag(k))
                  << " pu   theta = " << fmt(sol.v_ang(k)) << " rad\n";
    if (!sol.converged) {
        std::cerr << (sol.singular_jacobian ? "error: singular Jacobian\n"
                                            : "error: power flow did not converge\n");
        return 1;
    }
    return 0;
}

int cmd_market_demo(const std::vector<double>& quantities, double fit, double ur) {
    market::Tariffs t{fit, ur};
    std::vector<market::Bid> bids;
    for (std::size_t i = 0; i < quantities.size(); ++i)
        bids.push_back({static_cast<int>(i), quantities[i]});
    const auto res = market::settle(bids, t);
    if (res.suspended)
        std::cout << "market suspended (no buyers); all sells settle at FIT = " << fmt(fit)
                  << " cents/kWh\n";
    else
        std::cout << "sdr = " << fmt(res.sdr) << "   price = " << fmt(res.price_cents)
                  << " cents/kWh\n";
    for (const auto& b : bids)
        std::cout << "agent " << b.agent_id << "  bid " << fmt(b.quantity_kwh)
                  << " kWh  ->  r^m = " << fmt(res.rewards_cents.at(b.agent_id))
                  << " cents\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Peer-to-peer energy market simulator with decentralized RL agents"};
    app.require_subcommand(1);

    CommonOpts o;
    bool log_steps = false;

    auto add_common = [&](CLI::App* cmd, bool need_config) {
        auto* c = cmd->add_option("--config", o.config_path, "scenario config file");
        if (need_config) c->required();
        cmd->add_option("--out-dir", o.out_dir, "output directory");
        cmd->add_option("--seed", o.seed, "override the scenario seed")
            ->each([&](const std::string&) { o.seed_set = true; });
        cmd->add_option("--episodes", o.episodes, "override the episode count");
        cmd->add_flag("--no-p2p", o.no_p2p, "disable the P2P market (baseline)");
        cmd->add_flag("--paper-literal", o.paper_literal,
                      "disable imbalance settlement (bid-only rewards)");
        cmd->add_option("--threads", o.threads, "worker threads (1 = serial)");
    };

    auto* train = app.add_subcommand("train", "train all agents and emit metrics");
    add_common(train, true);
    train->add_flag("--log-steps", log_steps, "also write per-step market CSV");

    auto* evaluate = app.add_subcommand("evaluate", "greedy rollout from checkpoints");
    add_common(evaluate, true);
    std::string checkpoint_dir;
    int days = 3;
    bool stochastic = false;
    evaluate->add_option("--checkpoints", checkpoint_dir, "checkpoint directory (agents/)")
        ->required();
    evaluate->add_option("--days", days, "evaluation horizon in days");
    evaluate->add_flag("--stochastic", stochastic, "sample actions instead of means");

    auto* pf = app.add_subcommand("pf-check", "solve the base case of a network file");
    std::string network_path;
    pf->add_option("network", network_path, "network JSON file")->required();

    auto* demo = app.add_subcommand("market-demo", "clear one market round from bids");
    std::vector<double> quantities;
    double fit = 5.0, ur = 14.0;
    demo->add_option("bids", quantities, "signed bid quantities in kWh")->required();
    demo->add_option("--fit", fit, "feed-in tariff, cents/kWh");
    demo->add_option("--ur", ur, "utility rate, cents/kWh");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(o, log_steps);
        if (evaluate->parsed()) return cmd_evaluate(o, checkpoint_dir, days, stochastic);
        if (pf->parsed()) return cmd_pf_check(network_path);
        if (demo->parsed()) return cmd_market_demo(quantities, fit, ur);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
