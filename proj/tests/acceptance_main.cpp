// Acceptance suite: runs every acceptance criterion end to end and prints one
// PASS/FAIL line per criterion. Exit code = number of failed criteria.
//
// Criteria 5-7 train 5 seeds of the full 12-agent scenario with and without
// the P2P market (10 runs x 2500 episodes); expect ~20 minutes on one core.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "gauss_seidel_oracle.hpp"
#include "p2pgrid/grid.hpp"
#include "p2pgrid/market.hpp"
#include "p2pgrid/mlp.hpp"
#include "p2pgrid/ppo.hpp"
#include "p2pgrid/prosumer.hpp"
#include "p2pgrid/sim.hpp"

using namespace p2pgrid;

namespace {

int failures = 0;

void report(int criterion, const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << criterion << " (" << name
              << "): " << detail << "\n";
    std::cout.flush();
    if (!ok) ++failures;
}

double mean_of(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
    return std::accumulate(v.begin() + lo, v.begin() + hi, 0.0) / (hi - lo);
}

// ---------------------------------------------------------------- criterion 1

void criterion1_market() {
    const market::Tariffs t{5.0, 14.0};
    bool ok = true;
    std::string detail;

    const auto res = market::settle({{0, 3.0}, {1, -4.0}, {2, -2.0}}, t);
    ok &= std::abs(res.sdr - 0.5) < 1e-12;
    ok &= std::abs(res.price_cents - 9.5) < 1e-12;
    ok &= std::abs(res.rewards_cents.at(0) - 28.5) < 1e-12;
    ok &= std::abs(res.rewards_cents.at(1) + 47.0) < 1e-12;
    ok &= std::abs(res.rewards_cents.at(2) + 23.5) < 1e-12;

    const auto over = market::settle({{0, 10.0}, {1, -5.0}}, t);
    ok &= std::abs(over.sdr - 2.0) < 1e-12;
    ok &= std::abs(over.price_cents - 5.0) < 1e-12;
    ok &= std::abs(over.rewards_cents.at(0) - 50.0) < 1e-12;
    ok &= std::abs(over.rewards_cents.at(1) + 25.0) < 1e-12;

    ok &= std::abs(market::clearing_price(0.0, t) - 14.0) < 1e-12;
    ok &= std::abs(market::clearing_price(1.0, t) - 5.0) < 1e-12;

    report(1, "market exactness", ok,
           ok ? "all clearing/settlement examples reproduce to 1e-12"
              : "a settlement example deviates beyond 1e-12");
}

// ---------------------------------------------------------------- criterion 2

void criterion2_power_flow() {
    bool ok = true;
    double worst = 0.0;

    Rng rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 2 + rng.uniform_int(3);
        std::vector<grid::BusSpec> buses;
        for (int i = 0; i < n; ++i)
            buses.push_back({i, i == 0 ? grid::BusKind::Slack : grid::BusKind::Load});
        std::vector<grid::BranchSpec> branches;
        for (int k = 1; k < n; ++k)
            branches.push_back({rng.uniform_int(k), k, rng.uniform(0.005, 0.05),
                                rng.uniform(0.02, 0.15)});
        const auto net = grid::build_admittance(buses, branches);
        Eigen::VectorXd p = Eigen::VectorXd::Zero(n), q = Eigen::VectorXd::Zero(n);
        for (int k = 1; k < n; ++k) {
            p(k) = rng.uniform(-0.3, 0.1);
            q(k) = rng.uniform(-0.1, 0.1);
        }
        const auto nr = grid::solve_power_flow(net, p, q, 1.0, 1e-10, 30);
        const auto gs = testing::gauss_seidel_solve(net, p, q);
        ok &= nr.converged && gs.converged;
        for (int k = 0; k < n; ++k) {
            worst = std::max(worst, std::abs(nr.v_mag(k) - gs.v_mag(k)));
            worst = std::max(worst, std::abs(nr.v_ang(k) - gs.v_ang(k)));
        }
    }
    ok &= worst < 1e-6;

    const auto net13 =
        grid::load_network(std::string(P2PGRID_DATA_DIR) + "/ieee13_balanced.json");
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(net13.bus_count());
    const auto base = grid::solve_power_flow(net13, zero, zero, 1.0, 1e-8, 30);
    ok &= base.converged && base.iterations <= 30 && base.mismatch < 1e-8;

    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "oracle max deviation %.3g pu; 13-bus base case %d iterations, "
                  "residual %.3g",
                  worst, base.iterations, base.mismatch);
    report(2, "power-flow correctness", ok, buf);
}

// ---------------------------------------------------------------- criterion 3

void criterion3_dynamics() {
    const prosumer::ProsumerConfig cfg;
    bool ok = true;

    ok &= std::abs(prosumer::battery_step(10.0, 2.0, cfg).first - 11.9) < 1e-9;
    ok &= std::abs(prosumer::battery_step(10.0, -2.0, cfg).first - (10.0 - 2.0 / 0.9)) < 1e-9;
    ok &= std::abs(prosumer::battery_step(49.5, 2.0, cfg).first - 50.0) < 1e-9;

    ok &= prosumer::comfort_reward({22.0, 25.0, 28.0}, cfg) == 0.0;
    ok &= std::abs(prosumer::comfort_reward({30.0}, cfg) + 4.0) < 1e-9;
    ok &= std::abs(prosumer::comfort_reward({20.0}, cfg) + 4.0) < 1e-9;

    grid::PowerFlowSolution sol;
    sol.converged = true;
    sol.v_ang = Eigen::VectorXd::Zero(4);
    sol.v_mag = (Eigen::VectorXd(4) << 0.96, 1.0, 1.02, 1.04).finished();
    ok &= grid::voltage_violation(sol, 0.96, 1.04, 1e4).second == 0.0;
    sol.v_mag = (Eigen::VectorXd(4) << 1.0, 1.05, 1.0, 1.0).finished();
    ok &= std::abs(grid::voltage_violation(sol, 0.96, 1.04, 1e4).second + 100.0) < 1e-9;
    sol.v_mag = (Eigen::VectorXd(4) << 1.0, 0.95, 1.0, 1.0).finished();
    ok &= std::abs(grid::voltage_violation(sol, 0.96, 1.04, 1e4).second + 100.0) < 1e-9;

    ok &= std::abs(prosumer::inverter_limit(30.0, 50.0, 50.0) - 40.0) < 1e-9;

    report(3, "dynamics exactness", ok,
           ok ? "battery, comfort, penalty and inverter examples exact to 1e-9"
              : "a dynamics example deviates beyond 1e-9");
}

// ---------------------------------------------------------------- criterion 4

void criterion4_gradients() {
    Rng rng(11);
    int instances = 0;
    double worst = 0.0;
    const double h = 1e-5;
    const auto rel = [](double a, double b) {
        return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
    };

    // Network gradients against central finite differences of a linear probe.
    for (int trial = 0; trial < 60; ++trial) {
        auto net = rl::Mlp::create({3, 5, 4, 2}, rng);
        for (auto& b : net.biases) b = 0.1 * Eigen::VectorXd::Random(b.size());
        const Eigen::VectorXd x = Eigen::VectorXd::Random(3);
        const Eigen::VectorXd up = Eigen::VectorXd::Random(2);
        rl::Mlp::Cache cache;
        net.forward(x, &cache);
        auto grads = rl::Mlp::Grads::zeros_like(net);
        net.backward(cache, up, grads);
        for (std::size_t l = 0; l < net.layer_count(); ++l)
            for (int i = 0; i < net.weights[l].rows(); ++i)
                for (int j = 0; j < net.weights[l].cols(); ++j) {
                    rl::Mlp m = net;
                    m.weights[l](i, j) += h;
                    const double fu = up.dot(m.forward(x));
                    m.weights[l](i, j) -= 2 * h;
                    const double fd = up.dot(m.forward(x));
                    worst = std::max(worst, rel(grads.weights[l](i, j), (fu - fd) / (2 * h)));
                }
        ++instances;
    }

    // Policy log-density gradients w.r.t. mean-net parameters and log-std.
    for (int trial = 0; trial < 60; ++trial) {
        auto pol = rl::GaussianPolicy::create(3, 2, 5, 0.7, rng);
        const Eigen::VectorXd obs = Eigen::VectorXd::Random(3);
        const Eigen::VectorXd a = pol.mean(obs) + Eigen::VectorXd::Random(2);
        const Eigen::VectorXd mu = pol.mean(obs);
        const Eigen::VectorXd var = (2.0 * pol.log_std).array().exp();
        rl::Mlp::Cache cache;
        pol.net.forward(obs, &cache);
        auto grads = rl::Mlp::Grads::zeros_like(pol.net);
        pol.net.backward(cache, (a - mu).cwiseQuotient(var), grads);
        for (std::size_t l = 0; l < pol.net.layer_count(); ++l)
            for (int i = 0; i < pol.net.weights[l].rows(); ++i)
                for (int j = 0; j < pol.net.weights[l].cols(); ++j) {
                    auto p = pol;
                    p.net.weights[l](i, j) += h;
                    const double fu = p.log_prob(obs, a);
                    p.net.weights[l](i, j) -= 2 * h;
                    const double fd = p.log_prob(obs, a);
                    worst = std::max(worst, rel(grads.weights[l](i, j), (fu - fd) / (2 * h)));
                }
        for (int d = 0; d < 2; ++d) {
            const double analytic = (a(d) - mu(d)) * (a(d) - mu(d)) / var(d) - 1.0;
            auto p = pol;
            p.log_std(d) += h;
            const double fu = p.log_prob(obs, a);
            p.log_std(d) -= 2 * h;
            const double fd = p.log_prob(obs, a);
            worst = std::max(worst, rel(analytic, (fu - fd) / (2 * h)));
        }
        ++instances;
    }

    char buf[120];
    std::snprintf(buf, sizeof buf, "%d random instances, worst relative error %.3g",
                  instances, worst);
    report(4, "gradient suite", instances >= 100 && worst < 1e-4, buf);
}

// ------------------------------------------------------------- criteria 5-7

struct SeedRun {
    std::vector<double> cost_p2p, cost_base;
    std::vector<double> dev_p2p;
};

void criteria_training() {
    const std::string config = std::string(P2PGRID_DATA_DIR) + "/scenario_default.json";
    const int n_seeds = 5;
    const int episodes = 2500;  // criterion asks for >= 1500; the P2P advantage
                                // needs the longer tail to dominate reliably

    std::vector<SeedRun> runs(n_seeds);
    std::unique_ptr<sim::Simulation> seed1_p2p;  // kept for criterion 7

    for (int s = 0; s < n_seeds; ++s) {
        for (const bool p2p : {true, false}) {
            sim::Overrides ov;
            ov.seed = static_cast<std::uint64_t>(s + 1);
            ov.episodes = episodes;
            ov.p2p = p2p;
            ov.threads = 0;  // OpenMP agent-parallel path (bit-identical to serial)
            auto cfg = sim::load_scenario(config, ov);
            auto simulation = std::make_unique<sim::Simulation>(cfg);
            const auto log = simulation->train();
            for (const auto& m : log) {
                (p2p ? runs[s].cost_p2p : runs[s].cost_base).push_back(m.total_cost);
                if (p2p) runs[s].dev_p2p.push_back(m.voltage_deviation_pu);
            }
            std::cout << "  trained seed " << (s + 1) << (p2p ? " p2p" : " no-p2p")
                      << ": final-100 mean cost "
                      << mean_of(p2p ? runs[s].cost_p2p : runs[s].cost_base,
                                 episodes - 100, episodes)
                      << "\n";
            std::cout.flush();
            if (s == 0 && p2p) seed1_p2p = std::move(simulation);
        }
    }

    // Criterion 5: final-100 cost comparison + convergence of both curves.
    int cheaper = 0;
    bool converged = true;
    const std::size_t tail_lo = episodes - episodes / 10;
    for (int s = 0; s < n_seeds; ++s) {
        const double c_p2p = mean_of(runs[s].cost_p2p, episodes - 100, episodes);
        const double c_base = mean_of(runs[s].cost_base, episodes - 100, episodes);
        if (c_p2p < c_base) ++cheaper;
        for (const auto* series : {&runs[s].cost_p2p, &runs[s].cost_base}) {
            const auto ma = sim::moving_average(*series, 30);
            converged &= mean_of(ma, tail_lo, episodes) < mean_of(ma, 0, episodes / 10);
        }
    }
    {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "p2p cheaper than no-p2p in %d/5 seeds (need >= 4); "
                      "cost curves converged in all runs: %s",
                      cheaper, converged ? "yes" : "no");
        report(5, "cost comparison and convergence", cheaper >= 4 && converged, buf);
    }

    // Criterion 6: voltage deviation shrinks to < 10% of its initial level.
    int shrunk = 0;
    double worst_ratio = 0.0;
    for (int s = 0; s < n_seeds; ++s) {
        const double head = mean_of(runs[s].dev_p2p, 0, episodes / 10);
        const double tail = mean_of(runs[s].dev_p2p, tail_lo, episodes);
        const double ratio = head > 0.0 ? tail / head : 0.0;
        worst_ratio = std::max(worst_ratio, ratio);
        if (ratio < 0.10) ++shrunk;
    }
    {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "final/initial deviation ratio < 0.10 in %d/5 seeds "
                      "(worst ratio %.3f)",
                      shrunk, worst_ratio);
        report(6, "voltage deviation convergence", shrunk >= 4, buf);
    }

    // Criterion 7: greedy 3-day evaluation after two burn-in days (batteries
    // start empty and reach their steady daily cycle on day 3). Night price
    // must sit at ur up to a small tolerance for residual battery arbitrage;
    // noon price must drop well below ur.
    const auto profiles = prosumer::ExogenousProfiles::load(
        std::string(P2PGRID_DATA_DIR) + "/profiles_default.json");
    const double ur = seed1_p2p->config().tariffs.ur_cents;
    const double night_tol = 1.0;  // cents; residual night sells
    const double noon_drop = 2.0;  // cents below ur

    const auto recs = seed1_p2p->evaluate(5);
    bool night_ok = true;
    double night_min = ur;
    int noon_days = 0;
    for (int day = 2; day <= 4; ++day) {
        bool noon_dip = false;
        for (int h = 0; h < 24; ++h) {
            const auto& r = recs[24 * day + h];
            if (profiles.pv_coeff[h] == 0.0) {
                night_ok &= r.price_cents >= ur - night_tol;
                night_min = std::min(night_min, r.price_cents);
            }
            if (h >= 10 && h <= 14 && r.price_cents < ur - noon_drop) noon_dip = true;
        }
        if (noon_dip) ++noon_days;
    }
    {
        char buf[200];
        std::snprintf(buf, sizeof buf,
                      "zero-PV hours within %.2f of ur=14 (min %.3f); noon price "
                      "dips below %.1f on %d/3 days (need >= 2)",
                      night_tol, night_min, ur - noon_drop, noon_days);
        report(7, "price shape", night_ok && noon_days >= 2, buf);
    }
}

// ---------------------------------------------------------------- criterion 8

std::string metrics_csv(const std::vector<sim::EpisodeMetrics>& log) {
    std::string csv = "episode,total_cost,ma30_cost,voltage_deviation_pu,mean_price\n";
    std::vector<double> costs;
    for (const auto& m : log) costs.push_back(m.total_cost);
    const auto ma = sim::moving_average(costs, 30);
    char buf[256];
    for (std::size_t i = 0; i < log.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g\n", i, log[i].total_cost,
                      ma[i], log[i].voltage_deviation_pu, log[i].mean_price_cents);
        csv += buf;
    }
    return csv;
}

void criterion8_determinism() {
    sim::Overrides ov;
    ov.episodes = 40;
    const auto cfg = sim::load_scenario(
        std::string(P2PGRID_DATA_DIR) + "/scenario_default.json", ov);
    sim::Simulation a(cfg), b(cfg);
    const std::string csv_a = metrics_csv(a.train());
    const std::string csv_b = metrics_csv(b.train());
    report(8, "determinism", csv_a == csv_b,
           csv_a == csv_b ? "two identical runs produced byte-identical metrics CSVs"
                          : "metrics CSVs differ between identical runs");
}

}  // namespace

int main() {
    std::cout << "acceptance suite (criteria 5-7 train 10 full runs; expect "
                 "~20 minutes on one core)\n";
    criterion1_market();
    criterion2_power_flow();
    criterion3_dynamics();
    criterion4_gradients();
    criteria_training();
    criterion8_determinism();
    std::cout << (failures == 0 ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED")
              << "\n";
    return failures;
}
