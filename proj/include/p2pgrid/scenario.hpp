#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "p2pgrid/market.hpp"
#include "p2pgrid/ppo.hpp"
#include "p2pgrid/prosumer.hpp"

namespace p2pgrid::sim {

struct ScenarioConfig {
    std::string network_path;
    std::string profiles_path;
    std::vector<prosumer::ProsumerConfig> prosumers;
    market::Tariffs tariffs;
    double lambda = 1e4;
    double v_lo = 0.96;
    double v_hi = 1.04;
    rl::PpoConfig ppo;
    int n_episodes = 1500;
    std::uint64_t seed = 1;
    bool p2p_enabled = true;
    bool imbalance_enabled = true;
    int checkpoint_every = 500;  // episodes; 0 disables mid-run checkpoints
    int threads = 1;             // 1 = serial reference path, 0 = OpenMP default
};

/// Raised with the JSON path of the offending field, e.g. "tariffs.ur".
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& field, const std::string& what)
        : std::runtime_error("config field `" + field + "`: " + what), field_path(field) {}
    std::string field_path;
};

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> episodes;
    std::optional<bool> p2p;          // --no-p2p
    std::optional<bool> paper_literal;  // disables imbalance settlement
    std::optional<int> threads;
};

/// Loads a scenario file (or a run manifest wrapping one), resolves relative
/// data paths against the file's directory, applies overrides, validates.
ScenarioConfig load_scenario(const std::string& path, const Overrides& ov = {});

void validate(const ScenarioConfig& cfg);

/// Resolved scenario as JSON text (embedded in run manifests; parseable by
/// load_scenario again).
std::string scenario_to_json(const ScenarioConfig& cfg);

std::string file_hash_hex(const std::string& path);  // FNV-1a over file bytes

}  // namespace p2pgrid::sim
