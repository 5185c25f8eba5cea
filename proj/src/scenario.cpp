#include "p2pgrid/scenario.hpp"

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "p2pgrid/rng.hpp"

namespace p2pgrid::sim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const json& require(const json& j, const std::string& parent, const char* key) {
    const std::string path = parent.empty() ? key : parent + "." + key;
    if (!j.is_object() || !j.contains(key)) throw ConfigError(path, "missing");
    return j.at(key);
}

double require_num(const json& j, const std::string& parent, const char* key) {
    const auto& v = require(j, parent, key);
    if (!v.is_number()) throw ConfigError(parent.empty() ? key : parent + "." + key,
                                          "must be a number");
    return v.get<double>();
}

prosumer::ProsumerConfig parse_prosumer(const json& defaults, const json& entry,
                                        const std::string& path) {
    json merged = defaults;
    merged.update(entry);
    prosumer::ProsumerConfig c;
    c.bus_id = static_cast<int>(require_num(merged, path, "bus"));
    c.peak_load_kw = require_num(merged, path, "peak_load_kw");
    c.battery_capacity_kwh = merged.value("battery_capacity_kwh", c.battery_capacity_kwh);
    c.eta_c = merged.value("eta_c", c.eta_c);
    c.eta_d = merged.value("eta_d", c.eta_d);
    c.charge_rate_max_kw = merged.value("charge_rate_max_kw", c.charge_rate_max_kw);
    c.pv_capacity_kw = merged.value("pv_capacity_kw", c.pv_capacity_kw);
    c.inverter_s_max_kva = merged.value("inverter_s_max_kva", c.inverter_s_max_kva);
    c.zones = merged.value("zones", c.zones);
    c.comfort_lo_c = merged.value("comfort_lo_c", c.comfort_lo_c);
    c.comfort_hi_c = merged.value("comfort_hi_c", c.comfort_hi_c);
    c.flow_max_kgs = merged.value("flow_max_kgs", c.flow_max_kgs);
    c.discharge_temp_lo_c = merged.value("discharge_temp_lo_c", c.discharge_temp_lo_c);
    c.discharge_temp_hi_c = merged.value("discharge_temp_hi_c", c.discharge_temp_hi_c);
    c.bid_bound_kwh = merged.value("bid_bound_kwh", c.bid_bound_kwh);
    c.power_factor = merged.value("power_factor", c.power_factor);
    if (merged.contains("hvac")) {
        const auto& h = merged.at("hvac");
        c.hvac.c_thermal_kwh_per_c = h.value("c_thermal_kwh_per_c", c.hvac.c_thermal_kwh_per_c);
        c.hvac.u_kw_per_c = h.value("u_kw_per_c", c.hvac.u_kw_per_c);
        c.hvac.c_air = h.value("c_air", c.hvac.c_air);
        c.hvac.fan_kw_per_kgs = h.value("fan_kw_per_kgs", c.hvac.fan_kw_per_kgs);
        c.hvac.cop = h.value("cop", c.hvac.cop);
    }
    return c;
}

json prosumer_to_json(const prosumer::ProsumerConfig& c) {
    json j;
    j["bus"] = c.bus_id;
    j["peak_load_kw"] = c.peak_load_kw;
    j["battery_capacity_kwh"] = c.battery_capacity_kwh;
    j["eta_c"] = c.eta_c;
    j["eta_d"] = c.eta_d;
    j["charge_rate_max_kw"] = c.charge_rate_max_kw;
    j["pv_capacity_kw"] = c.pv_capacity_kw;
    j["inverter_s_max_kva"] = c.inverter_s_max_kva;
    j["zones"] = c.zones;
    j["comfort_lo_c"] = c.comfort_lo_c;
    j["comfort_hi_c"] = c.comfort_hi_c;
    j["flow_max_kgs"] = c.flow_max_kgs;
    j["discharge_temp_lo_c"] = c.discharge_temp_lo_c;
    j["discharge_temp_hi_c"] = c.discharge_temp_hi_c;
    j["bid_bound_kwh"] = c.bid_bound_kwh;
    j["power_factor"] = c.power_factor;
    j["hvac"] = {{"c_thermal_kwh_per_c", c.hvac.c_thermal_kwh_per_c},
                 {"u_kw_per_c", c.hvac.u_kw_per_c},
                 {"c_air", c.hvac.c_air},
                 {"fan_kw_per_kgs", c.hvac.fan_kw_per_kgs},
                 {"cop", c.hvac.cop}};
    return j;
}

}  // namespace

ScenarioConfig load_scenario(const std::string& path, const Overrides& ov) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("scenario file " + path + ": " + e.what());
    }
    // A run manifest embeds the resolved scenario under `scenario`.
    if (j.contains("scenario")) j = j.at("scenario");

    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        const fs::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).lexically_normal().string();
    };

    ScenarioConfig cfg;
    cfg.network_path = resolve(require(j, "", "network").get<std::string>());
    cfg.profiles_path = resolve(require(j, "", "profiles").get<std::string>());

    const json& jt = require(j, "", "tariffs");
    cfg.tariffs.fit_cents = require_num(jt, "tariffs", "fit");
    cfg.tariffs.ur_cents = require_num(jt, "tariffs", "ur");

    cfg.lambda = require_num(j, "", "lambda");
    cfg.v_lo = require_num(j, "", "v_lo");
    cfg.v_hi = require_num(j, "", "v_hi");
    cfg.n_episodes = static_cast<int>(require_num(j, "", "episodes"));
    cfg.seed = static_cast<std::uint64_t>(require_num(j, "", "seed"));
    cfg.p2p_enabled = j.value("p2p", true);
    cfg.imbalance_enabled = j.value("imbalance", true);
    cfg.checkpoint_every = j.value("checkpoint_every", 500);
    cfg.threads = j.value("threads", 1);

    if (j.contains("ppo")) {
        const auto& p = j.at("ppo");
        cfg.ppo.gamma = p.value("gamma", cfg.ppo.gamma);
        cfg.ppo.clip_eps = p.value("clip_eps", cfg.ppo.clip_eps);
        cfg.ppo.actor_lr = p.value("actor_lr", cfg.ppo.actor_lr);
        cfg.ppo.critic_lr = p.value("critic_lr", cfg.ppo.critic_lr);
        cfg.ppo.epochs_per_update = p.value("epochs", cfg.ppo.epochs_per_update);
        cfg.ppo.minibatch_size = p.value("minibatch", cfg.ppo.minibatch_size);
        cfg.ppo.steps_per_update = p.value("steps_per_update", cfg.ppo.steps_per_update);
        cfg.ppo.gae_lambda = p.value("gae_lambda", cfg.ppo.gae_lambda);
        cfg.ppo.value_target = p.value("value_target", cfg.ppo.value_target);
        cfg.ppo.hidden = p.value("hidden", cfg.ppo.hidden);
    }

    const json defaults = j.value("prosumer_defaults", json::object());
    const json& jp = require(j, "", "prosumers");
    int idx = 0;
    for (const auto& entry : jp) {
        cfg.prosumers.push_back(
            parse_prosumer(defaults, entry, "prosumers[" + std::to_string(idx) + "]"));
        ++idx;
    }

    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.episodes) cfg.n_episodes = *ov.episodes;
    if (ov.p2p) cfg.p2p_enabled = *ov.p2p;
    if (ov.paper_literal && *ov.paper_literal) cfg.imbalance_enabled = false;
    if (ov.threads) cfg.threads = *ov.threads;

    validate(cfg);
    return cfg;
}

void validate(const ScenarioConfig& cfg) {
    if (cfg.tariffs.fit_cents >= cfg.tariffs.ur_cents)
        throw ConfigError("tariffs.ur", "requires fit < ur");
    if (cfg.v_lo >= cfg.v_hi) throw ConfigError("v_hi", "requires v_lo < v_hi");
    if (cfg.lambda < 0.0) throw ConfigError("lambda", "must be >= 0");
    if (cfg.n_episodes < 0) throw ConfigError("episodes", "must be >= 0");
    if (cfg.ppo.gamma <= 0.0 || cfg.ppo.gamma >= 1.0)
        throw ConfigError("ppo.gamma", "must lie in (0, 1)");
    if (cfg.ppo.clip_eps <= 0.0) throw ConfigError("ppo.clip_eps", "must be > 0");
    if (cfg.ppo.steps_per_update % 24 != 0)
        throw ConfigError("ppo.steps_per_update", "must be a multiple of 24");
    if (cfg.prosumers.empty()) throw ConfigError("prosumers", "must not be empty");
    std::vector<int> buses;
    for (std::size_t i = 0; i < cfg.prosumers.size(); ++i) {
        const auto& p = cfg.prosumers[i];
        const std::string path = "prosumers[" + std::to_string(i) + "]";
        if (p.battery_capacity_kwh <= 0.0)
            throw ConfigError(path + ".battery_capacity_kwh", "must be > 0");
        if (p.eta_c <= 0.0 || p.eta_c > 1.0) throw ConfigError(path + ".eta_c", "must be in (0, 1]");
        if (p.eta_d <= 0.0 || p.eta_d > 1.0) throw ConfigError(path + ".eta_d", "must be in (0, 1]");
        if (p.comfort_lo_c >= p.comfort_hi_c)
            throw ConfigError(path + ".comfort_hi_c", "requires comfort_lo < comfort_hi");
        if (p.pv_capacity_kw < 0.0) throw ConfigError(path + ".pv_capacity_kw", "must be >= 0");
        if (p.pv_capacity_kw > p.inverter_s_max_kva)
            throw ConfigError(path + ".inverter_s_max_kva",
                              "must be >= pv_capacity_kw");
        if (p.peak_load_kw < 0.0) throw ConfigError(path + ".peak_load_kw", "must be >= 0");
        if (p.zones < 1) throw ConfigError(path + ".zones", "must be >= 1");
        for (int b : buses)
            if (b == p.bus_id)
                throw ConfigError(path + ".bus", "duplicate prosumer bus");
        buses.push_back(p.bus_id);
    }
}

std::string scenario_to_json(const ScenarioConfig& cfg) {
    json j;
    j["network"] = cfg.network_path;
    j["profiles"] = cfg.profiles_path;
    j["tariffs"] = {{"fit", cfg.tariffs.fit_cents}, {"ur", cfg.tariffs.ur_cents}};
    j["lambda"] = cfg.lambda;
    j["v_lo"] = cfg.v_lo;
    j["v_hi"] = cfg.v_hi;
    j["episodes"] = cfg.n_episodes;
    j["seed"] = cfg.seed;
    j["p2p"] = cfg.p2p_enabled;
    j["imbalance"] = cfg.imbalance_enabled;
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["threads"] = cfg.threads;
    j["ppo"] = {{"gamma", cfg.ppo.gamma},
                {"clip_eps", cfg.ppo.clip_eps},
                {"actor_lr", cfg.ppo.actor_lr},
                {"critic_lr", cfg.ppo.critic_lr},
                {"epochs", cfg.ppo.epochs_per_update},
                {"minibatch", cfg.ppo.minibatch_size},
                {"steps_per_update", cfg.ppo.steps_per_update},
                {"gae_lambda", cfg.ppo.gae_lambda},
                {"value_target", cfg.ppo.value_target},
                {"hidden", cfg.ppo.hidden}};
    j["prosumers"] = json::array();
    for (const auto& p : cfg.prosumers) j["prosumers"].push_back(prosumer_to_json(p));
    return j.dump(2);
}

std::string file_hash_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file for hashing: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::uint64_t h = fnv1a64(buf.str());
    std::ostringstream hex;
    hex << std::hex << h;
    return "fnv1a64:" + hex.str();
}

}  // namespace p2pgrid::sim
