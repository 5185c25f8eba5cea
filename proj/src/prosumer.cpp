#include "p2pgrid/prosumer.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace p2pgrid::prosumer {

Eigen::VectorXd Observation::as_vector() const {
    Eigen::VectorXd v(kDim);
    v << hour, outside_temp_c, pv_kw, load_p_kw, load_q_kvar, v_mag_pu, soc_kwh,
        price_lag24_cents;
    return v;
}

std::vector<std::pair<double, double>> action_bounds(const ProsumerConfig& cfg) {
    std::vector<std::pair<double, double>> b;
    b.reserve(cfg.action_dim());
    for (int z = 0; z < cfg.zones; ++z) b.emplace_back(0.0, cfg.flow_max_kgs);
    for (int z = 0; z < cfg.zones; ++z)
        b.emplace_back(cfg.discharge_temp_lo_c, cfg.discharge_temp_hi_c);
    b.emplace_back(-cfg.inverter_s_max_kva, cfg.inverter_s_max_kva);
    b.emplace_back(-cfg.charge_rate_max_kw, cfg.charge_rate_max_kw);
    b.emplace_back(-cfg.bid_bound_kwh, cfg.bid_bound_kwh);
    return b;
}

Action action_from_normalized(const Eigen::VectorXd& a_norm, const ProsumerConfig& cfg) {
    const auto bounds = action_bounds(cfg);
    if (a_norm.size() != static_cast<int>(bounds.size()))
        throw std::invalid_argument("action dimension mismatch");
    auto phys = [&](int d) {
        const double u = std::clamp(a_norm(d), -1.0, 1.0);
        const auto [lo, hi] = bounds[d];
        return 0.5 * (lo + hi) + 0.5 * (hi - lo) * u;
    };
    Action a;
    int d = 0;
    a.flow_kgs.resize(cfg.zones);
    a.discharge_temp_c.resize(cfg.zones);
    for (int z = 0; z < cfg.zones; ++z) a.flow_kgs[z] = phys(d++);
    for (int z = 0; z < cfg.zones; ++z) a.discharge_temp_c[z] = phys(d++);
    a.reactive_kvar = phys(d++);
    a.storage_kwh = phys(d++);
    a.bid_kwh = phys(d++);
    return a;
}

ExogenousProfiles ExogenousProfiles::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open profiles file: " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    ExogenousProfiles p;
    auto read24 = [&](const char* key, std::array<double, 24>& out) {
        const auto& arr = j.at(key);
        if (arr.size() != 24)
            throw std::runtime_error(std::string("profiles `") + key +
                                     "` must have 24 entries");
        for (int h = 0; h < 24; ++h) out[h] = arr[h].get<double>();
    };
    read24("temp_c", p.temp_c);
    read24("load_coeff", p.load_coeff);
    read24("pv_coeff", p.pv_coeff);
    p.noise_lo = j.value("noise_lo", 0.95);
    p.noise_hi = j.value("noise_hi", 1.05);
    for (int h = 0; h < 24; ++h)
        if (p.load_coeff[h] < 0.0 || p.load_coeff[h] > 1.0 || p.pv_coeff[h] < 0.0 ||
            p.pv_coeff[h] > 1.0)
            throw std::runtime_error("profile coefficients must lie in [0, 1]");
    return p;
}

std::pair<double, double> battery_step(double soc_kwh, double a_s_kwh,
                                       const ProsumerConfig& cfg) {
    const double unclamped = soc_kwh + cfg.eta_c * std::max(a_s_kwh, 0.0) +
                             (1.0 / cfg.eta_d) * std::min(a_s_kwh, 0.0);
    const double soc_next = std::max(std::min(unclamped, cfg.battery_capacity_kwh), 0.0);
    const double delta = soc_next - soc_kwh;
    // Bus-side energy follows the realized SOC change, so clamping never
    // creates or destroys energy at the bus.
    const double grid_kwh = delta >= 0.0 ? delta / cfg.eta_c : delta * cfg.eta_d;
    return {soc_next, grid_kwh};
}

std::pair<std::vector<double>, double> hvac_step(const std::vector<double>& zone_temps_c,
                                                 const std::vector<double>& flow_kgs,
                                                 const std::vector<double>& discharge_temp_c,
                                                 double outside_temp_c,
                                                 const ProsumerConfig& cfg) {
    const auto& hp = cfg.hvac;
    const std::size_t nz = zone_temps_c.size();
    if (flow_kgs.size() != nz || discharge_temp_c.size() != nz)
        throw std::invalid_argument("hvac_step: zone vector size mismatch");
    std::vector<double> next(nz);
    double power_kw = 0.0;
    for (std::size_t z = 0; z < nz; ++z) {
        const double t = zone_temps_c[z];
        const double m = flow_kgs[z];
        const double td = discharge_temp_c[z];
        next[z] = t + (1.0 / hp.c_thermal_kwh_per_c) *
                          (hp.u_kw_per_c * (outside_temp_c - t) +
                           m * hp.c_air * (td - t));
        power_kw += hp.fan_kw_per_kgs * m +
                    m * hp.c_air * std::max(0.0, t - td) / hp.cop;
    }
    return {next, power_kw};
}

double comfort_reward(const std::vector<double>& zone_temps_c, const ProsumerConfig& cfg) {
    double r = 0.0;
    for (double t : zone_temps_c) {
        const double over = std::max(0.0, t - cfg.comfort_hi_c);
        const double under = std::max(0.0, cfg.comfort_lo_c - t);
        r -= over * over + under * under;
    }
    return r;
}

double inverter_limit(double pv_kw, double requested_q_kvar, double s_max_kva) {
    if (pv_kw < 0.0) throw std::invalid_argument("pv generation must be non-negative");
    if (pv_kw > s_max_kva)
        throw std::invalid_argument("pv generation exceeds inverter apparent-power rating");
    const double headroom = std::sqrt(std::max(0.0, s_max_kva * s_max_kva - pv_kw * pv_kw));
    const double mag = std::min(std::abs(requested_q_kvar), headroom);
    return requested_q_kvar < 0.0 ? -mag : mag;
}

std::pair<double, double> net_injection(double pv_kw, double load_p_kw, double load_q_kvar,
                                        double hvac_power_kw, double battery_grid_kwh,
                                        double q_actual_kvar) {
    // 1 h step: battery grid energy in kWh equals average power in kW.
    const double p = pv_kw - load_p_kw - hvac_power_kw - battery_grid_kwh;
    const double q = q_actual_kvar - load_q_kvar;
    return {p, q};
}

ExogenousSample sample_exogenous(int hour, const ExogenousProfiles& profiles,
                                 double peak_load_kw, double pv_capacity_kw,
                                 double power_factor, Rng& rng) {
    if (hour < 0 || hour > 23) throw std::invalid_argument("hour must be in 0..23");
    const double n_temp = rng.uniform(profiles.noise_lo, profiles.noise_hi);
    const double n_pv = rng.uniform(profiles.noise_lo, profiles.noise_hi);
    const double n_load = rng.uniform(profiles.noise_lo, profiles.noise_hi);
    ExogenousSample s;
    s.outside_temp_c = profiles.temp_c[hour] * n_temp;
    s.pv_kw = profiles.pv_coeff[hour] * pv_capacity_kw * n_pv;
    s.load_p_kw = profiles.load_coeff[hour] * peak_load_kw * n_load;
    const double tan_phi = std::tan(std::acos(power_factor));
    s.load_q_kvar = s.load_p_kw * tan_phi;
    return s;
}

Observation assemble_observation(int hour, const ExogenousSample& exo, double v_mag_prev,
                                 double soc_kwh, double price_lag24_cents) {
    Observation o;
    o.hour = static_cast<double>(hour);
    o.outside_temp_c = exo.outside_temp_c;
    o.pv_kw = exo.pv_kw;
    o.load_p_kw = exo.load_p_kw;
    o.load_q_kvar = exo.load_q_kvar;
    o.v_mag_pu = v_mag_prev;
    o.soc_kwh = soc_kwh;
    o.price_lag24_cents = price_lag24_cents;
    return o;
}

}  // namespace p2pgrid::prosumer
