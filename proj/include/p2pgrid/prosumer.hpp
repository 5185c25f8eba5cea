#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <utility>
#include <vector>

#include "p2pgrid/rng.hpp"

namespace p2pgrid::prosumer {

/// First-order RC thermal model constants, per zone. Units chosen so that with
/// a 1 h step, kW and kWh are numerically interchangeable.
struct HvacParams {
    double c_thermal_kwh_per_c = 2.0;  // zone thermal capacitance
    double u_kw_per_c = 0.3;           // envelope conductance to outside
    double c_air = 1.005;              // kW per (kg/s * K) of supply air
    double fan_kw_per_kgs = 0.3;       // fan power per unit flow
    double cop = 3.0;                  // cooling coefficient of performance
};

struct ProsumerConfig {
    double battery_capacity_kwh = 50.0;
    double eta_c = 0.95;
    double eta_d = 0.9;
    double charge_rate_max_kw = 10.0;
    double pv_capacity_kw = 30.0;
    double inverter_s_max_kva = 50.0;
    int zones = 5;
    double comfort_lo_c = 22.0;
    double comfort_hi_c = 28.0;
    double flow_max_kgs = 1.0;               // per zone
    double discharge_temp_lo_c = 10.0;
    double discharge_temp_hi_c = 16.0;
    double bid_bound_kwh = 30.0;
    int bus_id = -1;
    double peak_load_kw = 20.0;
    double power_factor = 0.95;              // lagging, derives d^q from d^p
    HvacParams hvac;

    int action_dim() const { return 2 * zones + 3; }
};

struct ProsumerState {
    double soc_kwh = 0.0;
    std::vector<double> zone_temps_c;
};

/// The 8-component observation.
struct Observation {
    double hour = 0.0;
    double outside_temp_c = 0.0;
    double pv_kw = 0.0;
    double load_p_kw = 0.0;
    double load_q_kvar = 0.0;
    double v_mag_pu = 1.0;
    double soc_kwh = 0.0;
    double price_lag24_cents = 0.0;

    static constexpr int kDim = 8;
    Eigen::VectorXd as_vector() const;
};

/// Physical-unit action, dimension 2Z+3.
struct Action {
    std::vector<double> flow_kgs;          // per zone
    std::vector<double> discharge_temp_c;  // per zone
    double reactive_kvar = 0.0;
    double storage_kwh = 0.0;  // >0 charge, <0 discharge
    double bid_kwh = 0.0;
};

/// Per-component [lo, hi] box in the order flow..., discharge_temp..., q, storage, bid.
std::vector<std::pair<double, double>> action_bounds(const ProsumerConfig& cfg);

/// Maps a normalized action in [-1,1]^d (clamping out-of-box components) onto
/// the physical box.
Action action_from_normalized(const Eigen::VectorXd& a_norm, const ProsumerConfig& cfg);

struct ExogenousProfiles {
    std::array<double, 24> temp_c{};
    std::array<double, 24> load_coeff{};
    std::array<double, 24> pv_coeff{};
    double noise_lo = 0.95;
    double noise_hi = 1.05;

    static ExogenousProfiles load(const std::string& path);
};

struct ExogenousSample {
    double outside_temp_c = 0.0;
    double pv_kw = 0.0;
    double load_p_kw = 0.0;
    double load_q_kvar = 0.0;
};

/// Battery SOC transition with hard [0, capacity] clamp. grid_kwh is the
/// bus-side energy consistent with the realized SOC change: positive = drawn
/// from the bus (charging), negative = delivered.
std::pair<double, double> battery_step(double soc_kwh, double a_s_kwh,
                                       const ProsumerConfig& cfg);

/// One-hour zone temperature update plus electrical HVAC power (fan + cooling).
std::pair<std::vector<double>, double> hvac_step(const std::vector<double>& zone_temps_c,
                                                 const std::vector<double>& flow_kgs,
                                                 const std::vector<double>& discharge_temp_c,
                                                 double outside_temp_c,
                                                 const ProsumerConfig& cfg);

/// r^c: negative squared excursion outside the comfort band, summed over zones.
double comfort_reward(const std::vector<double>& zone_temps_c, const ProsumerConfig& cfg);

/// Caps the requested reactive power to the inverter's apparent-power headroom.
double inverter_limit(double pv_kw, double requested_q_kvar, double s_max_kva);

/// Net bus injection in kW/kVAr (generation positive) for one realized step.
std::pair<double, double> net_injection(double pv_kw, double load_p_kw, double load_q_kvar,
                                        double hvac_power_kw, double battery_grid_kwh,
                                        double q_actual_kvar);

ExogenousSample sample_exogenous(int hour, const ExogenousProfiles& profiles,
                                 double peak_load_kw, double pv_capacity_kw,
                                 double power_factor, Rng& rng);

Observation assemble_observation(int hour, const ExogenousSample& exo, double v_mag_prev,
                                 double soc_kwh, double price_lag24_cents);

}  // namespace p2pgrid::prosumer
