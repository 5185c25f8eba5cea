#pragma once

#include <Eigen/Dense>
#include <complex>
#include <string>
#include <utility>
#include <vector>

namespace p2pgrid::grid {

enum class BusKind { Slack, Load };

struct BusSpec {
    int id = 0;
    BusKind kind = BusKind::Load;
    double shunt_g = 0.0;  // per-unit
    double shunt_b = 0.0;  // per-unit
};

struct BranchSpec {
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;       // per-unit series resistance
    double x = 0.0;       // per-unit series reactance
    double b_half = 0.0;  // per-unit line-charging half-susceptance
};

/// Immutable network description. Y is rebuilt deterministically from
/// buses + branches, dense complex, symmetric.
struct NetworkModel {
    std::vector<BusSpec> buses;
    std::vector<BranchSpec> branches;
    Eigen::MatrixXcd Y;
    double v_base_kv = 1.0;
    double s_base_kva = 1000.0;

    int bus_count() const { return static_cast<int>(buses.size()); }
    int slack_bus() const;
    bool is_connected() const;
};

struct PowerFlowSolution {
    Eigen::VectorXd v_mag;  // per-unit
    Eigen::VectorXd v_ang;  // radians
    double mismatch = 0.0;  // max abs residual of the bus-injection equations
    int iterations = 0;
    bool converged = false;
    bool singular_jacobian = false;
};

NetworkModel build_admittance(const std::vector<BusSpec>& buses,
                              const std::vector<BranchSpec>& branches,
                              double v_base_kv = 1.0, double s_base_kva = 1000.0);

/// Parses and schema-validates a network JSON file
/// (keys: s_base_kva, v_base_kv, buses[], branches[]).
NetworkModel load_network(const std::string& path);

/// Newton-Raphson on the polar bus-injection mismatch, full Jacobian, flat start.
/// p/q are per-unit net injections indexed by bus id; values at the slack bus
/// are ignored.
PowerFlowSolution solve_power_flow(const NetworkModel& net, const Eigen::VectorXd& p,
                                   const Eigen::VectorXd& q, double slack_v = 1.0,
                                   double tol = 1e-8, int max_iter = 30);

/// Per-bus band deviation and the violation penalty r_v = -lambda * sum(dev).
/// The slack bus is included in the sum. Throws if the solution is unconverged.
std::pair<std::vector<double>, double> voltage_violation(const PowerFlowSolution& sol,
                                                         double v_lo, double v_hi,
                                                         double lambda);

/// Penalty applied when the solver fails: every bus contributes (v_hi - v_lo).
double max_violation_penalty(int n_buses, double v_lo, double v_hi, double lambda);

/// Residuals of the bus-injection equations at a candidate (v, theta); used by
/// both the solver and re-substitution checks.
void injection_residuals(const NetworkModel& net, const Eigen::VectorXd& v_mag,
                         const Eigen::VectorXd& v_ang, const Eigen::VectorXd& p,
                         const Eigen::VectorXd& q, Eigen::VectorXd& dp,
                         Eigen::VectorXd& dq);

}  // namespace p2pgrid::grid
