#include "p2pgrid/grid.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <stdexcept>

namespace p2pgrid::grid {

int NetworkModel::slack_bus() const {
    for (const auto& b : buses)
        if (b.kind == BusKind::Slack) return b.id;
    throw std::logic_error("network has no slack bus");
}

bool NetworkModel::is_connected() const {
    const int n = bus_count();
    if (n <= 1) return true;
    std::vector<std::vector<int>> adj(n);
    for (const auto& br : branches) {
        adj[br.from_bus].push_back(br.to_bus);
        adj[br.to_bus].push_back(br.from_bus);
    }
    std::vector<bool> seen(n, false);
    std::vector<int> stack{0};
    seen[0] = true;
    int reached = 1;
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int v : adj[u])
            if (!seen[v]) {
                seen[v] = true;
                ++reached;
                stack.push_back(v);
            }
    }
    return reached == n;
}

NetworkModel build_admittance(const std::vector<BusSpec>& buses,
                              const std::vector<BranchSpec>& branches, double v_base_kv,
                              double s_base_kva) {
    const int n = static_cast<int>(buses.size());
    std::set<int> ids;
    int slack_count = 0;
    for (const auto& b : buses) {
        if (b.id < 0 || b.id >= n)
            throw std::invalid_argument("bus id " + std::to_string(b.id) +
                                        " outside 0..N-1");
        if (!ids.insert(b.id).second)
            throw std::invalid_argument("duplicate bus id " + std::to_string(b.id));
        if (b.kind == BusKind::Slack) ++slack_count;
    }
    if (n > 0 && slack_count != 1)
        throw std::invalid_argument("network must have exactly one slack bus, found " +
                                    std::to_string(slack_count));

    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& br : branches) {
        if (br.from_bus < 0 || br.from_bus >= n || br.to_bus < 0 || br.to_bus >= n)
            throw std::invalid_argument("branch references missing bus");
        if (br.from_bus == br.to_bus)
            throw std::invalid_argument("branch endpoints must differ");
        if (br.r == 0.0 && br.x == 0.0)
            throw std::invalid_argument("zero-impedance branch " +
                                        std::to_string(br.from_bus) + "-" +
                                        std::to_string(br.to_bus));
        if (br.r < 0.0) throw std::invalid_argument("negative branch resistance");
        const std::complex<double> y_series = 1.0 / std::complex<double>(br.r, br.x);
        const std::complex<double> y_shunt(0.0, br.b_half);
        y(br.from_bus, br.from_bus) += y_series + y_shunt;
        y(br.to_bus, br.to_bus) += y_series + y_shunt;
        y(br.from_bus, br.to_bus) -= y_series;
        y(br.to_bus, br.from_bus) -= y_series;
    }
    for (const auto& b : buses) y(b.id, b.id) += std::complex<double>(b.shunt_g, b.shunt_b);

    NetworkModel net;
    net.buses = buses;
    net.branches = branches;
    net.Y = std::move(y);
    net.v_base_kv = v_base_kv;
    net.s_base_kva = s_base_kva;
    return net;
}

NetworkModel load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open network file: " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("network file " + path + ": " + e.what());
    }
    for (const char* key : {"s_base_kva", "v_base_kv", "buses", "branches"})
        if (!j.contains(key))
            throw std::runtime_error("network file missing key `" + std::string(key) + "`");

    std::vector<BusSpec> buses;
    for (const auto& jb : j.at("buses")) {
        BusSpec b;
        b.id = jb.at("id").get<int>();
        const std::string kind = jb.at("kind").get<std::string>();
        if (kind == "slack")
            b.kind = BusKind::Slack;
        else if (kind == "load")
            b.kind = BusKind::Load;
        else
            throw std::runtime_error("bus " + std::to_string(b.id) +
                                     ": kind must be `slack` or `load`");
        b.shunt_g = jb.value("shunt_g", 0.0);
        b.shunt_b = jb.value("shunt_b", 0.0);
        buses.push_back(b);
    }
    std::vector<BranchSpec> branches;
    for (const auto& jb : j.at("branches")) {
        BranchSpec br;
        br.from_bus = jb.at("from").get<int>();
        br.to_bus = jb.at("to").get<int>();
        br.r = jb.at("r").get<double>();
        br.x = jb.at("x").get<double>();
        br.b_half = jb.value("b_half", 0.0);
        branches.push_back(br);
    }
    return build_admittance(buses, branches, j.at("v_base_kv").get<double>(),
                            j.at("s_base_kva").get<double>());
}

void injection_residuals(const NetworkModel& net, const Eigen::VectorXd& v_mag,
                         const Eigen::VectorXd& v_ang, const Eigen::VectorXd& p,
                         const Eigen::VectorXd& q, Eigen::VectorXd& dp,
                         Eigen::VectorXd& dq) {
    const int n = net.bus_count();
    dp.resize(n);
    dq.resize(n);
    for (int k = 0; k < n; ++k) {
        double pk = 0.0, qk = 0.0;
        for (int j = 0; j < n; ++j) {
            const double g = net.Y(k, j).real();
            const double b = net.Y(k, j).imag();
            const double th = v_ang(k) - v_ang(j);
            const double vv = v_mag(k) * v_mag(j);
            pk += vv * (g * std::cos(th) + b * std::sin(th));
            qk += vv * (g * std::sin(th) - b * std::cos(th));
        }
        dp(k) = p(k) - pk;
        dq(k) = q(k) - qk;
    }
}

PowerFlowSolution solve_power_flow(const NetworkModel& net, const Eigen::VectorXd& p,
                                   const Eigen::VectorXd& q, double slack_v, double tol,
                                   int max_iter) {
    if (tol <= 0.0) throw std::invalid_argument("power-flow tolerance must be > 0");
    const int n = net.bus_count();
    const int slack = net.slack_bus();
    std::vector<int> pq;  // non-slack bus ids, solver ordering
    pq.reserve(n - 1);
    for (int k = 0; k < n; ++k)
        if (k != slack) pq.push_back(k);
    const int m = static_cast<int>(pq.size());

    PowerFlowSolution sol;
    sol.v_mag = Eigen::VectorXd::Constant(n, slack_v);  // flat start
    sol.v_ang = Eigen::VectorXd::Zero(n);

    Eigen::VectorXd dp, dq;
    for (int it = 0; it <= max_iter; ++it) {
        injection_residuals(net, sol.v_mag, sol.v_ang, p, q, dp, dq);
        double mism = 0.0;
        for (int k : pq) mism = std::max(mism, std::max(std::abs(dp(k)), std::abs(dq(k))));
        sol.mismatch = mism;
        sol.iterations = it;
        if (mism < tol) {
            sol.converged = true;
            return sol;
        }
        if (it == max_iter) break;

        // Full polar Jacobian over the non-slack buses: [dP/dth dP/dV; dQ/dth dQ/dV].
        Eigen::MatrixXd jac(2 * m, 2 * m);
        for (int a = 0; a < m; ++a) {
            const int k = pq[a];
            // Injections at k for the diagonal terms.
            double pk = 0.0, qk = 0.0;
            for (int j = 0; j < n; ++j) {
                const double g = net.Y(k, j).real();
                const double b = net.Y(k, j).imag();
                const double th = sol.v_ang(k) - sol.v_ang(j);
                const double vv = sol.v_mag(k) * sol.v_mag(j);
                pk += vv * (g * std::cos(th) + b * std::sin(th));
                qk += vv * (g * std::sin(th) - b * std::cos(th));
            }
            const double gkk = net.Y(k, k).real();
            const double bkk = net.Y(k, k).imag();
            const double vk = sol.v_mag(k);
            for (int c = 0; c < m; ++c) {
                const int j = pq[c];
                if (j == k) {
                    jac(a, c) = -qk - bkk * vk * vk;
                    jac(a, m + c) = pk / vk + gkk * vk;
                    jac(m + a, c) = pk - gkk * vk * vk;
                    jac(m + a, m + c) = qk / vk - bkk * vk;
                } else {
                    const double g = net.Y(k, j).real();
                    const double b = net.Y(k, j).imag();
                    const double th = sol.v_ang(k) - sol.v_ang(j);
                    const double vj = sol.v_mag(j);
                    const double s = std::sin(th), co = std::cos(th);
                    jac(a, c) = vk * vj * (g * s - b * co);
                    jac(a, m + c) = vk * (g * co + b * s);
                    jac(m + a, c) = -vk * vj * (g * co + b * s);
                    jac(m + a, m + c) = vk * (g * s - b * co);
                }
            }
        }

        Eigen::VectorXd rhs(2 * m);
        for (int a = 0; a < m; ++a) {
            rhs(a) = dp(pq[a]);
            rhs(m + a) = dq(pq[a]);
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
        if (!lu.isInvertible()) {
            sol.singular_jacobian = true;
            sol.converged = false;
            return sol;
        }
        const Eigen::VectorXd delta = lu.solve(rhs);
        for (int a = 0; a < m; ++a) {
            sol.v_ang(pq[a]) += delta(a);
            sol.v_mag(pq[a]) += delta(m + a);
        }
    }
    sol.converged = false;
    return sol;
}

std::pair<std::vector<double>, double> voltage_violation(const PowerFlowSolution& sol,
                                                         double v_lo, double v_hi,
                                                         double lambda) {
    if (!sol.converged)
        throw std::invalid_argument("voltage_violation requires a converged solution");
    if (v_lo >= v_hi) throw std::invalid_argument("voltage band requires v_lo < v_hi");
    std::vector<double> dev(sol.v_mag.size());
    double total = 0.0;
    for (int k = 0; k < sol.v_mag.size(); ++k) {
        const double v = sol.v_mag(k);
        dev[k] = std::max(0.0, v - v_hi) + std::max(0.0, v_lo - v);
        total += dev[k];
    }
    return {dev, -lambda * total};
}

double max_violation_penalty(int n_buses, double v_lo, double v_hi, double lambda) {
    return -lambda * n_buses * (v_hi - v_lo);
}

}  // namespace p2pgrid::grid
