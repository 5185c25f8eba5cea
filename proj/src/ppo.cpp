#include "p2pgrid/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>

namespace p2pgrid::rl {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)
constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const int rows = static_cast<int>(j.size());
    const int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    return m;
}

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    nlohmann::json a = nlohmann::json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    Eigen::VectorXd v(static_cast<int>(j.size()));
    for (int i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
    return v;
}

nlohmann::json mlp_to_json(const Mlp& net) {
    nlohmann::json j;
    j["weights"] = nlohmann::json::array();
    j["biases"] = nlohmann::json::array();
    for (const auto& w : net.weights) j["weights"].push_back(matrix_to_json(w));
    for (const auto& b : net.biases) j["biases"].push_back(vector_to_json(b));
    return j;
}

Mlp mlp_from_json(const nlohmann::json& j) {
    Mlp net;
    for (const auto& w : j.at("weights")) net.weights.push_back(matrix_from_json(w));
    for (const auto& b : j.at("biases")) net.biases.push_back(vector_from_json(b));
    return net;
}

nlohmann::json adam_to_json(const MlpAdam& a) {
    nlohmann::json j;
    j["t"] = a.t;
    j["wm"] = nlohmann::json::array();
    j["bm"] = nlohmann::json::array();
    for (const auto& m : a.w_moments) {
        j["wm"].push_back({matrix_to_json(m.m), matrix_to_json(m.v)});
    }
    for (const auto& m : a.b_moments) {
        j["bm"].push_back({matrix_to_json(m.m), matrix_to_json(m.v)});
    }
    return j;
}

MlpAdam adam_from_json(const nlohmann::json& j) {
    MlpAdam a;
    a.t = j.at("t").get<long>();
    for (const auto& p : j.at("wm")) a.w_moments.push_back({matrix_from_json(p[0]), matrix_from_json(p[1])});
    for (const auto& p : j.at("bm")) a.b_moments.push_back({matrix_from_json(p[0]), matrix_from_json(p[1])});
    return a;
}

}  // namespace

GaussianPolicy GaussianPolicy::create(int obs_dim, int act_dim, int hidden, double init_std,
                                      Rng& rng) {
    GaussianPolicy p;
    p.net = Mlp::create({obs_dim, hidden, hidden, act_dim}, rng);
    p.log_std = Eigen::VectorXd::Constant(act_dim, std::log(init_std));
    return p;
}

std::pair<Eigen::VectorXd, double> GaussianPolicy::sample(const Eigen::VectorXd& obs,
                                                          Rng& rng) const {
    const Eigen::VectorXd mu = net.forward(obs);
    Eigen::VectorXd a(mu.size());
    double lp = 0.0;
    for (int d = 0; d < mu.size(); ++d) {
        const double sigma = std::exp(log_std(d));
        const double z = rng.normal();
        a(d) = mu(d) + sigma * z;
        lp += -0.5 * z * z - log_std(d) - kHalfLog2Pi;
    }
    return {a, lp};
}

Eigen::VectorXd GaussianPolicy::mean(const Eigen::VectorXd& obs) const {
    return net.forward(obs);
}

double GaussianPolicy::log_prob(const Eigen::VectorXd& obs,
                                const Eigen::VectorXd& action) const {
    const Eigen::VectorXd mu = net.forward(obs);
    double lp = 0.0;
    for (int d = 0; d < mu.size(); ++d) {
        const double sigma = std::exp(log_std(d));
        const double z = (action(d) - mu(d)) / sigma;
        lp += -0.5 * z * z - log_std(d) - kHalfLog2Pi;
    }
    return lp;
}

std::pair<std::vector<double>, std::vector<double>> compute_advantages(
    const std::vector<Transition>& traj, const PpoConfig& cfg, double bootstrap_value) {
    if (traj.empty()) throw std::invalid_argument("empty trajectory");
    const int n = static_cast<int>(traj.size());
    std::vector<double> returns(n), adv(n);

    auto continuation_value = [&](int t) {
        return t == n - 1 ? bootstrap_value : traj[t + 1].value;
    };

    // Discounted return-to-go, cut at chunk boundaries with a critic bootstrap
    // (the environment is continuing; `done` only marks 24-h chunk ends).
    for (int t = n - 1; t >= 0; --t) {
        const bool chunk_end = traj[t].done || t == n - 1;
        const double cont = chunk_end ? continuation_value(t) : returns[t + 1];
        returns[t] = traj[t].reward + cfg.gamma * cont;
    }

    if (cfg.gae_lambda > 0.0) {
        double carry = 0.0;
        for (int t = n - 1; t >= 0; --t) {
            const bool chunk_end = traj[t].done || t == n - 1;
            const double v_next = chunk_end ? continuation_value(t)
                                            : traj[t + 1].value;
            const double delta = traj[t].reward + cfg.gamma * v_next - traj[t].value;
            carry = chunk_end ? delta : delta + cfg.gamma * cfg.gae_lambda * carry;
            adv[t] = carry;
        }
    } else {
        for (int t = 0; t < n; ++t) adv[t] = returns[t] - traj[t].value;
    }

    // Batch normalization of advantages.
    double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    const double std = std::sqrt(var / n);
    if (std > 1e-8)
        for (double& a : adv) a = (a - mean) / std;
    else
        for (double& a : adv) a -= mean;
    return {returns, adv};
}

Learner::Learner(int obs_dim, int act_dim, const PpoConfig& cfg, double init_std,
                 std::uint64_t master_seed, const std::string& name)
    : cfg_(cfg), shuffle_rng_(master_seed, name + "/shuffle") {
    Rng init_rng(master_seed, name + "/init");
    actor_ = GaussianPolicy::create(obs_dim, act_dim, cfg.hidden, init_std, init_rng);
    critic_ = Mlp::create({obs_dim, cfg.hidden, cfg.hidden, 1}, init_rng);
    actor_opt_ = MlpAdam::zeros_like(actor_.net);
    critic_opt_ = MlpAdam::zeros_like(critic_);
}

double Learner::ret_std() const {
    if (ret_count_ < 2) return 1.0;
    const double s = std::sqrt(ret_m2_ / ret_count_);
    return s > 1e-8 ? s : 1.0;
}

double Learner::value(const Eigen::VectorXd& obs) const {
    const double norm = critic_.forward(obs)(0);
    return norm * ret_std() + (ret_count_ > 0 ? ret_mean_ : 0.0);
}

void Learner::update(const Eigen::VectorXd& bootstrap_obs) {
    if (buffer_.empty()) return;
    const double bootstrap = value(bootstrap_obs);
    auto [returns, advantages] = compute_advantages(buffer_, cfg_, bootstrap);

    std::vector<double> targets(buffer_.size());
    for (std::size_t t = 0; t < buffer_.size(); ++t)
        targets[t] = cfg_.value_target == "reward" ? buffer_[t].reward : returns[t];

    actor_update(advantages);
    critic_update(targets);
    buffer_.clear();
    ++updates_done_;
}

void Learner::actor_update(const std::vector<double>& advantages) {
    const GaussianPolicy snapshot = actor_;
    const MlpAdam opt_snapshot = actor_opt_;
    const AdamMoments ls_opt_snapshot = log_std_opt_;
    const long ls_t_snapshot = log_std_t_;

    const int n = static_cast<int>(buffer_.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);

    Mlp::Grads grads = Mlp::Grads::zeros_like(actor_.net);
    bool aborted = false;

    for (int epoch = 0; epoch < cfg_.epochs_per_update && !aborted; ++epoch) {
        // Fisher-Yates with the learner's own stream keeps runs reproducible.
        for (int i = n - 1; i > 0; --i)
            std::swap(idx[i], idx[shuffle_rng_.uniform_int(i + 1)]);
        for (int start = 0; start < n && !aborted; start += cfg_.minibatch_size) {
            const int end = std::min(n, start + cfg_.minibatch_size);
            const int mb = end - start;
            grads.setZero();
            Eigen::VectorXd log_std_grad = Eigen::VectorXd::Zero(actor_.log_std.size());
            double loss = 0.0;
            for (int s = start; s < end; ++s) {
                const Transition& tr = buffer_[idx[s]];
                const double adv = advantages[idx[s]];
                Mlp::Cache cache;
                const Eigen::VectorXd mu = actor_.net.forward(tr.obs, &cache);
                double lp = 0.0;
                for (int d = 0; d < mu.size(); ++d) {
                    const double sigma = std::exp(actor_.log_std(d));
                    const double z = (tr.action(d) - mu(d)) / sigma;
                    lp += -0.5 * z * z - actor_.log_std(d) - kHalfLog2Pi;
                }
                const double ratio = std::exp(lp - tr.log_prob);
                const bool clipped = (adv >= 0.0 && ratio > 1.0 + cfg_.clip_eps) ||
                                     (adv < 0.0 && ratio < 1.0 - cfg_.clip_eps);
                const double g = adv >= 0.0 ? (1.0 + cfg_.clip_eps) * adv
                                            : (1.0 - cfg_.clip_eps) * adv;
                loss -= std::min(ratio * adv, g) / mb;
                if (clipped) continue;  // constant branch of min, zero gradient
                // d(-surr)/d(logp_new) = -ratio * adv / mb; chain to mean and log_std.
                const double coeff = -ratio * adv / mb;
                Eigen::VectorXd up(mu.size());
                for (int d = 0; d < mu.size(); ++d) {
                    const double sigma = std::exp(actor_.log_std(d));
                    const double diff = tr.action(d) - mu(d);
                    up(d) = coeff * diff / (sigma * sigma);
                    log_std_grad(d) += coeff * (diff * diff / (sigma * sigma) - 1.0);
                }
                actor_.net.backward(cache, up, grads);
            }
            if (!std::isfinite(loss)) {
                aborted = true;
                break;
            }
            actor_opt_.step(actor_.net, grads, cfg_.actor_lr);
            Eigen::MatrixXd ls = actor_.log_std;
            adam_step(ls, Eigen::MatrixXd(log_std_grad), log_std_opt_, cfg_.actor_lr,
                      ++log_std_t_);
            actor_.log_std =
                ls.array().max(kLogStdMin).min(kLogStdMax).matrix().col(0);
        }
    }
    if (aborted || !actor_.net.all_finite() || !actor_.log_std.allFinite()) {
        actor_ = snapshot;
        actor_opt_ = opt_snapshot;
        log_std_opt_ = ls_opt_snapshot;
        log_std_t_ = ls_t_snapshot;
    }
}

void Learner::critic_update(const std::vector<double>& targets) {
    // Fold the batch into the running return statistics (Welford), then
    // regress on normalized targets so cent-scale magnitudes stay trainable.
    for (double g : targets) {
        ++ret_count_;
        const double d = g - ret_mean_;
        ret_mean_ += d / ret_count_;
        ret_m2_ += d * (g - ret_mean_);
    }
    const double mu = ret_mean_;
    const double sd = ret_std();

    const Mlp snapshot = critic_;
    const MlpAdam opt_snapshot = critic_opt_;

    const int n = static_cast<int>(targets.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Mlp::Grads grads = Mlp::Grads::zeros_like(critic_);
    bool aborted = false;

    for (int epoch = 0; epoch < cfg_.epochs_per_update && !aborted; ++epoch) {
        for (int i = n - 1; i > 0; --i)
            std::swap(idx[i], idx[shuffle_rng_.uniform_int(i + 1)]);
        for (int start = 0; start < n && !aborted; start += cfg_.minibatch_size) {
            const int end = std::min(n, start + cfg_.minibatch_size);
            const int mb = end - start;
            grads.setZero();
            double loss = 0.0;
            for (int s = start; s < end; ++s) {
                const Transition& tr = buffer_[idx[s]];
                Mlp::Cache cache;
                const double pred = critic_.forward(tr.obs, &cache)(0);
                const double target = (targets[idx[s]] - mu) / sd;
                const double err = pred - target;
                loss += err * err / mb;
                Eigen::VectorXd up(1);
                up(0) = 2.0 * err / mb;
                critic_.backward(cache, up, grads);
            }
            if (!std::isfinite(loss)) {
                aborted = true;
                break;
            }
            critic_opt_.step(critic_, grads, cfg_.critic_lr);
        }
    }
    if (aborted || !critic_.all_finite()) {
        critic_ = snapshot;
        critic_opt_ = opt_snapshot;
    }
}

std::string Learner::save_checkpoint() const {
    nlohmann::json j;
    j["format"] = "p2pgrid-checkpoint-v1";
    j["actor"] = mlp_to_json(actor_.net);
    j["log_std"] = vector_to_json(actor_.log_std);
    j["critic"] = mlp_to_json(critic_);
    j["actor_opt"] = adam_to_json(actor_opt_);
    j["critic_opt"] = adam_to_json(critic_opt_);
    j["log_std_opt_m"] = matrix_to_json(log_std_opt_.m);
    j["log_std_opt_v"] = matrix_to_json(log_std_opt_.v);
    j["log_std_t"] = log_std_t_;
    j["shuffle_rng"] = shuffle_rng_.serialize();
    j["updates_done"] = updates_done_;
    j["ret_count"] = ret_count_;
    j["ret_mean"] = ret_mean_;
    j["ret_m2"] = ret_m2_;
    return j.dump();
}

void Learner::load_checkpoint(const std::string& blob) {
    nlohmann::json j = nlohmann::json::parse(blob);
    if (j.value("format", "") != "p2pgrid-checkpoint-v1")
        throw std::runtime_error("unrecognized checkpoint format");
    actor_.net = mlp_from_json(j.at("actor"));
    actor_.log_std = vector_from_json(j.at("log_std"));
    critic_ = mlp_from_json(j.at("critic"));
    actor_opt_ = adam_from_json(j.at("actor_opt"));
    critic_opt_ = adam_from_json(j.at("critic_opt"));
    log_std_opt_.m = matrix_from_json(j.at("log_std_opt_m"));
    log_std_opt_.v = matrix_from_json(j.at("log_std_opt_v"));
    log_std_t_ = j.at("log_std_t").get<long>();
    shuffle_rng_.deserialize(j.at("shuffle_rng").get<std::string>());
    updates_done_ = j.at("updates_done").get<long>();
    ret_count_ = j.at("ret_count").get<long>();
    ret_mean_ = j.at("ret_mean").get<double>();
    ret_m2_ = j.at("ret_m2").get<double>();
    buffer_.clear();
}

}  // namespace p2pgrid::rl
