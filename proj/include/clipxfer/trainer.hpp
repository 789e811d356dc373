#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clipxfer/env.hpp"
#include "clipxfer/error.hpp"
#include "clipxfer/policy.hpp"
#include "clipxfer/rng.hpp"

namespace clipxfer {

struct TrainConfig {
    double discount = 0.99;
    double learning_rate = 3e-3;
    double entropy_bonus = 0.01;
    double baseline_decay = 0.99;
    int convergence_window = 50;
    double convergence_slack = 1.2;
    int max_episodes = 20000;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(discount > 0.0 && discount <= 1.0)) throw ParameterError("discount must lie in (0, 1]");
        if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
        if (!(convergence_slack >= 1.0)) throw ParameterError("convergence_slack must be >= 1");
        if (convergence_window < 1) throw ParameterError("convergence_window must be >= 1");
        if (max_episodes < 1) throw ParameterError("max_episodes must be >= 1");
        if (!(baseline_decay >= 0.0 && baseline_decay < 1.0)) throw ParameterError("baseline_decay must lie in [0, 1)");
    }
};

struct EpisodeRecord {
    int episode = 0;
    int steps = 0;
    double undiscounted_return = 0.0;
};

struct LearningCurve {
    std::vector<EpisodeRecord> episodes;
    long long env_steps_to_convergence = 0;  // total steps when training stopped
    bool converged = false;

    int episodes_run() const { return static_cast<int>(episodes.size()); }
};

/// One visited (state, action) pair of a finished rollout.
struct Transition {
    Cell agent;
    Action action = Action::Up;
    double reward = 0.0;
};

/// Discounted reward-to-go for each step of an episode.
inline std::vector<double> discounted_returns(std::span<const Transition> episode, double discount) {
    std::vector<double> g(episode.size());
    double acc = 0.0;
    for (std::size_t t = episode.size(); t-- > 0;) {
        acc = episode[t].reward + discount * acc;
        g[t] = acc;
    }
    return g;
}

/// REINFORCE surrogate of one episode with fixed advantages:
///   sum_t advantage_t * log pi(a_t | s_t) + entropy_bonus * sum_t H(pi(. | s_t)).
inline double surrogate_objective(const PolicyNetwork& policy, int n, std::span<const Transition> episode,
                                  std::span<const double> advantages, double entropy_bonus) {
    double j = 0.0;
    for (std::size_t t = 0; t < episode.size(); ++t) {
        const auto x = state_features(episode[t].agent, n);
        const auto p = softmax(forward(policy, x).logits());
        j += advantages[t] * std::log(p[static_cast<int>(episode[t].action)]) + entropy_bonus * entropy(p);
    }
    return j;
}

/// Gradient of `surrogate_objective` with respect to the flat weights.
inline std::vector<double> surrogate_gradient(const PolicyNetwork& policy, int n, std::span<const Transition> episode,
                                              std::span<const double> advantages, double entropy_bonus) {
    std::vector<double> grad(policy.weights.size(), 0.0);
    std::array<double, kNumActions> dlogits{};
    for (std::size_t t = 0; t < episode.size(); ++t) {
        const auto x = state_features(episode[t].agent, n);
        const auto pass = forward(policy, x);
        const auto p = softmax(pass.logits());
        const double h = entropy(p);
        const int taken = static_cast<int>(episode[t].action);
        for (int a = 0; a < kNumActions; ++a) {
            // d log p_taken / dz_a = [a == taken] - p_a ; dH/dz_a = -p_a (log p_a + H)
            const double dlogp = (a == taken ? 1.0 : 0.0) - p[a];
            const double dh = p[a] > 0.0 ? -p[a] * (std::log(p[a]) + h) : 0.0;
            dlogits[a] = advantages[t] * dlogp + entropy_bonus * dh;
        }
        backward(policy, pass, dlogits, grad);
    }
    return grad;
}

/// Adam, used in ascent direction.
class Adam {
public:
    Adam(std::size_t size, double learning_rate) : lr_(learning_rate), m_(size, 0.0), v_(size, 0.0) {}

    void ascend(std::span<double> params, std::span<const double> grad) {
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, t_);
        const double c2 = 1.0 - std::pow(kBeta2, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
            v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
            params[i] += lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
        }
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
    double lr_;
    long t_ = 0;
    std::vector<double> m_, v_;
};

/// Samples one episode with the current policy.
inline std::vector<Transition> rollout(const PolicyNetwork& policy, const GridSpec& spec, Rng& rng) {
    std::vector<Transition> episode;
    EnvState s = reset(spec, rng);
    while (!s.done) {
        const auto x = state_features(s.agent, spec.size);
        const auto p = softmax(forward(policy, x).logits());
        double u = rng.uniform();
        int a = 0;
        while (a + 1 < kNumActions && u >= p[a]) u -= p[a++];
        const auto result = step(s, kActions[a], spec);
        episode.push_back({s.agent, kActions[a], result.reward});
        s = result.state;
    }
    return episode;
}

/// REINFORCE with an exponential-moving-average scalar baseline and an entropy
/// bonus. Stops once the mean length of the trailing `convergence_window`
/// episodes is within `convergence_slack` of the optimal expected length, or
/// after `max_episodes` (then `converged` is false).
struct TrainResult {
    PolicyNetwork policy;
    LearningCurve curve;
};

inline TrainResult train_policy(const GridSpec& spec, const TrainConfig& config,
                                const std::optional<PolicyNetwork>& init = std::nullopt) {
    spec.validate();
    config.validate();
    const Architecture arch = Architecture::for_grid(spec.size);
    if (init && !(init->arch == arch))
        throw ShapeError("initial policy architecture " + init->arch.to_string() + " does not match " +
                         arch.to_string());

    PolicyNetwork policy = init ? *init : new_policy(arch, derive_seed({config.seed, 0x696e6974}));
    Rng rng(config.seed);
    Adam optimizer(policy.weights.size(), config.learning_rate);

    const double threshold = config.convergence_slack * optimal_expected_steps(spec);
    const auto window = static_cast<std::size_t>(config.convergence_window);

    LearningCurve curve;
    curve.episodes.reserve(static_cast<std::size_t>(std::min(config.max_episodes, 100000)));
    std::optional<double> baseline;
    long long total_steps = 0;
    long long window_steps = 0;

    for (int ep = 0; ep < config.max_episodes; ++ep) {
        const auto episode = rollout(policy, spec, rng);
        const auto returns = discounted_returns(episode, config.discount);
        double mean_return = 0.0;
        for (double g : returns) mean_return += g;
        mean_return /= static_cast<double>(returns.size());
        if (!baseline) baseline = mean_return;

        std::vector<double> advantages(returns.size());
        for (std::size_t t = 0; t < returns.size(); ++t) advantages[t] = returns[t] - *baseline;
        const auto grad = surrogate_gradient(policy, spec.size, episode, advantages, config.entropy_bonus);
        optimizer.ascend(policy.weights, grad);
        *baseline = config.baseline_decay * *baseline + (1.0 - config.baseline_decay) * mean_return;

        double undiscounted = 0.0;
        for (const auto& tr : episode) undiscounted += tr.reward;
        const int len = static_cast<int>(episode.size());
        curve.episodes.push_back({ep, len, undiscounted});
        total_steps += len;
        window_steps += len;
        if (curve.episodes.size() > window) window_steps -= curve.episodes[curve.episodes.size() - 1 - window].steps;

        if (curve.episodes.size() >= window &&
            static_cast<double>(window_steps) / static_cast<double>(window) <= threshold) {
            curve.converged = true;
            break;
        }
    }
    for (double w : policy.weights)
        if (!std::isfinite(w)) throw NumericError("policy training diverged (non-finite weights)");
    curve.env_steps_to_convergence = total_steps;
    return {std::move(policy), std::move(curve)};
}

}  // namespace clipxfer
