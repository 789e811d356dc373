#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "clipxfer/trainer.hpp"

using namespace clipxfer;

namespace {

double trailing_mean(const LearningCurve& c, int end, int window) {
    end = std::min(end, c.episodes_run());
    const int begin = std::max(0, end - window);
    double s = 0.0;
    for (int i = begin; i < end; ++i) s += c.episodes[i].steps;
    return s / (end - begin);
}

}  // namespace

TEST(DiscountedReturns, RewardToGo) {
    const std::vector<Transition> ep{{{0, 2}, Action::Left, -0.01}, {{0, 1}, Action::Left, 1.0}};
    const auto g = discounted_returns(ep, 0.5);
    EXPECT_DOUBLE_EQ(g[1], 1.0);
    EXPECT_DOUBLE_EQ(g[0], -0.01 + 0.5);
}

TEST(SurrogateGradient, MatchesFiniteDifferences) {
    const Architecture arch;
    const std::vector<Transition> episode{
        {{3, 4}, Action::Up, -0.01}, {{2, 4}, Action::Left, -0.01}, {{2, 3}, Action::Right, 1.0}};
    const std::vector<double> adv{0.7, -0.4, 1.3};
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto p = new_policy(arch, seed);
        const auto g = surrogate_gradient(p, 8, episode, adv, 0.05);
        Rng rng(seed + 100);
        double worst = 0.0;
        for (int k = 0; k < 20; ++k) {
            const auto i = rng.below(p.weights.size());
            const double saved = p.weights[i];
            const double h = 1e-5;
            p.weights[i] = saved + h;
            const double up = surrogate_objective(p, 8, episode, adv, 0.05);
            p.weights[i] = saved - h;
            const double down = surrogate_objective(p, 8, episode, adv, 0.05);
            p.weights[i] = saved;
            const double numeric = (up - down) / (2 * h);
            worst = std::max(worst, std::abs(g[i] - numeric) / std::max({std::abs(g[i]), std::abs(numeric), 1e-8}));
        }
        EXPECT_LE(worst, 1e-4) << "seed " << seed;
    }
}

TEST(Rollout, RespectsCapAndReward) {
    const auto spec = GridSpec::make(8, {0, 0});
    const auto p = new_policy(Architecture{}, 9);
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
        const auto ep = rollout(p, spec, rng);
        ASSERT_FALSE(ep.empty());
        EXPECT_LE(static_cast<int>(ep.size()), spec.episode_cap);
        for (std::size_t t = 0; t + 1 < ep.size(); ++t) EXPECT_DOUBLE_EQ(ep[t].reward, spec.step_cost);
    }
}

TEST(TrainPolicy, UndiscountedReturnDefinition) {
    auto spec = GridSpec::make(3, {0, 0});
    spec.start_exclusions = {{0, 2}, {1, 1}, {1, 2}, {2, 0}, {2, 1}, {2, 2}};
    TrainConfig cfg;
    cfg.discount = 1.0;
    cfg.max_episodes = 200;
    cfg.seed = 1;
    const auto r = train_policy(spec, cfg);
    for (const auto& e : r.curve.episodes) {
        const bool reached = e.steps < spec.episode_cap;
        if (reached) {
            EXPECT_NEAR(e.undiscounted_return, spec.goal_reward + spec.step_cost * (e.steps - 1), 1e-12);
        }
    }
}

TEST(TrainPolicy, ConvergesFromScratchOn8x8) {
    const auto spec = GridSpec::make(8, {0, 7});
    TrainConfig cfg;
    cfg.seed = 21;
    const auto r = train_policy(spec, cfg);
    EXPECT_TRUE(r.curve.converged);
    EXPECT_LT(r.curve.episodes_run(), cfg.max_episodes);
    EXPECT_LE(trailing_mean(r.curve, r.curve.episodes_run(), cfg.convergence_window),
              cfg.convergence_slack * optimal_expected_steps(spec));
    long long total = 0;
    for (const auto& e : r.curve.episodes) total += e.steps;
    EXPECT_EQ(total, r.curve.env_steps_to_convergence);
}

TEST(TrainPolicy, WarmStartFromConvergedPolicy) {
    const auto spec = GridSpec::make(8, {0, 1});
    TrainConfig cfg;
    cfg.seed = 5;
    const auto first = train_policy(spec, cfg);
    ASSERT_TRUE(first.curve.converged);
    cfg.seed = 6;
    const auto again = train_policy(spec, cfg, first.policy);
    EXPECT_TRUE(again.curve.converged);
    EXPECT_LE(again.curve.episodes_run(), 5 * cfg.convergence_window);
    EXPECT_LT(3 * again.curve.episodes_run(), first.curve.episodes_run());
}

TEST(TrainPolicy, Deterministic) {
    const auto spec = GridSpec::make(8, {0, 3});
    TrainConfig cfg;
    cfg.seed = 8;
    cfg.max_episodes = 300;
    const auto a = train_policy(spec, cfg);
    const auto b = train_policy(spec, cfg);
    EXPECT_EQ(a.policy.weights, b.policy.weights);
    ASSERT_EQ(a.curve.episodes_run(), b.curve.episodes_run());
    for (int i = 0; i < a.curve.episodes_run(); ++i) EXPECT_EQ(a.curve.episodes[i].steps, b.curve.episodes[i].steps);
}

TEST(TrainPolicy, ExhaustedBudgetIsNotAnError) {
    const auto spec = GridSpec::make(10, {0, 9});
    TrainConfig cfg;
    cfg.max_episodes = 5;
    const auto r = train_policy(spec, cfg);
    EXPECT_FALSE(r.curve.converged);
    EXPECT_EQ(r.curve.episodes_run(), 5);
}

TEST(TrainPolicy, RejectsForeignArchitecture) {
    PolicyNetwork odd{Architecture{{2, 8, 4}}, std::vector<double>(Architecture{{2, 8, 4}}.parameter_count(), 0.0)};
    EXPECT_THROW(train_policy(GridSpec::make(8, {0, 0}), TrainConfig{}, odd), ShapeError);
    TrainConfig bad;
    bad.learning_rate = 0.0;
    EXPECT_THROW(train_policy(GridSpec::make(8, {0, 0}), bad), ParameterError);
}

TEST(TrainPolicy, EpisodeLengthsShrink) {
    const auto spec = GridSpec::make(8, {0, 0});
    int improved = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        TrainConfig cfg;
        cfg.seed = 1000 + seed;
        cfg.max_episodes = 5000;
        const auto r = train_policy(spec, cfg);
        const double early = trailing_mean(r.curve, 100, cfg.convergence_window);
        const double late = trailing_mean(r.curve, 5000, cfg.convergence_window);
        improved += late < early ? 1 : 0;
    }
    EXPECT_GE(improved, 9);
}
