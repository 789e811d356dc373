#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "clipxfer/env.hpp"

using namespace clipxfer;

TEST(InstructionToGoal, ProtocolGoals) {
    EXPECT_EQ(instruction_to_goal("top right first", 10), (Cell{0, 9}));
    EXPECT_EQ(instruction_to_goal("top left first", 8), (Cell{0, 0}));
    EXPECT_EQ(instruction_to_goal("top right third", 10), (Cell{0, 7}));
    EXPECT_EQ(instruction_to_goal("top left second", 10), (Cell{0, 1}));
    EXPECT_EQ(instruction_to_goal("  Top   RIGHT second ", 8), (Cell{0, 6}));
}

TEST(InstructionToGoal, BijectionOverColumns) {
    for (int n = 2; n <= 10; ++n) {
        for (const char* side : {"left", "right"}) {
            std::set<int> cols;
            for (int k = 0; k < n; ++k) {
                const auto g = instruction_to_goal(std::string("top ") + side + " " + std::string(kOrdinals[k]), n);
                EXPECT_EQ(g.row, 0);
                cols.insert(g.col);
            }
            EXPECT_EQ(static_cast<int>(cols.size()), n);
            EXPECT_EQ(*cols.begin(), 0);
            EXPECT_EQ(*cols.rbegin(), n - 1);
        }
    }
}

TEST(InstructionToGoal, ErrorsNameTheToken) {
    auto message = [](const char* text, int n) -> std::string {
        try {
            instruction_to_goal(text, n);
        } catch (const ParseError& e) {
            return e.what();
        }
        return "";
    };
    EXPECT_NE(message("bottom left first", 8).find("bottom"), std::string::npos);
    EXPECT_NE(message("top middle first", 8).find("middle"), std::string::npos);
    EXPECT_NE(message("top left zeroth", 8).find("zeroth"), std::string::npos);
    EXPECT_NE(message("top left third", 2).find("third"), std::string::npos);
    EXPECT_NE(message("top left", 8), "");
}

TEST(Instruction, NormalizesAndBuildsId) {
    const auto ins = Instruction::make("  Top Left\tFirst ");
    EXPECT_EQ(ins.text, "top left first");
    EXPECT_EQ(ins.task_id, "top_left_first");
    EXPECT_THROW(Instruction::make("   "), ParseError);
}

TEST(GridSpec, ValidatesParameters) {
    EXPECT_THROW(GridSpec::make(1, {0, 0}), ParameterError);
    EXPECT_THROW(GridSpec::make(4, {0, 4}), ParameterError);
    auto spec = GridSpec::make(4, {0, 0});
    EXPECT_EQ(spec.episode_cap, 32);
    spec.episode_cap = 5;
    EXPECT_THROW(spec.validate(), ParameterError);
}

TEST(Reset, NeverStartsOnGoal) {
    const auto spec = GridSpec::make(8, {0, 0});
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed);
        for (int i = 0; i < 100; ++i) {
            const auto s = reset(spec, rng);
            EXPECT_NE(s.agent, spec.goal);
            EXPECT_EQ(s.steps_taken, 0);
            EXPECT_FALSE(s.done);
        }
    }
}

TEST(Reset, Deterministic) {
    const auto spec = GridSpec::make(8, {0, 5});
    Rng a(99), b(99);
    for (int i = 0; i < 200; ++i) EXPECT_EQ(reset(spec, a).agent, reset(spec, b).agent);
}

TEST(Reset, UniformOverStartCells) {
    const auto spec = GridSpec::make(10, {0, 9});
    Rng rng(2024);
    std::map<std::pair<int, int>, int> counts;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) {
        const auto c = reset(spec, rng).agent;
        ++counts[{c.row, c.col}];
    }
    ASSERT_EQ(counts.size(), 99u);
    const double expected = draws / 99.0;
    double chi2 = 0.0;
    for (const auto& [_, k] : counts) chi2 += (k - expected) * (k - expected) / expected;
    // 98 degrees of freedom: the 0.99 quantile is about 133.5.
    EXPECT_LT(chi2, 133.48);
}

TEST(Step, ReachesGoalFromNeighbour) {
    const auto spec = GridSpec::make(8, {0, 0});
    const auto r = step(EnvState{{0, 1}, 0, false}, Action::Left, spec);
    EXPECT_EQ(r.state.agent, (Cell{0, 0}));
    EXPECT_DOUBLE_EQ(r.reward, spec.goal_reward);
    EXPECT_TRUE(r.done);
}

TEST(Step, ClampsAtWalls) {
    const auto spec = GridSpec::make(8, {7, 7});
    const auto r = step(EnvState{{0, 0}, 0, false}, Action::Up, spec);
    EXPECT_EQ(r.state.agent, (Cell{0, 0}));
    EXPECT_DOUBLE_EQ(r.reward, spec.step_cost);
    EXPECT_FALSE(r.done);
}

TEST(Step, EpisodeCapEndsEpisode) {
    const auto spec = GridSpec::make(8, {0, 0});
    EnvState s{{5, 5}, 0, false};
    const Action cycle[] = {Action::Down, Action::Up};
    for (int i = 0; i < 64; ++i) {
        ASSERT_FALSE(s.done);
        s = step(s, cycle[i % 2], spec).state;
    }
    EXPECT_TRUE(s.done);
    EXPECT_NE(s.agent, spec.goal);
    EXPECT_EQ(s.steps_taken, 64);
    EXPECT_THROW(step(s, Action::Up, spec), UsageError);
}

TEST(Step, MovesStayInBounds) {
    for (int n : {2, 5, 9}) {
        const auto spec = GridSpec::make(n, {0, 0});
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                for (Action a : kActions) EXPECT_TRUE(spec.in_bounds(move({r, c}, a, n)));
    }
}

TEST(Step, GreedyReturnMatchesDistance) {
    for (int n = 2; n <= 10; ++n) {
        const auto spec = GridSpec::make(n, {0, n / 2});
        for (const auto& start : spec.start_cells()) {
            EnvState s{start, 0, false};
            double ret = 0.0;
            while (!s.done) {
                Action a = s.agent.row > spec.goal.row ? Action::Up
                           : s.agent.col < spec.goal.col ? Action::Right
                                                          : Action::Left;
                const auto r = step(s, a, spec);
                ret += r.reward;
                s = r.state;
            }
            const int d = manhattan(start, spec.goal);
            EXPECT_NEAR(ret, spec.goal_reward + spec.step_cost * (d - 1), 1e-12);
            EXPECT_EQ(s.steps_taken, d);
        }
    }
}

TEST(OptimalExpectedSteps, HandValues) {
    EXPECT_DOUBLE_EQ(optimal_expected_steps(GridSpec::make(2, {0, 0})), 4.0 / 3.0);
    // 8x8 corner: mean of (r + c) over 63 non-goal cells = 448 / 63.
    EXPECT_DOUBLE_EQ(optimal_expected_steps(GridSpec::make(8, {0, 0})), 448.0 / 63.0);
}

TEST(ObjectGrid, DefaultLayout) {
    const auto tasks = build_object_grid({"red", "blue", "green"}, {"box", "cone"}, 9);
    ASSERT_EQ(tasks.instructions.size(), 6u);
    ASSERT_EQ(tasks.grid.objects.size(), 6u);
    const auto& g = tasks.grid;
    const auto rb = g.objects[g.find("red", "box")].cell;
    const auto rc = g.objects[g.find("red", "cone")].cell;
    const auto bc = g.objects[g.find("blue", "cone")].cell;
    EXPECT_LE(rb.col, 2);
    EXPECT_LE(rc.col, 2);
    EXPECT_EQ(rb.col, rc.col);
    EXPECT_EQ(rb.row, 1);
    EXPECT_EQ(rc.row, 4);
    EXPECT_LT(manhattan(rc, rb), manhattan(rc, bc));
    EXPECT_EQ(tasks.instructions[g.find("blue", "cone")].text, "go to the blue cone");
    for (std::size_t i = 0; i < 6; ++i)
        EXPECT_EQ(object_instruction_to_goal(tasks.instructions[i].text, g), g.objects[i].cell);
}

TEST(ObjectGrid, SingleObject) {
    const auto tasks = build_object_grid({"red"}, {"box"}, 4);
    ASSERT_EQ(tasks.instructions.size(), 1u);
    EXPECT_EQ(tasks.grid.task(0).goal, tasks.grid.objects[0].cell);
}

TEST(ObjectGrid, StartCellsAvoidObjects) {
    const auto tasks = build_object_grid({"red", "blue", "green"}, {"box", "cone"}, 9);
    const auto spec = tasks.grid.task(0);
    EXPECT_EQ(spec.start_cells().size(), 81u - 6u);
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const auto c = reset(spec, rng).agent;
        for (const auto& o : tasks.grid.objects) EXPECT_NE(c, o.cell);
    }
}

TEST(ObjectGrid, FixedStart) {
    auto tasks = build_object_grid({"red", "blue"}, {"box", "cone"}, 8);
    tasks.grid.start = Cell{7, 7};
    const auto spec = tasks.grid.task(1);
    ASSERT_EQ(spec.start_cells().size(), 1u);
    EXPECT_EQ(spec.start_cells()[0], (Cell{7, 7}));
}

TEST(ObjectGrid, Errors) {
    EXPECT_THROW(build_object_grid({"a", "b", "c", "d", "e"}, {"x"}, 4), ParameterError);
    EXPECT_THROW(build_object_grid({"red"}, {"a", "b", "c"}, 6), ParameterError);
    EXPECT_THROW(build_object_grid({}, {"box"}, 6), ParameterError);
    const auto tasks = build_object_grid({"red", "blue"}, {"box"}, 6);
    EXPECT_THROW(object_instruction_to_goal("go to the green box", tasks.grid), ParseError);
    EXPECT_THROW(object_instruction_to_goal("go to the red cone", tasks.grid), ParseError);
    EXPECT_THROW(object_instruction_to_goal("fetch the red box", tasks.grid), ParseError);
}
