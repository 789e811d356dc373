#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "clipxfer/policy.hpp"

using namespace clipxfer;

TEST(Architecture, DefaultShape) {
    const Architecture arch;
    EXPECT_EQ(arch.parameter_count(), 1284u);
    EXPECT_EQ(arch.layer_offset(1), 96u);
    EXPECT_EQ(arch.layer_offset(2), 96u + 1056u);
    EXPECT_EQ(Architecture::for_grid(8), Architecture::for_grid(25));
    EXPECT_EQ(arch.to_string(), "2 32 32 4");
}

TEST(NewPolicy, SeededAndSized) {
    const Architecture arch;
    const auto a = new_policy(arch, 11);
    const auto b = new_policy(arch, 11);
    const auto c = new_policy(arch, 12);
    EXPECT_EQ(a.weights.size(), 1284u);
    EXPECT_EQ(a.weights, b.weights);
    EXPECT_NE(a.weights, c.weights);
}

TEST(Flatten, CanonicalOrderAndRoundTrip) {
    const Architecture arch;
    auto p = new_policy(arch, 5);
    auto flat = flatten(p);
    // Weight (hidden unit 0, input 0) comes first: probe it through the forward pass.
    std::vector<double> zeros(flat.size(), 0.0);
    zeros[0] = 1.0;
    const auto probe = unflatten(arch, zeros);
    const double in[2] = {0.5, 0.0};
    EXPECT_DOUBLE_EQ(forward(probe, in).activations[1][0], std::tanh(0.5));
    EXPECT_DOUBLE_EQ(forward(probe, in).activations[1][1], 0.0);

    const auto back = unflatten(arch, flat);
    EXPECT_EQ(back.weights, p.weights);
    EXPECT_EQ(flatten(back), flat);
    flat.pop_back();
    EXPECT_THROW(unflatten(arch, flat), ShapeError);
}

TEST(ActionDistribution, ZeroWeightsAreUniform) {
    const Architecture arch;
    const auto p = unflatten(arch, std::vector<double>(arch.parameter_count(), 0.0));
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
            const auto d = action_distribution(p, Cell{r, c}, 8);
            for (double v : d) EXPECT_DOUBLE_EQ(v, 0.25);
            EXPECT_NEAR(entropy(d), std::log(4.0), 1e-15);
        }
}

TEST(ActionDistribution, SumsToOne) {
    const Architecture arch;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto p = new_policy(arch, seed);
        for (int r = 0; r < 10; ++r) {
            const auto d = action_distribution(p, EnvState{{r, 9 - r}, 0, false}, 10);
            EXPECT_NEAR(d[0] + d[1] + d[2] + d[3], 1.0, 1e-12);
            EXPECT_LT(entropy(d), std::log(4.0));
        }
    }
}

TEST(ActionDistribution, BiasSaturation) {
    const Architecture arch;
    for (int a = 0; a < kNumActions; ++a) {
        auto p = new_policy(arch, 3);
        p.weights[arch.parameter_count() - kNumActions + a] += 10.0;
        EXPECT_GT(action_distribution(p, Cell{2, 3}, 8)[a], 0.99);
    }
}

TEST(ActionDistribution, RejectsNonFinite) {
    auto p = new_policy(Architecture{}, 1);
    p.weights[17] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(action_distribution(p, Cell{0, 0}, 8), NumericError);
}

TEST(StateFeatures, CornersMapToUnitSquare) {
    for (int n : {2, 8, 25}) {
        const auto f = state_features({n - 1, 0}, n);
        EXPECT_DOUBLE_EQ(f[0], 1.0);
        EXPECT_DOUBLE_EQ(f[1], 0.0);
    }
}

TEST(PolicyFile, RoundTripIsBitExact) {
    auto p = new_policy(Architecture{}, 77);
    p.weights[0] = 1e-310;
    p.weights[1] = -0.0;
    p.weights[2] = 1.0 / 3.0;
    std::stringstream s;
    save_policy(s, p);
    const auto q = load_policy(s);
    ASSERT_EQ(q.weights.size(), p.weights.size());
    EXPECT_EQ(q.arch, p.arch);
    for (std::size_t i = 0; i < p.weights.size(); ++i)
        EXPECT_EQ(std::memcmp(&p.weights[i], &q.weights[i], sizeof(double)), 0) << i;
}

TEST(PolicyFile, ErrorsCarryLineNumbers) {
    auto expect_line = [](const std::string& text, const std::string& where) {
        std::istringstream in(text);
        try {
            load_policy(in);
            FAIL() << "accepted: " << text;
        } catch (const FormatError& e) {
            EXPECT_NE(std::string(e.what()).find(where), std::string::npos) << e.what();
        }
    };
    expect_line("POLICY v2\n", "line 1");
    expect_line("POLICY v1\n2 x 4\n", "line 2");
    expect_line("POLICY v1\n3 4\n", "line 2");
    expect_line("POLICY v1\n2 4\n0.5\nabc\n", "line 4");
    expect_line("POLICY v1\n2 4\n0.5\n", "expected 12");
}
