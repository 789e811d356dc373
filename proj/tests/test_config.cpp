#include <gtest/gtest.h>

#include <sstream>

#include "clipxfer/config.hpp"

using namespace clipxfer;

namespace {

KeyValueConfig parse(const std::string& text) {
    std::istringstream in(text);
    return KeyValueConfig::parse(in);
}

}  // namespace

TEST(KeyValueConfig, ParsesSubset) {
    const auto c = parse(
        "# experiment\n"
        "trials = 3   # trailing comment\n"
        "target_instruction = \"top right # third\"\n"
        "grid_sizes = [8, 10]\n"
        "base_instructions = [\"top left first\", \"a, b\"]\n"
        "seed = 18446744073709551615\n"
        "\n"
        "[train]\n"
        "learning_rate = 3e-3\n"
        "[align]\n"
        "normalize = false\n");
    EXPECT_EQ(c.get_int("trials"), 3);
    EXPECT_EQ(c.get_string("target_instruction"), "top right # third");
    EXPECT_EQ(c.get_int_list("grid_sizes"), (std::vector<long long>{8, 10}));
    EXPECT_EQ(c.get_list("base_instructions"), (std::vector<std::string>{"top left first", "a, b"}));
    EXPECT_EQ(c.get_u64("seed"), 18446744073709551615ULL);
    EXPECT_DOUBLE_EQ(c.get_double("train.learning_rate"), 3e-3);
    EXPECT_FALSE(c.get_bool("align.normalize"));
    EXPECT_TRUE(c.has("align.normalize"));
    EXPECT_FALSE(c.has("normalize"));
    EXPECT_EQ(c.keys().size(), 7u);
    EXPECT_TRUE(parse("x = []\n").get_list("x").empty());
}

TEST(KeyValueConfig, ErrorsNameLine) {
    auto error_of = [](const std::string& text) -> std::string {
        try {
            parse(text);
        } catch (const FormatError& e) {
            return e.what();
        }
        return "accepted";
    };
    EXPECT_NE(error_of("a = 1\na = 2\n").find("line 2"), std::string::npos);
    EXPECT_NE(error_of("a = 1\n\njunk\n").find("line 3"), std::string::npos);
    EXPECT_NE(error_of("[train\n").find("line 1"), std::string::npos);
    EXPECT_NE(error_of(" = 4\n").find("line 1"), std::string::npos);
}

TEST(KeyValueConfig, TypedAccessErrors) {
    const auto c = parse("a = 1.5\nb = yes\nc = -3\nd = [1, x]\ne = \"open\n");
    EXPECT_THROW(c.get_int("a"), FormatError);
    EXPECT_THROW(c.get_bool("b"), FormatError);
    EXPECT_THROW(c.get_u64("c"), FormatError);
    EXPECT_THROW(c.get_int_list("d"), FormatError);
    EXPECT_THROW(c.get_string("e"), FormatError);
    EXPECT_THROW(c.get_double("b"), FormatError);
    EXPECT_THROW(c.get_string("missing"), LookupError);
    try {
        c.get_int("a");
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
    }
}
