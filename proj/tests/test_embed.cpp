#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "clipxfer/embed.hpp"

using namespace clipxfer;

namespace {

std::set<std::string> features(const std::string& text) {
    std::set<std::string> out;
    for (const auto& w : split_words(normalize_text(text))) {
        out.insert("w:" + w);
        const auto padded = "<" + w + ">";
        for (std::size_t i = 0; i + 3 <= padded.size(); ++i) out.insert("t:" + padded.substr(i, 3));
    }
    return out;
}

std::string random_sentence(Rng& rng) {
    std::string s;
    const auto words = 1 + rng.below(4);
    for (std::uint64_t w = 0; w < words; ++w) {
        if (w) s += ' ';
        const auto len = 2 + rng.below(7);
        for (std::uint64_t i = 0; i < len; ++i) s += static_cast<char>('a' + rng.below(26));
    }
    return s;
}

}  // namespace

TEST(Encode, UnitNormAndDeterministic) {
    const auto a = encode("top left first");
    const auto b = encode("top left first");
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(a.dim(), 64u);
    EXPECT_NEAR(norm2(a.values), 1.0, 1e-12);
    EXPECT_EQ(encode("  TOP left   first").values, a.values);
}

TEST(Encode, FrozenValues) {
    // Guards the hash layout against accidental change.
    const auto v = encode("top left first");
    std::size_t nonzero = 0;
    for (double x : v.values) nonzero += x != 0.0 ? 1 : 0;
    EXPECT_GT(nonzero, 10u);
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Encode, TokenOverlapRaisesSimilarity) {
    EXPECT_GT(cosine(encode("top left first"), encode("top left second")),
              cosine(encode("top left first"), encode("go to the red cone")));
}

TEST(Encode, BaseInstructionsDistinguishable) {
    const char* texts[] = {"top left first", "top left second", "top right first", "top right second"};
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) EXPECT_LT(cosine(encode(texts[i]), encode(texts[j])), 0.999);
}

TEST(Encode, GrammarInstructionsEncode) {
    for (const char* side : {"left", "right"})
        for (auto ordinal : kOrdinals)
            EXPECT_NEAR(norm2(encode(std::string("top ") + side + " " + std::string(ordinal)).values), 1.0, 1e-9);
    for (const char* color : {"red", "blue", "green", "yellow", "purple"})
        for (const char* shape : {"box", "cone", "ball", "key"})
            EXPECT_NEAR(norm2(encode(std::string("go to the ") + color + " " + shape).values), 1.0, 1e-9);
}

TEST(Encode, RejectsEmpty) {
    EXPECT_THROW(encode(""), EncodeError);
    EXPECT_THROW(encode(" \t "), EncodeError);
}

TEST(Encode, CollisionBound) {
    Rng rng(12345);
    int pairs = 0;
    double worst = 0.0;
    while (pairs < 1000) {
        const auto a = random_sentence(rng);
        const auto b = random_sentence(rng);
        const auto fa = features(a);
        bool shared = false;
        for (const auto& f : features(b)) shared = shared || fa.contains(f);
        if (shared) continue;
        EmbeddingVector ea, eb;
        try {
            ea = encode(a);
            eb = encode(b);
        } catch (const NumericError&) {
            continue;  // features cancelled out: no cosine is defined
        }
        ++pairs;
        worst = std::max(worst, std::abs(cosine(ea, eb)));
    }
    EXPECT_LE(worst, 0.35);
}

TEST(Cosine, SymmetricAndScaleInvariant) {
    const auto a = encode("go to the red box");
    const auto b = encode("go to the blue cone");
    EXPECT_DOUBLE_EQ(cosine(a, b), cosine(b, a));
    auto scaled = a;
    for (auto& x : scaled.values) x *= 3.5;
    EXPECT_NEAR(cosine(scaled, b), cosine(a, b), 1e-15);
    EXPECT_NEAR(cosine(a, a), 1.0, 1e-15);
}

TEST(Cosine, Errors) {
    const std::vector<double> zero(4, 0.0), one{1, 0, 0, 0}, short_v{1, 0};
    EXPECT_THROW(cosine(zero, one), NumericError);
    EXPECT_THROW(cosine(one, short_v), ShapeError);
}

TEST(EmbeddingTable, BuiltinEncodesOnDemand) {
    EmbeddingTable t;
    EXPECT_EQ(t.source(), EmbeddingSource::Builtin);
    EXPECT_EQ(t.lookup("Top Left First").values, encode("top left first").values);
}

TEST(ImportEmbeddings, WellFormed) {
    std::istringstream in(
        "# four rows\n"
        "top left first\t1 0 0\n"
        "top left second\t0 2 0\n"
        "\n"
        "top right first\t0 0 3\n"
        "top right second\t1 1 0\n");
    const auto t = import_embeddings(in);
    EXPECT_EQ(t.size(), 4u);
    EXPECT_EQ(t.dim(), 3u);
    EXPECT_EQ(t.source(), EmbeddingSource::Imported);
    EXPECT_NEAR(t.lookup("top left second").values[1], 1.0, 1e-15);
    EXPECT_NEAR(t.lookup("top right second").values[0], std::sqrt(0.5), 1e-15);
    EXPECT_THROW(t.lookup("top right third"), LookupError);
}

TEST(ImportEmbeddings, ErrorsNameLine) {
    auto error_of = [](const std::string& text) -> std::string {
        std::istringstream in(text);
        try {
            import_embeddings(in);
        } catch (const FormatError& e) {
            return e.what();
        }
        return "accepted";
    };
    std::string d64, d63;
    for (int i = 0; i < 64; ++i) d64 += (i ? " " : "") + std::string("0.5");
    for (int i = 0; i < 63; ++i) d63 += (i ? " " : "") + std::string("0.5");
    EXPECT_NE(error_of("a\t" + d64 + "\nb\t" + d63 + "\n").find("line 2"), std::string::npos);
    EXPECT_NE(error_of("a\t1 2\n# c\nb\t1 x\n").find("line 3"), std::string::npos);
    EXPECT_NE(error_of("a\t1 2\na\t2 1\n").find("line 2"), std::string::npos);
    EXPECT_NE(error_of("a 1 2\n").find("line 1"), std::string::npos);
    EXPECT_NE(error_of("a\t0 0\n").find("line 1"), std::string::npos);
}
