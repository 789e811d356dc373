#pragma once

#include <algorithm>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clipxfer/align.hpp"
#include "clipxfer/embed.hpp"
#include "clipxfer/env.hpp"
#include "clipxfer/error.hpp"
#include "clipxfer/policy.hpp"

namespace clipxfer {

/// How a target policy is initialized.
///   Scratch         fresh random weights
///   Language        raw instruction-embedding cosine
///   Clip            cosine between projected instruction embeddings
///   ClipCrossmodal  cosine between the projected target instruction and each projected source policy
enum class Strategy { Scratch, Language, Clip, ClipCrossmodal };

inline constexpr std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::Scratch: return "scratch";
        case Strategy::Language: return "language";
        case Strategy::Clip: return "clip";
        case Strategy::ClipCrossmodal: return "clip-crossmodal";
    }
    return "?";
}

inline Strategy parse_strategy(std::string_view name) {
    for (Strategy s : {Strategy::Scratch, Strategy::Language, Strategy::Clip, Strategy::ClipCrossmodal})
        if (to_string(s) == name) return s;
    throw ParseError("unknown strategy '" + std::string(name) + "'");
}

struct SimilarityEntry {
    std::string source;
    double raw = 0.0;         // d
    double clamped = 0.0;     // max(d, 0)
    double normalized = 0.0;  // clamped / sum(clamped), or 1/n on fallback
};

struct SimilarityProfile {
    std::string target;
    Strategy strategy = Strategy::Language;
    std::vector<SimilarityEntry> entries;
    bool uniform_fallback = false;  // every clamped weight was zero
};

/// Clamps negative similarities to zero and normalizes to a probability
/// vector; all-zero falls back to uniform weights.
inline SimilarityProfile make_profile(std::string target, Strategy strategy, const std::vector<Instruction>& sources,
                                      std::span<const double> raw) {
    if (sources.size() != raw.size()) throw ShapeError("one similarity per source required");
    if (sources.empty()) throw ShapeError("transfer needs at least one source task");
    SimilarityProfile profile{std::move(target), strategy, {}, false};
    double total = 0.0;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        const double w = std::max(raw[i], 0.0);
        total += w;
        profile.entries.push_back({sources[i].text, raw[i], w, 0.0});
    }
    profile.uniform_fallback = !(total > 0.0);
    const double uniform = 1.0 / static_cast<double>(sources.size());
    for (auto& e : profile.entries) e.normalized = profile.uniform_fallback ? uniform : e.clamped / total;
    return profile;
}

inline SimilarityProfile language_similarities(const Instruction& target, const std::vector<Instruction>& sources,
                                               const EmbeddingTable& table) {
    const auto t = table.lookup(target.text);
    std::vector<double> d;
    for (const auto& s : sources) d.push_back(cosine(t, table.lookup(s.text)));
    return make_profile(target.text, Strategy::Language, sources, d);
}

inline SimilarityProfile clip_similarities(const Instruction& target, const std::vector<Instruction>& sources,
                                           const AlignmentModel& model, const EmbeddingTable& table) {
    if (table.dim() != model.text_dim())
        throw ShapeError("embedding dimension " + std::to_string(table.dim()) + " does not match model input " +
                         std::to_string(model.text_dim()));
    const auto t = model.project_text(table.lookup(target.text));
    std::vector<double> d;
    for (const auto& s : sources) d.push_back(cosine(t, model.project_text(table.lookup(s.text))));
    return make_profile(target.text, Strategy::Clip, sources, d);
}

inline SimilarityProfile crossmodal_similarities(const Instruction& target, const std::vector<Instruction>& sources,
                                                 const AlignmentModel& model, const EmbeddingTable& table,
                                                 const std::vector<PolicyNetwork>& policies) {
    if (table.dim() != model.text_dim())
        throw ShapeError("embedding dimension " + std::to_string(table.dim()) + " does not match model input " +
                         std::to_string(model.text_dim()));
    if (policies.size() != sources.size()) throw ShapeError("one policy per source required");
    const auto t = model.project_text(table.lookup(target.text));
    std::vector<double> d;
    for (const auto& p : policies) d.push_back(cosine(t, model.project_policy(p.weights)));
    return make_profile(target.text, Strategy::ClipCrossmodal, sources, d);
}

struct BlendedInit {
    PolicyNetwork policy;
    SimilarityProfile provenance;
};

/// Elementwise sum of source weight vectors scaled by the profile's normalized weights.
inline BlendedInit blend(const SimilarityProfile& profile, const std::vector<PolicyNetwork>& policies) {
    if (policies.size() != profile.entries.size())
        throw ShapeError("blend got " + std::to_string(policies.size()) + " policies for " +
                         std::to_string(profile.entries.size()) + " similarity entries");
    if (policies.empty()) throw ShapeError("blend needs at least one policy");
    const Architecture& arch = policies[0].arch;
    for (const auto& p : policies)
        if (!(p.arch == arch) || p.weights.size() != arch.parameter_count())
            throw ShapeError("blend sources have different architectures");
    std::vector<double> w(arch.parameter_count(), 0.0);
    for (std::size_t k = 0; k < policies.size(); ++k) {
        const double c = profile.entries[k].normalized;
        if (c == 0.0) continue;
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += c * policies[k].weights[i];
    }
    return BlendedInit{PolicyNetwork{arch, std::move(w)}, profile};
}

}  // namespace clipxfer
