#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "clipxfer/env.hpp"
#include "clipxfer/error.hpp"
#include "clipxfer/io.hpp"
#include "clipxfer/rng.hpp"

namespace clipxfer {

/// Layer widths of a tanh MLP, input first and logits last: {2, 32, 32, 4} by default.
struct Architecture {
    std::vector<int> widths{2, 32, 32, 4};

    std::size_t num_layers() const { return widths.size() - 1; }
    int fan_in(std::size_t layer) const { return widths[layer]; }
    int fan_out(std::size_t layer) const { return widths[layer + 1]; }

    std::size_t parameter_count() const {
        std::size_t p = 0;
        for (std::size_t l = 0; l < num_layers(); ++l)
            p += static_cast<std::size_t>(fan_in(l)) * fan_out(l) + fan_out(l);
        return p;
    }

    /// Offset of layer `l`'s weight block in the flat vector; its bias follows
    /// the fan_out x fan_in row-major matrix.
    std::size_t layer_offset(std::size_t layer) const {
        std::size_t p = 0;
        for (std::size_t l = 0; l < layer; ++l)
            p += static_cast<std::size_t>(fan_in(l)) * fan_out(l) + fan_out(l);
        return p;
    }

    void validate() const {
        if (widths.size() < 2) throw ShapeError("architecture needs at least input and output widths");
        if (widths.front() != 2) throw ShapeError("policy input width must be 2 (row, col)");
        if (widths.back() != kNumActions) throw ShapeError("policy output width must be 4 (actions)");
        for (int w : widths)
            if (w <= 0) throw ShapeError("layer widths must be positive");
    }

    /// The architecture shared by every task on an N x N grid.
    static Architecture for_grid(int /*n*/) { return Architecture{}; }

    std::string to_string() const {
        std::string s;
        for (std::size_t i = 0; i < widths.size(); ++i) s += (i ? " " : "") + std::to_string(widths[i]);
        return s;
    }

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// An MLP policy stored as one flat parameter vector in canonical order.
struct PolicyNetwork {
    Architecture arch;
    std::vector<double> weights;
};

inline PolicyNetwork new_policy(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    Rng rng(seed);
    PolicyNetwork p{arch, std::vector<double>(arch.parameter_count(), 0.0)};
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(arch.fan_in(l)));
        const std::size_t begin = arch.layer_offset(l);
        const std::size_t end = begin + static_cast<std::size_t>(arch.fan_in(l)) * arch.fan_out(l) + arch.fan_out(l);
        for (std::size_t i = begin; i < end; ++i) p.weights[i] = scale * rng.normal();
    }
    return p;
}

inline std::vector<double> flatten(const PolicyNetwork& policy) { return policy.weights; }

inline PolicyNetwork unflatten(const Architecture& arch, std::span<const double> weights) {
    arch.validate();
    if (weights.size() != arch.parameter_count())
        throw ShapeError("weight vector has " + std::to_string(weights.size()) + " entries, architecture " +
                         arch.to_string() + " needs " + std::to_string(arch.parameter_count()));
    return PolicyNetwork{arch, std::vector<double>(weights.begin(), weights.end())};
}

inline std::array<double, 2> state_features(Cell agent, int n) {
    const double scale = 1.0 / static_cast<double>(n - 1);
    return {agent.row * scale, agent.col * scale};
}

/// Activations of one forward pass; layer 0 is the input and the last entry the logits.
struct ForwardPass {
    std::vector<std::vector<double>> activations;

    std::span<const double> logits() const { return activations.back(); }
};

inline ForwardPass forward(const PolicyNetwork& policy, std::span<const double> input) {
    const auto& arch = policy.arch;
    ForwardPass pass;
    pass.activations.reserve(arch.widths.size());
    pass.activations.emplace_back(input.begin(), input.end());
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        const int in = arch.fan_in(l);
        const int out = arch.fan_out(l);
        const double* w = policy.weights.data() + arch.layer_offset(l);
        const double* b = w + static_cast<std::size_t>(in) * out;
        const auto& x = pass.activations.back();
        std::vector<double> y(static_cast<std::size_t>(out));
        const bool hidden = l + 1 < arch.num_layers();
        for (int o = 0; o < out; ++o) {
            double acc = b[o];
            const double* row = w + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) acc += row[i] * x[i];
            y[o] = hidden ? std::tanh(acc) : acc;
        }
        pass.activations.push_back(std::move(y));
    }
    return pass;
}

/// Accumulates d(objective)/d(weights) into `grad` given d(objective)/d(logits).
inline void backward(const PolicyNetwork& policy, const ForwardPass& pass, std::span<const double> dlogits,
                     std::span<double> grad) {
    const auto& arch = policy.arch;
    std::vector<double> delta(dlogits.begin(), dlogits.end());
    for (std::size_t l = arch.num_layers(); l-- > 0;) {
        const int in = arch.fan_in(l);
        const int out = arch.fan_out(l);
        const std::size_t off = arch.layer_offset(l);
        const double* w = policy.weights.data() + off;
        double* gw = grad.data() + off;
        double* gb = gw + static_cast<std::size_t>(in) * out;
        const auto& x = pass.activations[l];
        for (int o = 0; o < out; ++o) {
            gb[o] += delta[o];
            double* grow = gw + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) grow[i] += delta[o] * x[i];
        }
        if (l == 0) break;
        std::vector<double> prev(static_cast<std::size_t>(in), 0.0);
        for (int o = 0; o < out; ++o) {
            const double* row = w + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) prev[i] += row[i] * delta[o];
        }
        for (int i = 0; i < in; ++i) prev[i] *= 1.0 - x[i] * x[i];  // tanh'
        delta = std::move(prev);
    }
}

inline std::array<double, kNumActions> softmax(std::span<const double> logits) {
    std::array<double, kNumActions> p{};
    double mx = logits[0];
    for (int a = 1; a < kNumActions; ++a) mx = std::max(mx, logits[a]);
    double sum = 0.0;
    for (int a = 0; a < kNumActions; ++a) sum += p[a] = std::exp(logits[a] - mx);
    for (auto& v : p) v /= sum;
    return p;
}

inline std::array<double, kNumActions> action_distribution(const PolicyNetwork& policy, Cell agent, int n) {
    for (double w : policy.weights)
        if (!std::isfinite(w)) throw NumericError("policy has non-finite weights");
    const auto x = state_features(agent, n);
    return softmax(forward(policy, x).logits());
}

inline std::array<double, kNumActions> action_distribution(const PolicyNetwork& policy, const EnvState& state,
                                                           int n) {
    return action_distribution(policy, state.agent, n);
}

inline double entropy(const std::array<double, kNumActions>& p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

// ---------------------------------------------------------------------------
// POLICY v1 text format

inline void save_policy(std::ostream& out, const PolicyNetwork& policy) {
    out << "POLICY v1\n" << policy.arch.to_string() << '\n';
    for (double w : policy.weights) out << format_double(w) << '\n';
}

inline PolicyNetwork load_policy(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "POLICY v1") throw FormatError("line 1: expected 'POLICY v1'");
    if (!std::getline(in, line)) throw FormatError("line 2: missing architecture");
    Architecture arch;
    arch.widths.clear();
    {
        std::istringstream widths(line);
        for (int w; widths >> w;) arch.widths.push_back(w);
        if (!widths.eof()) throw FormatError("line 2: architecture must be integer widths");
    }
    try {
        arch.validate();
    } catch (const ShapeError& e) {
        throw FormatError(std::string("line 2: ") + e.what());
    }
    std::vector<double> weights;
    weights.reserve(arch.parameter_count());
    for (std::size_t lineno = 3; std::getline(in, line); ++lineno) {
        if (line.empty()) continue;
        const auto v = parse_double(line);
        if (!v) throw FormatError("line " + std::to_string(lineno) + ": not a finite number");
        weights.push_back(*v);
    }
    if (weights.size() != arch.parameter_count())
        throw FormatError("expected " + std::to_string(arch.parameter_count()) + " weights, found " +
                          std::to_string(weights.size()));
    return PolicyNetwork{arch, std::move(weights)};
}

}  // namespace clipxfer
