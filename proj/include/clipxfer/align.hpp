#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "clipxfer/embed.hpp"
#include "clipxfer/error.hpp"
#include "clipxfer/io.hpp"
#include "clipxfer/rng.hpp"

namespace clipxfer {

/// Affine map R^input_dim -> R^output_dim. Parameters are stored flat: the
/// output_dim x input_dim weight matrix row-major, then the bias.
struct ProjectionHead {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    std::vector<double> params;

    double weight(std::size_t k, std::size_t i) const { return params[k * input_dim + i]; }
    double bias(std::size_t k) const { return params[output_dim * input_dim + k]; }
    std::size_t parameter_count() const { return output_dim * (input_dim + 1); }

    static ProjectionHead random(std::size_t input_dim, std::size_t output_dim, Rng& rng) {
        if (output_dim < 2) throw ParameterError("projection dimension K must be >= 2");
        if (input_dim == 0) throw ParameterError("projection input dimension must be positive");
        ProjectionHead h{input_dim, output_dim, std::vector<double>(output_dim * (input_dim + 1), 0.0)};
        const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
        for (std::size_t i = 0; i < output_dim * input_dim; ++i) h.params[i] = scale * rng.normal();
        return h;
    }
};

/// W x + b, before any normalization.
inline std::vector<double> affine(const ProjectionHead& head, std::span<const double> x) {
    if (x.size() != head.input_dim)
        throw ShapeError("projection expects input of dimension " + std::to_string(head.input_dim) + ", got " +
                         std::to_string(x.size()));
    std::vector<double> y(head.output_dim);
    for (std::size_t k = 0; k < head.output_dim; ++k) {
        const double* row = head.params.data() + k * head.input_dim;
        double acc = head.bias(k);
        for (std::size_t i = 0; i < head.input_dim; ++i) acc += row[i] * x[i];
        y[k] = acc;
    }
    return y;
}

inline constexpr double kMinProjectionNorm = 1e-12;

/// W x + b scaled to unit length (or left raw when `normalize` is false).
/// Not positively homogeneous in x unless b = 0.
inline std::vector<double> project(const ProjectionHead& head, std::span<const double> x, bool normalize = true) {
    auto y = affine(head, x);
    if (!normalize) return y;
    const double n = norm2(y);
    if (!(n >= kMinProjectionNorm)) throw NumericError("projection collapsed to a near-zero vector");
    for (auto& v : y) v /= n;
    return y;
}

struct AlignmentModel {
    ProjectionHead text_head;    // D -> K
    ProjectionHead policy_head;  // P -> K
    double temperature = 0.3;
    /// Unit-normalize projections before the inner product. Off gives the
    /// bare dot-product similarity.
    bool normalize = true;
    /// Per-coordinate standardization of policy weights, fitted on the base set.
    std::vector<double> policy_mean;
    std::vector<double> policy_std;

    std::size_t text_dim() const { return text_head.input_dim; }
    std::size_t policy_dim() const { return policy_head.input_dim; }
    std::size_t shared_dim() const { return text_head.output_dim; }

    void validate() const {
        if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
        if (text_head.output_dim != policy_head.output_dim) throw ShapeError("projection heads disagree on K");
        if (shared_dim() < 2) throw ParameterError("K must be >= 2");
        if (policy_mean.size() != policy_dim() || policy_std.size() != policy_dim())
            throw ShapeError("standardization vectors do not match the policy dimension");
    }

    /// (w - mean) / std per coordinate; zero-std coordinates are only centred.
    std::vector<double> standardize(std::span<const double> weights) const {
        if (weights.size() != policy_dim())
            throw ShapeError("policy vector of length " + std::to_string(weights.size()) + ", model expects " +
                             std::to_string(policy_dim()));
        std::vector<double> z(weights.size());
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double c = weights[i] - policy_mean[i];
            z[i] = policy_std[i] > 0.0 ? c / policy_std[i] : c;
        }
        return z;
    }

    std::vector<double> project_text(const EmbeddingVector& e) const { return project(text_head, e.values, normalize); }

    std::vector<double> project_policy(std::span<const double> weights) const {
        return project(policy_head, standardize(weights), normalize);
    }
};

/// N (instruction embedding, flattened policy) pairs; pair i is the ground-truth match.
struct AlignmentDataset {
    std::vector<EmbeddingVector> texts;
    std::vector<std::vector<double>> policies;

    std::size_t size() const { return texts.size(); }

    void validate() const {
        if (texts.size() != policies.size()) throw ShapeError("dataset has unequal text and policy counts");
        if (texts.empty()) throw ShapeError("dataset is empty");
        for (const auto& t : texts)
            if (t.dim() != texts[0].dim()) throw ShapeError("instruction embeddings differ in dimension");
        for (const auto& p : policies)
            if (p.size() != policies[0].size()) throw ShapeError("policies differ in parameter count");
    }
};

/// Square matrix, row i = instruction i, column j = policy j.
struct SimilarityMatrix {
    std::size_t n = 0;
    std::vector<double> values;

    double at(std::size_t i, std::size_t j) const { return values[i * n + j]; }
    double& at(std::size_t i, std::size_t j) { return values[i * n + j]; }

    bool diagonal_argmax() const {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (j != i && at(i, j) >= at(i, i)) return false;
        return true;
    }
};

inline SimilarityMatrix similarity_matrix(const AlignmentModel& model, const AlignmentDataset& data) {
    data.validate();
    const std::size_t n = data.size();
    std::vector<std::vector<double>> u(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
        u[i] = model.project_text(data.texts[i]);
        v[i] = model.project_policy(data.policies[i]);
    }
    SimilarityMatrix s{n, std::vector<double>(n * n)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) s.at(i, j) = dot(u[i], v[j]);
    return s;
}

namespace detail {

/// Softmax of `logits` scaled by 1/temperature, with max subtraction.
inline std::vector<double> scaled_softmax(std::span<const double> logits, double temperature, double& log_norm) {
    const double mx = *std::max_element(logits.begin(), logits.end()) / temperature;
    double sum = 0.0;
    std::vector<double> p(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) sum += p[k] = std::exp(logits[k] / temperature - mx);
    for (auto& x : p) x /= sum;
    log_norm = mx + std::log(sum);
    return p;
}

}  // namespace detail

/// Symmetric temperature-scaled cross-entropy over rows (instruction -> policy)
/// and columns (policy -> instruction), each averaged with weight 1/(2N).
/// Writes dL/dS into `grad` when given.
inline double clip_loss(const SimilarityMatrix& s, double temperature, std::vector<double>* grad = nullptr) {
    if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
    const std::size_t n = s.n;
    if (s.values.size() != n * n || n == 0) throw ShapeError("similarity matrix must be square and non-empty");
    const double scale = 1.0 / (2.0 * static_cast<double>(n));
    if (grad) grad->assign(n * n, 0.0);
    double loss = 0.0;
    std::vector<double> line(n);
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t a = 0; a < n; ++a) {
            // pass 0: row a over columns; pass 1: column a over rows
            for (std::size_t b = 0; b < n; ++b) line[b] = pass == 0 ? s.at(a, b) : s.at(b, a);
            double log_norm = 0.0;
            const auto p = detail::scaled_softmax(line, temperature, log_norm);
            loss += scale * (log_norm - line[a] / temperature);
            if (grad) {
                for (std::size_t b = 0; b < n; ++b) {
                    const double g = scale * (p[b] - (a == b ? 1.0 : 0.0)) / temperature;
                    (pass == 0 ? (*grad)[a * n + b] : (*grad)[b * n + a]) += g;
                }
            }
        }
    }
    return std::max(loss, 0.0);
}

struct AlignmentGradient {
    std::vector<double> text;    // same layout as text_head.params
    std::vector<double> policy;  // same layout as policy_head.params
};

namespace detail {

/// Backpropagates d(loss)/d(output) through y = normalize(W x + b).
inline void head_backward(const ProjectionHead& head, std::span<const double> x, std::span<const double> raw,
                          std::span<const double> out, std::span<const double> dout, bool normalize,
                          std::vector<double>& grad) {
    const std::size_t k_dim = head.output_dim;
    std::vector<double> draw(dout.begin(), dout.end());
    if (normalize) {
        const double n = norm2(raw);
        const double proj = dot(out, dout);
        for (std::size_t k = 0; k < k_dim; ++k) draw[k] = (dout[k] - out[k] * proj) / n;
    }
    for (std::size_t k = 0; k < k_dim; ++k) {
        double* row = grad.data() + k * head.input_dim;
        for (std::size_t i = 0; i < head.input_dim; ++i) row[i] += draw[k] * x[i];
        grad[k_dim * head.input_dim + k] += draw[k];
    }
}

}  // namespace detail

/// Loss of `model` on `data` and its gradient with respect to both heads.
/// `standardized` holds the data's policies already passed through model.standardize.
inline double alignment_loss_and_gradient(const AlignmentModel& model, const AlignmentDataset& data,
                                          const std::vector<std::vector<double>>& standardized,
                                          AlignmentGradient* grad) {
    const std::size_t n = data.size();
    std::vector<std::vector<double>> u_raw(n), v_raw(n), u(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
        u_raw[i] = affine(model.text_head, data.texts[i].values);
        v_raw[i] = affine(model.policy_head, standardized[i]);
        u[i] = u_raw[i];
        v[i] = v_raw[i];
        if (model.normalize) {
            const double nu = norm2(u[i]);
            const double nv = norm2(v[i]);
            if (!(nu >= kMinProjectionNorm) || !(nv >= kMinProjectionNorm))
                throw NumericError("projection collapsed to a near-zero vector");
            for (auto& x : u[i]) x /= nu;
            for (auto& x : v[i]) x /= nv;
        }
    }
    SimilarityMatrix s{n, std::vector<double>(n * n)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) s.at(i, j) = dot(u[i], v[j]);

    std::vector<double> ds;
    const double loss = clip_loss(s, model.temperature, grad ? &ds : nullptr);
    if (!grad) return loss;

    const std::size_t k_dim = model.shared_dim();
    grad->text.assign(model.text_head.parameter_count(), 0.0);
    grad->policy.assign(model.policy_head.parameter_count(), 0.0);
    std::vector<double> du(k_dim), dv(k_dim);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(du.begin(), du.end(), 0.0);
        std::fill(dv.begin(), dv.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < k_dim; ++k) {
                du[k] += ds[i * n + j] * v[j][k];  // dL/du_i
                dv[k] += ds[j * n + i] * u[j][k];  // dL/dv_i
            }
        detail::head_backward(model.text_head, data.texts[i].values, u_raw[i], u[i], du, model.normalize, grad->text);
        detail::head_backward(model.policy_head, standardized[i], v_raw[i], v[i], dv, model.normalize, grad->policy);
    }
    return loss;
}

inline double alignment_loss(const AlignmentModel& model, const AlignmentDataset& data) {
    std::vector<std::vector<double>> z;
    for (const auto& p : data.policies) z.push_back(model.standardize(p));
    return alignment_loss_and_gradient(model, data, z, nullptr);
}

struct AlignConfig {
    std::size_t shared_dim = 32;
    double temperature = 0.3;
    double learning_rate = 1e-2;
    int epochs = 2000;
    std::uint64_t seed = 0;
    bool normalize = true;
};

/// Fits the per-coordinate mean and (population) standard deviation of the
/// policy vectors.
inline void fit_standardization(AlignmentModel& model, const AlignmentDataset& data) {
    const std::size_t p = data.policies.at(0).size();
    const auto n = static_cast<double>(data.size());
    model.policy_mean.assign(p, 0.0);
    model.policy_std.assign(p, 0.0);
    for (const auto& w : data.policies)
        for (std::size_t i = 0; i < p; ++i) model.policy_mean[i] += w[i] / n;
    for (const auto& w : data.policies)
        for (std::size_t i = 0; i < p; ++i) {
            const double c = w[i] - model.policy_mean[i];
            model.policy_std[i] += c * c / n;
        }
    for (auto& s : model.policy_std) s = std::sqrt(s);
}

/// Randomly initialized model sized for `data`, standardization fitted.
inline AlignmentModel initial_alignment_model(const AlignmentDataset& data, const AlignConfig& config) {
    data.validate();
    if (!(config.temperature > 0.0)) throw ParameterError("temperature must be positive");
    Rng rng(config.seed);
    AlignmentModel model;
    model.temperature = config.temperature;
    model.normalize = config.normalize;
    model.text_head = ProjectionHead::random(data.texts[0].dim(), config.shared_dim, rng);
    model.policy_head = ProjectionHead::random(data.policies[0].size(), config.shared_dim, rng);
    fit_standardization(model, data);
    return model;
}

struct AlignmentResult {
    AlignmentModel model;
    std::vector<double> loss_trace;  // loss before each epoch's update, then the final loss
};

/// Full-batch gradient descent on the symmetric contrastive loss.
inline AlignmentResult train_alignment(const AlignmentDataset& data, const AlignConfig& config) {
    if (data.size() < 2) throw ParameterError("alignment needs at least two pairs");
    if (config.epochs < 1) throw ParameterError("epochs must be >= 1");
    if (!(config.learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
    AlignmentResult result{initial_alignment_model(data, config), {}};
    auto& model = result.model;
    std::vector<std::vector<double>> z;
    for (const auto& p : data.policies) z.push_back(model.standardize(p));

    AlignmentGradient grad;
    result.loss_trace.reserve(static_cast<std::size_t>(config.epochs) + 1);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double loss = alignment_loss_and_gradient(model, data, z, &grad);
        if (!std::isfinite(loss))
            throw NumericError("alignment loss became non-finite at epoch " + std::to_string(epoch) +
                               " (learning rate too high?)");
        result.loss_trace.push_back(loss);
        for (std::size_t i = 0; i < grad.text.size(); ++i) model.text_head.params[i] -= config.learning_rate * grad.text[i];
        for (std::size_t i = 0; i < grad.policy.size(); ++i)
            model.policy_head.params[i] -= config.learning_rate * grad.policy[i];
    }
    const double final_loss = alignment_loss_and_gradient(model, data, z, nullptr);
    if (!std::isfinite(final_loss)) throw NumericError("alignment loss became non-finite after training");
    result.loss_trace.push_back(final_loss);
    return result;
}

/// Largest relative error between the analytic loss gradient and central
/// finite differences over `coordinates` randomly chosen head parameters.
/// Relative error is |a - f| / max(|a|, |f|, 1e-8).
inline double gradient_check(const AlignmentModel& model, const AlignmentDataset& data, std::size_t coordinates,
                             std::uint64_t seed = 0, double h = 1e-5) {
    std::vector<std::vector<double>> z;
    for (const auto& p : data.policies) z.push_back(model.standardize(p));
    AlignmentGradient grad;
    alignment_loss_and_gradient(model, data, z, &grad);

    const std::size_t text_count = model.text_head.parameter_count();
    const std::size_t total = text_count + model.policy_head.parameter_count();
    Rng rng(seed);
    AlignmentModel probe = model;
    double worst = 0.0;
    for (std::size_t c = 0; c < coordinates; ++c) {
        const std::size_t idx = rng.below(total);
        const bool text_side = idx < text_count;
        double& param = text_side ? probe.text_head.params[idx] : probe.policy_head.params[idx - text_count];
        const double analytic = text_side ? grad.text[idx] : grad.policy[idx - text_count];
        const double saved = param;
        param = saved + h;
        const double up = alignment_loss_and_gradient(probe, data, z, nullptr);
        param = saved - h;
        const double down = alignment_loss_and_gradient(probe, data, z, nullptr);
        param = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// ALIGN v1 text format

namespace detail {

inline void write_row(std::ostream& out, std::span<const double> values) {
    for (std::size_t i = 0; i < values.size(); ++i) out << (i ? " " : "") << format_double(values[i]);
    out << '\n';
}

inline std::vector<double> read_row(std::istream& in, std::size_t expected, std::size_t& lineno, const char* what) {
    std::string line;
    ++lineno;
    if (!std::getline(in, line)) throw FormatError("line " + std::to_string(lineno) + ": missing " + what);
    std::vector<double> row;
    for (const auto& f : split_words(line)) {
        const auto v = parse_double(f);
        if (!v) throw FormatError("line " + std::to_string(lineno) + ": non-numeric field '" + f + "'");
        row.push_back(*v);
    }
    if (row.size() != expected)
        throw FormatError("line " + std::to_string(lineno) + ": " + what + " has " + std::to_string(row.size()) +
                          " values, expected " + std::to_string(expected));
    return row;
}

}  // namespace detail

inline void save_alignment(std::ostream& out, const AlignmentModel& model) {
    model.validate();
    const std::size_t d = model.text_dim(), p = model.policy_dim(), k = model.shared_dim();
    out << "ALIGN v1\n" << d << ' ' << p << ' ' << k << '\n' << format_double(model.temperature) << '\n';
    for (const auto* head : {&model.text_head, &model.policy_head}) {
        for (std::size_t r = 0; r < k; ++r)
            detail::write_row(out, std::span(head->params).subspan(r * head->input_dim, head->input_dim));
        detail::write_row(out, std::span(head->params).subspan(k * head->input_dim, k));
    }
    detail::write_row(out, model.policy_mean);
    detail::write_row(out, model.policy_std);
    if (!model.normalize) out << "unnormalized\n";
}

inline AlignmentModel load_alignment(std::istream& in) {
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line) || line != "ALIGN v1") throw FormatError("line 1: expected 'ALIGN v1'");
    std::size_t d = 0, p = 0, k = 0;
    ++lineno;
    if (!std::getline(in, line)) throw FormatError("line 2: missing dimensions");
    {
        std::istringstream dims(line);
        if (!(dims >> d >> p >> k) || d == 0 || p == 0 || k < 2)
            throw FormatError("line 2: expected 'D P K' with D, P > 0 and K >= 2");
    }
    AlignmentModel model;
    model.temperature = detail::read_row(in, 1, lineno, "temperature")[0];
    auto read_head = [&](std::size_t input_dim, const char* name) {
        ProjectionHead head{input_dim, k, {}};
        head.params.reserve(head.parameter_count());
        for (std::size_t r = 0; r < k; ++r) {
            const auto row = detail::read_row(in, input_dim, lineno, name);
            head.params.insert(head.params.end(), row.begin(), row.end());
        }
        const auto bias = detail::read_row(in, k, lineno, name);
        head.params.insert(head.params.end(), bias.begin(), bias.end());
        return head;
    };
    model.text_head = read_head(d, "text head");
    model.policy_head = read_head(p, "policy head");
    model.policy_mean = detail::read_row(in, p, lineno, "standardization mean");
    model.policy_std = detail::read_row(in, p, lineno, "standardization std");
    while (std::getline(in, line)) {
        ++lineno;
        if (line == "unnormalized")
            model.normalize = false;
        else if (!line.empty())
            throw FormatError("line " + std::to_string(lineno) + ": unexpected trailing content");
    }
    try {
        model.validate();
    } catch (const Error& e) {
        throw FormatError(e.what());
    }
    return model;
}

}  // namespace clipxfer
