#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "clipxfer/align.hpp"
#include "clipxfer/config.hpp"
#include "clipxfer/embed.hpp"
#include "clipxfer/env.hpp"
#include "clipxfer/error.hpp"
#include "clipxfer/io.hpp"
#include "clipxfer/oracle.hpp"
#include "clipxfer/policy.hpp"
#include "clipxfer/rng.hpp"
#include "clipxfer/trainer.hpp"
#include "clipxfer/transfer.hpp"

namespace clipxfer {

namespace fs = std::filesystem;

struct ExperimentConfig {
    std::vector<int> grid_sizes{8, 10, 15, 25};
    std::vector<std::string> base_instructions{"top left first", "top left second", "top right first",
                                               "top right second"};
    /// Instruction actually trained. Its goal is (0, N-3).
    std::string target_instruction = "top right third";
    /// Label the original protocol used for the same goal; reported, never parsed.
    std::string target_label = "top left third";
    int trials = 10;
    std::vector<Strategy> strategies{Strategy::Scratch, Strategy::Language, Strategy::Clip,
                                     Strategy::ClipCrossmodal};
    std::uint64_t seed = 7;
    TrainConfig train;
    AlignConfig align;
    std::string embeddings_path;  // empty: built-in hashed encoder
    std::string output_dir = "clipxfer-out";

    std::vector<std::string> probe_colors{"red", "blue", "green"};
    std::vector<std::string> probe_shapes{"box", "cone"};
    int probe_grid_size = 9;

    std::size_t base_count() const { return base_instructions.size(); }
    std::size_t target_count() const { return 1; }

    std::vector<Instruction> bases() const {
        std::vector<Instruction> out;
        for (const auto& t : base_instructions) out.push_back(Instruction::make(t));
        return out;
    }
    Instruction target() const { return Instruction::make(target_instruction); }

    /// Every instruction the experiment touches: bases followed by the target.
    std::vector<Instruction> task_set() const {
        auto all = bases();
        all.push_back(target());
        return all;
    }

    void validate() const {
        if (trials < 1) throw ParameterError("trials must be >= 1");
        if (grid_sizes.empty()) throw ParameterError("grid_sizes is empty");
        if (base_instructions.size() < 2) throw ParameterError("need at least two base instructions");
        if (strategies.empty()) throw ParameterError("no strategies selected");
        const auto b = bases();
        const auto t = target();
        for (std::size_t i = 0; i < b.size(); ++i) {
            for (std::size_t j = i + 1; j < b.size(); ++j)
                if (b[i] == b[j]) throw ParameterError("duplicate base instruction '" + b[i].text + "'");
            if (b[i] == t) throw ParameterError("target instruction is also a base instruction");
        }
        for (int n : grid_sizes) {
            for (const auto& ins : task_set()) instruction_to_goal(ins.text, n);
        }
        train.validate();
        if (!(align.temperature > 0.0)) throw ParameterError("align.temperature must be positive");
        if (align.shared_dim < 2) throw ParameterError("align.dim must be >= 2");
    }

    /// Applies every key present in `kv`; unknown keys are rejected.
    static ExperimentConfig from(const KeyValueConfig& kv) {
        ExperimentConfig c;
        for (const auto& key : kv.keys()) {
            if (key == "grid_sizes") {
                c.grid_sizes.clear();
                for (auto v : kv.get_int_list(key)) c.grid_sizes.push_back(static_cast<int>(v));
            } else if (key == "base_instructions") {
                c.base_instructions = kv.get_list(key);
            } else if (key == "target_instruction") {
                c.target_instruction = kv.get_string(key);
            } else if (key == "target_label") {
                c.target_label = kv.get_string(key);
            } else if (key == "trials") {
                c.trials = static_cast<int>(kv.get_int(key));
            } else if (key == "strategies") {
                c.strategies.clear();
                for (const auto& s : kv.get_list(key)) c.strategies.push_back(parse_strategy(s));
            } else if (key == "seed") {
                c.seed = kv.get_u64(key);
            } else if (key == "embeddings") {
                c.embeddings_path = kv.get_string(key);
            } else if (key == "output_dir") {
                c.output_dir = kv.get_string(key);
            } else if (key == "train.discount") {
                c.train.discount = kv.get_double(key);
            } else if (key == "train.learning_rate") {
                c.train.learning_rate = kv.get_double(key);
            } else if (key == "train.entropy_bonus") {
                c.train.entropy_bonus = kv.get_double(key);
            } else if (key == "train.baseline_decay") {
                c.train.baseline_decay = kv.get_double(key);
            } else if (key == "train.convergence_window") {
                c.train.convergence_window = static_cast<int>(kv.get_int(key));
            } else if (key == "train.convergence_slack") {
                c.train.convergence_slack = kv.get_double(key);
            } else if (key == "train.max_episodes") {
                c.train.max_episodes = static_cast<int>(kv.get_int(key));
            } else if (key == "align.dim") {
                c.align.shared_dim = static_cast<std::size_t>(kv.get_int(key));
            } else if (key == "align.temperature") {
                c.align.temperature = kv.get_double(key);
            } else if (key == "align.learning_rate") {
                c.align.learning_rate = kv.get_double(key);
            } else if (key == "align.epochs") {
                c.align.epochs = static_cast<int>(kv.get_int(key));
            } else if (key == "align.normalize") {
                c.align.normalize = kv.get_bool(key);
            } else if (key == "probe.colors") {
                c.probe_colors = kv.get_list(key);
            } else if (key == "probe.shapes") {
                c.probe_shapes = kv.get_list(key);
            } else if (key == "probe.grid_size") {
                c.probe_grid_size = static_cast<int>(kv.get_int(key));
            } else {
                throw FormatError("unknown config key '" + key + "'");
            }
        }
        return c;
    }

    EmbeddingTable embedding_table() const {
        return embeddings_path.empty() ? EmbeddingTable{} : import_embeddings(embeddings_path);
    }
};

// ---------------------------------------------------------------------------
// Seeds

inline std::uint64_t strategy_code(Strategy s) { return fnv1a64(to_string(s)); }

/// Per-trial stream: independent of which other strategies or trials run.
inline std::uint64_t trial_seed(std::uint64_t base_seed, int grid_size, Strategy s, int trial) {
    return derive_seed({base_seed, static_cast<std::uint64_t>(grid_size), strategy_code(s),
                        static_cast<std::uint64_t>(trial)});
}

inline std::uint64_t base_init_seed(std::uint64_t base_seed, int grid_size) {
    return derive_seed({base_seed, static_cast<std::uint64_t>(grid_size), fnv1a64("base-init")});
}

inline std::uint64_t base_train_seed(std::uint64_t base_seed, int grid_size, std::size_t index) {
    return derive_seed({base_seed, static_cast<std::uint64_t>(grid_size), fnv1a64("base"), index});
}

inline std::uint64_t align_seed(std::uint64_t base_seed, int grid_size) {
    return derive_seed({base_seed, static_cast<std::uint64_t>(grid_size), fnv1a64("align")});
}

/// Runs fn(0..count-1), spread over the available hardware threads.
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(count, std::max(1u, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < count; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Base policies and alignment

struct BaseSet {
    std::vector<Instruction> instructions;
    std::vector<PolicyNetwork> policies;
    std::vector<LearningCurve> curves;
};

/// Trains one policy per task, all starting from the same initial weights so
/// that their weight vectors stay comparable. Throws ConvergenceError naming
/// the first task that does not converge.
inline BaseSet train_bases(const std::vector<Instruction>& instructions, const std::vector<GridSpec>& specs,
                           const TrainConfig& train, std::uint64_t init_seed,
                           const std::function<std::uint64_t(std::size_t)>& seed_for) {
    const auto arch = Architecture::for_grid(specs.at(0).size);
    const auto init = new_policy(arch, init_seed);
    BaseSet set{instructions, std::vector<PolicyNetwork>(specs.size()), std::vector<LearningCurve>(specs.size())};
    parallel_for(specs.size(), [&](std::size_t i) {
        TrainConfig cfg = train;
        cfg.seed = seed_for(i);
        auto result = train_policy(specs[i], cfg, init);
        set.policies[i] = std::move(result.policy);
        set.curves[i] = std::move(result.curve);
    });
    for (std::size_t i = 0; i < specs.size(); ++i)
        if (!set.curves[i].converged)
            throw ConvergenceError("base task '" + instructions[i].text + "' did not converge within " +
                                   std::to_string(train.max_episodes) + " episodes");
    return set;
}

inline BaseSet train_navigation_bases(const ExperimentConfig& config, int n) {
    const auto instructions = config.bases();
    std::vector<GridSpec> specs;
    for (const auto& ins : instructions) specs.push_back(GridSpec::make(n, instruction_to_goal(ins.text, n)));
    return train_bases(instructions, specs, config.train, base_init_seed(config.seed, n),
                       [&](std::size_t i) { return base_train_seed(config.seed, n, i); });
}

inline AlignmentDataset make_dataset(const BaseSet& bases, const EmbeddingTable& table) {
    AlignmentDataset data;
    for (std::size_t i = 0; i < bases.instructions.size(); ++i) {
        data.texts.push_back(table.lookup(bases.instructions[i].text));
        data.policies.push_back(flatten(bases.policies[i]));
    }
    return data;
}

inline SimilarityProfile profile_for(Strategy s, const Instruction& target, const BaseSet& bases,
                                     const AlignmentModel& model, const EmbeddingTable& table) {
    switch (s) {
        case Strategy::Language: return language_similarities(target, bases.instructions, table);
        case Strategy::Clip: return clip_similarities(target, bases.instructions, model, table);
        case Strategy::ClipCrossmodal:
            return crossmodal_similarities(target, bases.instructions, model, table, bases.policies);
        case Strategy::Scratch: break;
    }
    throw UsageError("scratch initialization has no similarity profile");
}

// ---------------------------------------------------------------------------
// Reports

struct SummaryRow {
    int grid_size = 0;
    Strategy strategy = Strategy::Scratch;
    int trial = 0;
    int episodes_to_convergence = 0;
    long long env_steps_to_convergence = 0;
    bool converged = false;
};

struct CellAggregate {
    int trials = 0;
    double mean_env_steps = 0.0;
    double median_env_steps = 0.0;
    double mean_episodes = 0.0;
    double median_episodes = 0.0;
    double convergence_rate = 0.0;
};

inline double median(std::vector<double> v) {
    if (v.empty()) throw ParameterError("median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct TransferReport {
    std::vector<SummaryRow> rows;

    std::map<std::pair<int, Strategy>, CellAggregate> aggregates() const {
        std::map<std::pair<int, Strategy>, std::vector<const SummaryRow*>> cells;
        for (const auto& r : rows) cells[{r.grid_size, r.strategy}].push_back(&r);
        std::map<std::pair<int, Strategy>, CellAggregate> out;
        for (const auto& [key, members] : cells) {
            std::vector<double> steps, eps;
            int converged = 0;
            for (const auto* r : members) {
                steps.push_back(static_cast<double>(r->env_steps_to_convergence));
                eps.push_back(r->episodes_to_convergence);
                converged += r->converged ? 1 : 0;
            }
            CellAggregate a;
            a.trials = static_cast<int>(members.size());
            for (double s : steps) a.mean_env_steps += s / a.trials;
            for (double e : eps) a.mean_episodes += e / a.trials;
            a.median_env_steps = median(steps);
            a.median_episodes = median(eps);
            a.convergence_rate = static_cast<double>(converged) / a.trials;
            out[key] = a;
        }
        return out;
    }

    std::optional<CellAggregate> cell(int grid_size, Strategy s) const {
        const auto all = aggregates();
        const auto it = all.find({grid_size, s});
        if (it == all.end()) return std::nullopt;
        return it->second;
    }
};

struct CurveRow {
    int grid_size = 0;
    Strategy strategy = Strategy::Scratch;
    int trial = 0;
    EpisodeRecord record;
};

inline std::string csv_double(double v) { return format_double(v, 9); }

inline void write_summary_csv(std::ostream& out, const TransferReport& report) {
    out << "grid_size,strategy,trial,episodes_to_convergence,env_steps_to_convergence,converged\n";
    for (const auto& r : report.rows)
        out << r.grid_size << ',' << to_string(r.strategy) << ',' << r.trial << ',' << r.episodes_to_convergence << ','
            << r.env_steps_to_convergence << ',' << (r.converged ? 1 : 0) << '\n';
}

inline void write_aggregates_csv(std::ostream& out, const TransferReport& report) {
    out << "grid_size,strategy,trials,mean_env_steps,median_env_steps,mean_episodes,median_episodes,"
           "convergence_rate\n";
    for (const auto& [key, a] : report.aggregates())
        out << key.first << ',' << to_string(key.second) << ',' << a.trials << ',' << csv_double(a.mean_env_steps)
            << ',' << csv_double(a.median_env_steps) << ',' << csv_double(a.mean_episodes) << ','
            << csv_double(a.median_episodes) << ',' << csv_double(a.convergence_rate) << '\n';
}

inline void write_curves_header(std::ostream& out) { out << "grid_size,strategy,trial,episode,steps,return\n"; }

inline void write_curve_rows(std::ostream& out, int grid_size, Strategy s, int trial, const LearningCurve& curve) {
    for (const auto& e : curve.episodes)
        out << grid_size << ',' << to_string(s) << ',' << trial << ',' << e.episode << ',' << e.steps << ','
            << csv_double(e.undiscounted_return) << '\n';
}

inline void write_similarities_csv(std::ostream& out, const std::vector<SimilarityProfile>& profiles) {
    out << "strategy,target,source,raw_d,clamped_w,normalized_w\n";
    for (const auto& p : profiles)
        for (const auto& e : p.entries)
            out << to_string(p.strategy) << ',' << p.target << ',' << e.source << ',' << csv_double(e.raw) << ','
                << csv_double(e.clamped) << ',' << csv_double(e.normalized) << '\n';
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

inline long long to_ll(const std::string& s, std::size_t lineno) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw FormatError("line " + std::to_string(lineno) + ": '" + s + "' is not an integer");
}

}  // namespace detail

inline TransferReport read_summary_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) ||
        line != "grid_size,strategy,trial,episodes_to_convergence,env_steps_to_convergence,converged")
        throw FormatError("line 1: unexpected summary.csv header");
    TransferReport report;
    for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
        if (line.empty()) continue;
        const auto f = detail::split_csv(line);
        if (f.size() != 6) throw FormatError("line " + std::to_string(lineno) + ": expected 6 fields");
        SummaryRow r;
        r.grid_size = static_cast<int>(detail::to_ll(f[0], lineno));
        r.strategy = parse_strategy(f[1]);
        r.trial = static_cast<int>(detail::to_ll(f[2], lineno));
        r.episodes_to_convergence = static_cast<int>(detail::to_ll(f[3], lineno));
        r.env_steps_to_convergence = detail::to_ll(f[4], lineno);
        r.converged = detail::to_ll(f[5], lineno) != 0;
        report.rows.push_back(r);
    }
    return report;
}

/// Reads summary.csv and checks aggregates.csv (when present) against a
/// recomputation from the rows.
inline TransferReport load_report(const fs::path& dir) {
    std::ifstream summary(dir / "summary.csv");
    if (!summary) throw FormatError("cannot open " + (dir / "summary.csv").string());
    auto report = read_summary_csv(summary);

    std::ifstream agg(dir / "aggregates.csv");
    if (!agg) return report;
    std::ostringstream expected;
    write_aggregates_csv(expected, report);
    std::ostringstream actual;
    actual << agg.rdbuf();
    if (expected.str() != actual.str())
        throw FormatError("aggregates.csv does not match a recomputation from summary.csv");
    return report;
}

/// Checks that every summary row matches the episode count and step total of
/// its curves.csv rows.
inline void check_summary_against_curves(const TransferReport& report, std::istream& curves) {
    std::string line;
    if (!std::getline(curves, line) || line != "grid_size,strategy,trial,episode,steps,return")
        throw FormatError("line 1: unexpected curves.csv header");
    std::map<std::tuple<int, Strategy, int>, std::pair<int, long long>> totals;
    for (std::size_t lineno = 2; std::getline(curves, line); ++lineno) {
        if (line.empty()) continue;
        const auto f = detail::split_csv(line);
        if (f.size() != 6) throw FormatError("line " + std::to_string(lineno) + ": expected 6 fields");
        auto& t = totals[{static_cast<int>(detail::to_ll(f[0], lineno)), parse_strategy(f[1]),
                          static_cast<int>(detail::to_ll(f[2], lineno))}];
        t.first += 1;
        t.second += detail::to_ll(f[4], lineno);
    }
    if (totals.size() != report.rows.size())
        throw FormatError("curves.csv covers " + std::to_string(totals.size()) + " trials, summary.csv has " +
                          std::to_string(report.rows.size()));
    for (const auto& r : report.rows) {
        const auto it = totals.find({r.grid_size, r.strategy, r.trial});
        if (it == totals.end() || it->second.first != r.episodes_to_convergence ||
            it->second.second != r.env_steps_to_convergence)
            throw FormatError("summary row grid " + std::to_string(r.grid_size) + " " + std::string(to_string(r.strategy)) +
                              " trial " + std::to_string(r.trial) + " disagrees with curves.csv");
    }
}

// ---------------------------------------------------------------------------
// File helpers

inline void save_policy_file(const fs::path& path, const PolicyNetwork& p) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    save_policy(out, p);
}

inline PolicyNetwork load_policy_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        return load_policy(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline void save_alignment_file(const fs::path& path, const AlignmentModel& m) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    save_alignment(out, m);
}

inline AlignmentModel load_alignment_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        return load_alignment(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline fs::path grid_dir(const fs::path& out, int n) { return out / ("grid_" + std::to_string(n)); }

inline fs::path policy_path(const fs::path& dir, const Instruction& ins) {
    return dir / "policies" / (ins.task_id + ".policy");
}

inline void save_bases(const fs::path& dir, const BaseSet& bases) {
    for (std::size_t i = 0; i < bases.policies.size(); ++i)
        save_policy_file(policy_path(dir, bases.instructions[i]), bases.policies[i]);
}

inline BaseSet load_bases(const fs::path& dir, const std::vector<Instruction>& instructions) {
    BaseSet set;
    set.instructions = instructions;
    for (const auto& ins : instructions) set.policies.push_back(load_policy_file(policy_path(dir, ins)));
    set.curves.resize(instructions.size());
    return set;
}

template <class Writer>
void write_file(const fs::path& path, Writer&& writer) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    writer(out);
}

// ---------------------------------------------------------------------------
// Experiment

struct GridArtifacts {
    int grid_size = 0;
    BaseSet bases;
    AlignmentModel model;
    std::vector<double> align_loss;
    std::vector<SimilarityProfile> profiles;
};

struct ExperimentResult {
    TransferReport report;
    std::vector<GridArtifacts> grids;
};

/// Trains the target task once per (strategy, trial) from the initialization
/// the strategy prescribes.
inline std::vector<LearningCurve> run_target_trials(const ExperimentConfig& config, int n, Strategy s,
                                                    const std::optional<PolicyNetwork>& init) {
    const auto spec = GridSpec::make(n, instruction_to_goal(config.target().text, n));
    std::vector<LearningCurve> curves(static_cast<std::size_t>(config.trials));
    parallel_for(curves.size(), [&](std::size_t t) {
        TrainConfig cfg = config.train;
        cfg.seed = trial_seed(config.seed, n, s, static_cast<int>(t));
        curves[t] = train_policy(spec, cfg, init).curve;
    });
    return curves;
}

inline std::string format_report(const ExperimentConfig& config, const ExperimentResult& result) {
    std::ostringstream out;
    out << "target instruction: " << config.target().text << " (label in the original protocol: \""
        << config.target_label << "\")\n";
    out << "base instructions:";
    for (const auto& b : config.bases()) out << " \"" << b.text << "\"";
    out << "\nbase_count=" << config.base_count() << " target_count=" << config.target_count()
        << " trials=" << config.trials << " seed=" << config.seed << "\n\n";
    for (const auto& g : result.grids) {
        out << "grid " << g.grid_size << "x" << g.grid_size << ": alignment loss " << csv_double(g.align_loss.front())
            << " -> " << csv_double(g.align_loss.back()) << "\n";
        for (const auto& p : g.profiles) {
            out << "  " << to_string(p.strategy) << " weights:";
            for (const auto& e : p.entries) out << " " << csv_double(e.normalized);
            if (p.uniform_fallback) out << " (uniform fallback)";
            out << "\n";
        }
    }
    out << "\ngrid,strategy,trials,converged,mean_env_steps,median_env_steps,mean_episodes,median_episodes\n";
    const auto aggs = result.report.aggregates();
    for (const auto& [key, a] : aggs)
        out << key.first << ',' << to_string(key.second) << ',' << a.trials << ','
            << csv_double(a.convergence_rate) << ',' << csv_double(a.mean_env_steps) << ','
            << csv_double(a.median_env_steps) << ',' << csv_double(a.mean_episodes) << ','
            << csv_double(a.median_episodes) << '\n';
    out << '\n';
    for (int n : config.grid_sizes) {
        const auto clip = aggs.find({n, Strategy::Clip});
        const auto lang = aggs.find({n, Strategy::Language});
        if (clip != aggs.end() && lang != aggs.end() && lang->second.median_env_steps > 0.0)
            out << "grid " << n << ": median env steps clip/language = "
                << csv_double(clip->second.median_env_steps / lang->second.median_env_steps) << '\n';
    }
    return out.str();
}

/// Full protocol: per grid size, train the bases, fit the alignment, then
/// train the target from each strategy's initialization `trials` times.
/// Writes curves.csv, summary.csv, aggregates.csv, report.txt and per-grid
/// policies, alignment model and similarities.csv under config.output_dir
/// (skipped when `write` is false).
inline ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr,
                                       bool write = true) {
    config.validate();
    const auto table = config.embedding_table();
    const fs::path out_dir = config.output_dir;
    ExperimentResult result;
    std::ostringstream curves_csv;
    write_curves_header(curves_csv);

    for (int n : config.grid_sizes) {
        if (log) *log << "[grid " << n << "] training " << config.base_count() << " base policies\n";
        GridArtifacts g;
        g.grid_size = n;
        g.bases = train_navigation_bases(config, n);
        AlignConfig ac = config.align;
        ac.seed = align_seed(config.seed, n);
        auto aligned = train_alignment(make_dataset(g.bases, table), ac);
        g.model = std::move(aligned.model);
        g.align_loss = std::move(aligned.loss_trace);
        if (log)
            *log << "[grid " << n << "] alignment loss " << g.align_loss.front() << " -> " << g.align_loss.back()
                 << "\n";

        for (Strategy s : config.strategies) {
            std::optional<PolicyNetwork> init;
            if (s != Strategy::Scratch) {
                auto profile = profile_for(s, config.target(), g.bases, g.model, table);
                init = blend(profile, g.bases.policies).policy;
                g.profiles.push_back(std::move(profile));
            }
            const auto curves = run_target_trials(config, n, s, init);
            for (int t = 0; t < config.trials; ++t) {
                const auto& c = curves[static_cast<std::size_t>(t)];
                result.report.rows.push_back(
                    {n, s, t, c.episodes_run(), c.env_steps_to_convergence, c.converged});
                write_curve_rows(curves_csv, n, s, t, c);
            }
            if (log) {
                const auto a = result.report.cell(n, s);
                *log << "[grid " << n << "] " << to_string(s) << ": median env steps " << a->median_env_steps
                     << ", converged " << a->convergence_rate * 100.0 << "%\n";
            }
        }
        if (write) {
            const auto dir = grid_dir(out_dir, n);
            save_bases(dir, g.bases);
            save_alignment_file(dir / "align.model", g.model);
            write_file(dir / "similarities.csv", [&](std::ostream& o) { write_similarities_csv(o, g.profiles); });
        }
        result.grids.push_back(std::move(g));
    }

    if (write) {
        write_file(out_dir / "curves.csv", [&](std::ostream& o) { o << curves_csv.str(); });
        write_file(out_dir / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, result.report); });
        write_file(out_dir / "aggregates.csv", [&](std::ostream& o) { write_aggregates_csv(o, result.report); });
        write_file(out_dir / "report.txt", [&](std::ostream& o) { o << format_report(config, result); });
    }
    return result;
}

// ---------------------------------------------------------------------------
// Color / shape probe

struct ProbeReport {
    ObjectGridTasks tasks;
    BaseSet bases;
    AlignmentModel model;
    std::size_t n = 0;
    std::vector<double> raw;         // cosine of raw instruction embeddings
    std::vector<double> projected;   // cosine of projected instruction embeddings
    std::vector<double> crossmodal;  // projected instruction i vs projected policy j

    double at(const std::vector<double>& m, std::size_t i, std::size_t j) const { return m[i * n + j]; }

    /// Anchor's similarity to its same-color partner minus its similarity to
    /// its same-shape partner, for the named objects.
    double color_margin(const std::vector<double>& m, std::string_view color, std::string_view shape,
                        std::string_view other_shape, std::string_view other_color) const {
        const auto a = tasks.grid.find(color, shape);
        return at(m, a, tasks.grid.find(color, other_shape)) - at(m, a, tasks.grid.find(other_color, shape));
    }

    /// Fraction of (anchor, same-color partner, same-shape partner) triples in
    /// which the same-color partner is the more similar one.
    double color_grouping_rate(const std::vector<double>& m) const {
        int wins = 0, total = 0;
        const auto& objs = tasks.grid.objects;
        for (std::size_t a = 0; a < objs.size(); ++a)
            for (std::size_t c = 0; c < objs.size(); ++c)
                for (std::size_t s = 0; s < objs.size(); ++s) {
                    if (c == a || s == a) continue;
                    if (objs[c].color != objs[a].color || objs[c].shape == objs[a].shape) continue;
                    if (objs[s].shape != objs[a].shape || objs[s].color == objs[a].color) continue;
                    ++total;
                    wins += at(m, a, c) > at(m, a, s) ? 1 : 0;
                }
        return total ? static_cast<double>(wins) / total : 0.0;
    }
};

inline std::uint64_t probe_seed(std::uint64_t seed) { return derive_seed({seed, fnv1a64("objectgrid")}); }

inline ProbeReport run_objectgrid_probe(const ExperimentConfig& config, std::ostream* log = nullptr,
                                        bool write = true) {
    config.train.validate();
    const auto table = config.embedding_table();
    ProbeReport r;
    r.tasks = build_object_grid(config.probe_colors, config.probe_shapes, config.probe_grid_size);
    r.n = r.tasks.instructions.size();
    if (r.n < 2) throw ParameterError("probe needs at least two objects");
    std::vector<GridSpec> specs;
    for (std::size_t i = 0; i < r.n; ++i) specs.push_back(r.tasks.grid.task(i));
    const auto s = probe_seed(config.seed);
    if (log) *log << "[probe] training " << r.n << " object-grid base policies\n";
    r.bases = train_bases(r.tasks.instructions, specs, config.train, derive_seed({s, fnv1a64("base-init")}),
                          [&](std::size_t i) { return derive_seed({s, fnv1a64("base"), i}); });
    AlignConfig ac = config.align;
    ac.seed = derive_seed({s, fnv1a64("align")});
    const auto data = make_dataset(r.bases, table);
    r.model = train_alignment(data, ac).model;

    std::vector<std::vector<double>> proj_text, proj_policy;
    for (std::size_t i = 0; i < r.n; ++i) {
        proj_text.push_back(r.model.project_text(data.texts[i]));
        proj_policy.push_back(r.model.project_policy(data.policies[i]));
    }
    r.raw.resize(r.n * r.n);
    r.projected.resize(r.n * r.n);
    r.crossmodal.resize(r.n * r.n);
    for (std::size_t i = 0; i < r.n; ++i)
        for (std::size_t j = 0; j < r.n; ++j) {
            r.raw[i * r.n + j] = cosine(data.texts[i], data.texts[j]);
            r.projected[i * r.n + j] = cosine(proj_text[i], proj_text[j]);
            r.crossmodal[i * r.n + j] = cosine(proj_text[i], proj_policy[j]);
        }

    if (write) {
        const fs::path dir = fs::path(config.output_dir) / "objectgrid";
        save_bases(dir, r.bases);
        save_alignment_file(dir / "align.model", r.model);
        write_file(fs::path(config.output_dir) / "probe.csv", [&](std::ostream& o) {
            o << "kind,source,target,similarity\n";
            const std::pair<const char*, const std::vector<double>*> kinds[] = {
                {"raw", &r.raw}, {"projected", &r.projected}, {"crossmodal", &r.crossmodal}};
            for (const auto& [kind, m] : kinds)
                for (std::size_t i = 0; i < r.n; ++i)
                    for (std::size_t j = 0; j < r.n; ++j)
                        o << kind << ',' << r.tasks.instructions[i].text << ',' << r.tasks.instructions[j].text << ','
                          << csv_double(r.at(*m, i, j)) << '\n';
        });
        write_file(fs::path(config.output_dir) / "probe_report.txt", [&](std::ostream& o) {
            o << "objects:\n";
            for (const auto& obj : r.tasks.grid.objects)
                o << "  " << obj.color << ' ' << obj.shape << " at (" << obj.cell.row << ',' << obj.cell.col << ")\n";
            o << "color-grouping rate (same-color partner more similar than same-shape partner):\n"
              << "  raw        " << csv_double(r.color_grouping_rate(r.raw)) << '\n'
              << "  projected  " << csv_double(r.color_grouping_rate(r.projected)) << '\n'
              << "  crossmodal " << csv_double(r.color_grouping_rate(r.crossmodal)) << '\n';
        });
    }
    return r;
}

// ---------------------------------------------------------------------------
// Oracle printout

struct OracleReadout {
    double manhattan = 0.0;
    double bfs = 0.0;
    double value_iteration = 0.0;
    DistanceTable distances;
};

inline OracleReadout oracle_readout(const GridSpec& spec) {
    spec.validate();
    return {optimal_expected_steps(spec), bfs_expected_steps(spec), value_iteration_expected_steps(spec),
            bfs_distances(spec)};
}

inline std::string format_oracle(const GridSpec& spec, bool table = true) {
    const auto r = oracle_readout(spec);
    std::ostringstream out;
    out << "grid " << spec.size << " goal " << spec.goal.row << ',' << spec.goal.col << '\n'
        << "optimal_expected_steps " << format_double(r.manhattan) << '\n'
        << "bfs_expected_steps     " << format_double(r.bfs) << '\n'
        << "value_iteration_steps  " << format_double(r.value_iteration) << '\n'
        << "max |difference|       " << format_double(std::max({std::abs(r.manhattan - r.bfs),
                                                               std::abs(r.manhattan - r.value_iteration),
                                                               std::abs(r.bfs - r.value_iteration)}))
        << '\n';
    if (table) {
        out << "bfs distances:\n";
        for (int row = 0; row < spec.size; ++row) {
            for (int col = 0; col < spec.size; ++col) out << (col ? " " : "") << r.distances.at({row, col});
            out << '\n';
        }
    }
    return out.str();
}

}  // namespace clipxfer
