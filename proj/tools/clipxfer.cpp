#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "clipxfer/harness.hpp"

using namespace clipxfer;

namespace {

struct CommonOptions {
    std::string config_path;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::vector<int> grids;
    std::vector<std::string> strategies;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--seed", o.seed, "base seed");
    cmd->add_option("--trials", o.trials, "trials per strategy");
    cmd->add_option("--grid", o.grids, "grid size (repeatable)");
    cmd->add_option("--strategy", o.strategies, "scratch, language, clip or clip-crossmodal (repeatable)");
}

ExperimentConfig resolve(const CommonOptions& o) {
    ExperimentConfig c = o.config_path.empty() ? ExperimentConfig{}
                                               : ExperimentConfig::from(KeyValueConfig::load(o.config_path));
    if (!o.out.empty()) c.output_dir = o.out;
    if (o.seed) c.seed = *o.seed;
    if (o.trials) c.trials = *o.trials;
    if (!o.grids.empty()) c.grid_sizes = o.grids;
    if (!o.strategies.empty()) {
        c.strategies.clear();
        for (const auto& s : o.strategies) c.strategies.push_back(parse_strategy(s));
    }
    c.validate();
    return c;
}

void print_matrix(const SimilarityMatrix& s, const std::vector<Instruction>& tasks) {
    for (std::size_t i = 0; i < s.n; ++i) {
        std::printf("%-22s", tasks[i].text.c_str());
        for (std::size_t j = 0; j < s.n; ++j) std::printf(" %9.5f", s.at(i, j));
        std::printf("\n");
    }
}

int cmd_train_base(const ExperimentConfig& c) {
    for (int n : c.grid_sizes) {
        const auto bases = train_navigation_bases(c, n);
        const auto dir = grid_dir(c.output_dir, n);
        save_bases(dir, bases);
        for (std::size_t i = 0; i < bases.policies.size(); ++i)
            std::printf("grid %d  %-20s episodes %6d  env steps %9lld  -> %s\n", n,
                        bases.instructions[i].text.c_str(), bases.curves[i].episodes_run(),
                        bases.curves[i].env_steps_to_convergence,
                        policy_path(dir, bases.instructions[i]).string().c_str());
    }
    return 0;
}

int cmd_align(const ExperimentConfig& c) {
    const auto table = c.embedding_table();
    for (int n : c.grid_sizes) {
        const auto dir = grid_dir(c.output_dir, n);
        const auto bases = load_bases(dir, c.bases());
        const auto data = make_dataset(bases, table);
        AlignConfig ac = c.align;
        ac.seed = align_seed(c.seed, n);
        const auto result = train_alignment(data, ac);
        save_alignment_file(dir / "align.model", result.model);
        const auto s = similarity_matrix(result.model, data);
        std::printf("grid %d  loss %.6g -> %.6g  diagonal argmax: %s\n", n, result.loss_trace.front(),
                    result.loss_trace.back(), s.diagonal_argmax() ? "yes" : "no");
        print_matrix(s, bases.instructions);
    }
    return 0;
}

int cmd_transfer(const ExperimentConfig& c) {
    const auto table = c.embedding_table();
    for (int n : c.grid_sizes) {
        const auto dir = grid_dir(c.output_dir, n);
        const auto bases = load_bases(dir, c.bases());
        const auto model = load_alignment_file(dir / "align.model");
        TransferReport report;
        std::vector<SimilarityProfile> profiles;
        std::ostringstream curves;
        write_curves_header(curves);
        for (Strategy s : c.strategies) {
            std::optional<PolicyNetwork> init;
            if (s != Strategy::Scratch) {
                profiles.push_back(profile_for(s, c.target(), bases, model, table));
                init = blend(profiles.back(), bases.policies).policy;
            }
            const auto results = run_target_trials(c, n, s, init);
            for (int t = 0; t < c.trials; ++t) {
                const auto& curve = results[static_cast<std::size_t>(t)];
                report.rows.push_back({n, s, t, curve.episodes_run(), curve.env_steps_to_convergence, curve.converged});
                write_curve_rows(curves, n, s, t, curve);
            }
        }
        const auto tdir = dir / "transfer";
        write_file(tdir / "similarities.csv", [&](std::ostream& o) { write_similarities_csv(o, profiles); });
        write_file(tdir / "curves.csv", [&](std::ostream& o) { o << curves.str(); });
        write_file(tdir / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, report); });
        write_file(tdir / "aggregates.csv", [&](std::ostream& o) { write_aggregates_csv(o, report); });
        for (const auto& [key, a] : report.aggregates())
            std::printf("grid %d  %-16s median env steps %10.1f  converged %d/%d\n", key.first,
                        std::string(to_string(key.second)).c_str(), a.median_env_steps,
                        static_cast<int>(a.convergence_rate * a.trials + 0.5), a.trials);
    }
    return 0;
}

int cmd_run_experiment(const ExperimentConfig& c, bool quiet) {
    const auto result = run_experiment(c, quiet ? nullptr : &std::cerr);
    std::cout << format_report(c, result);
    return 0;
}

int cmd_probe(const ExperimentConfig& c) {
    const auto r = run_objectgrid_probe(c, &std::cerr);
    const auto names = [&](std::size_t i) { return r.tasks.instructions[i].text; };
    std::printf("%-16s %10s %10s %10s\n", "pair", "raw", "projected", "crossmodal");
    for (std::size_t i = 0; i < r.n; ++i)
        for (std::size_t j = i + 1; j < r.n; ++j)
            std::printf("%-16s %10.5f %10.5f %10.5f   (%s)\n",
                        (names(i).substr(6) + " / " + names(j).substr(6)).c_str(), r.at(r.raw, i, j),
                        r.at(r.projected, i, j), r.at(r.crossmodal, i, j), names(j).c_str());
    std::printf("color-grouping rate: raw %.3f  projected %.3f  crossmodal %.3f\n", r.color_grouping_rate(r.raw),
                r.color_grouping_rate(r.projected), r.color_grouping_rate(r.crossmodal));
    return 0;
}

Cell parse_goal(const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos) throw UsageError("--goal expects row,col");
    try {
        return {std::stoi(text.substr(0, comma)), std::stoi(text.substr(comma + 1))};
    } catch (const std::exception&) {
        throw UsageError("--goal expects row,col, got '" + text + "'");
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Similarity-weighted policy initialization for instruction-following grid worlds"};
    app.require_subcommand(1);

    CommonOptions opts;
    bool quiet = false;
    auto* train = app.add_subcommand("train-base", "train and save the base policies");
    auto* align = app.add_subcommand("align", "fit the instruction/policy alignment on saved base policies");
    auto* transfer = app.add_subcommand("transfer", "train the target task from each strategy's initialization");
    auto* run = app.add_subcommand("run-experiment", "full protocol: bases, alignment, transfer trials, reports");
    auto* probe = app.add_subcommand("probe-objectgrid", "color/shape similarity probe on the object grid");
    for (auto* cmd : {train, align, transfer, run, probe}) add_common(cmd, opts);
    run->add_flag("--quiet", quiet, "no progress on stderr");

    auto* oracle = app.add_subcommand("oracle", "optimal expected episode length for a grid and goal");
    int oracle_grid = 0;
    std::string oracle_goal = "0,0";
    bool no_table = false;
    oracle->add_option("--grid", oracle_grid, "grid size")->required();
    oracle->add_option("--goal", oracle_goal, "goal cell as row,col");
    oracle->add_flag("--no-table", no_table, "omit the distance table");

    CLI11_PARSE(app, argc, argv);

    try {
        if (oracle->parsed()) {
            std::string text;
            try {
                text = format_oracle(GridSpec::make(oracle_grid, parse_goal(oracle_goal)), !no_table);
            } catch (const ParameterError& e) {
                throw UsageError(e.what());
            }
            std::cout << text;
            return 0;
        }
        const auto config = resolve(opts);
        if (train->parsed()) return cmd_train_base(config);
        if (align->parsed()) return cmd_align(config);
        if (transfer->parsed()) return cmd_transfer(config);
        if (run->parsed()) return cmd_run_experiment(config, quiet);
        if (probe->parsed()) return cmd_probe(config);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
