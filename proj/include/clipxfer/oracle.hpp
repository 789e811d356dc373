#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <vector>

#include "clipxfer/env.hpp"

namespace clipxfer {

/// Row-major table of values over an N x N grid.
struct DistanceTable {
    int size = 0;
    std::vector<double> values;

    double at(Cell c) const { return values[static_cast<std::size_t>(c.row) * size + c.col]; }
    double& at(Cell c) { return values[static_cast<std::size_t>(c.row) * size + c.col]; }
};

/// Breadth-first search distances (in steps) from every cell to the goal.
inline DistanceTable bfs_distances(const GridSpec& spec) {
    DistanceTable table{spec.size, std::vector<double>(static_cast<std::size_t>(spec.size) * spec.size,
                                                       std::numeric_limits<double>::infinity())};
    std::deque<Cell> frontier{spec.goal};
    table.at(spec.goal) = 0.0;
    while (!frontier.empty()) {
        const Cell c = frontier.front();
        frontier.pop_front();
        for (Action a : kActions) {
            const Cell next = move(c, a, spec.size);
            if (table.at(next) > table.at(c) + 1.0) {
                table.at(next) = table.at(c) + 1.0;
                frontier.push_back(next);
            }
        }
    }
    return table;
}

inline double bfs_expected_steps(const GridSpec& spec) {
    const auto table = bfs_distances(spec);
    double total = 0.0;
    const auto cells = spec.start_cells();
    for (const auto& c : cells) total += table.at(c);
    return total / static_cast<double>(cells.size());
}

struct ValueIterationResult {
    DistanceTable cost_to_go;           // converged values, unit cost per step
    std::vector<Action> greedy;         // row-major greedy action per cell
    DistanceTable greedy_episode_length;  // rollout length of the greedy policy
    int sweeps = 0;
};

/// Synchronous value iteration on the unit-cost shortest-path MDP, followed by
/// rollouts of the greedy policy from every cell (capped at the episode cap).
inline ValueIterationResult value_iteration(const GridSpec& spec, int max_sweeps = 100000) {
    const auto n = static_cast<std::size_t>(spec.size);
    ValueIterationResult out;
    out.cost_to_go = {spec.size, std::vector<double>(n * n, 0.0)};
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        DistanceTable next = out.cost_to_go;
        double delta = 0.0;
        for (int r = 0; r < spec.size; ++r) {
            for (int c = 0; c < spec.size; ++c) {
                const Cell cell{r, c};
                if (cell == spec.goal) continue;
                double best = std::numeric_limits<double>::infinity();
                for (Action a : kActions) best = std::min(best, 1.0 + out.cost_to_go.at(move(cell, a, spec.size)));
                delta = std::max(delta, std::abs(best - out.cost_to_go.at(cell)));
                next.at(cell) = best;
            }
        }
        out.cost_to_go = std::move(next);
        out.sweeps = sweep + 1;
        if (delta == 0.0) break;
    }

    out.greedy.assign(n * n, Action::Up);
    for (int r = 0; r < spec.size; ++r) {
        for (int c = 0; c < spec.size; ++c) {
            const Cell cell{r, c};
            double best = std::numeric_limits<double>::infinity();
            for (Action a : kActions) {
                const double q = 1.0 + out.cost_to_go.at(move(cell, a, spec.size));
                if (q < best) {
                    best = q;
                    out.greedy[static_cast<std::size_t>(r) * n + c] = a;
                }
            }
        }
    }

    out.greedy_episode_length = {spec.size, std::vector<double>(n * n, 0.0)};
    for (int r = 0; r < spec.size; ++r) {
        for (int c = 0; c < spec.size; ++c) {
            if (Cell{r, c} == spec.goal) continue;
            EnvState s{{r, c}, 0, false};
            while (!s.done) {
                const Action a = out.greedy[static_cast<std::size_t>(s.agent.row) * n + s.agent.col];
                s = step(s, a, spec).state;
            }
            out.greedy_episode_length.at({r, c}) = s.steps_taken;
        }
    }
    return out;
}

inline double value_iteration_expected_steps(const GridSpec& spec) {
    const auto vi = value_iteration(spec);
    double total = 0.0;
    const auto cells = spec.start_cells();
    for (const auto& c : cells) total += vi.greedy_episode_length.at(c);
    return total / static_cast<double>(cells.size());
}

}  // namespace clipxfer
