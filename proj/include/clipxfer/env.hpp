#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "clipxfer/error.hpp"
#include "clipxfer/rng.hpp"

namespace clipxfer {

struct Cell {
    int row = 0;
    int col = 0;

    friend bool operator==(const Cell&, const Cell&) = default;
};

inline int manhattan(Cell a, Cell b) noexcept {
    return std::abs(a.row - b.row) + std::abs(a.col - b.col);
}

enum class Action : int { Up = 0, Down = 1, Left = 2, Right = 3 };

inline constexpr int kNumActions = 4;
inline constexpr std::array<Action, kNumActions> kActions{Action::Up, Action::Down, Action::Left,
                                                          Action::Right};

inline Cell move(Cell c, Action a, int n) noexcept {
    switch (a) {
        case Action::Up: c.row = std::max(c.row - 1, 0); break;
        case Action::Down: c.row = std::min(c.row + 1, n - 1); break;
        case Action::Left: c.col = std::max(c.col - 1, 0); break;
        case Action::Right: c.col = std::min(c.col + 1, n - 1); break;
    }
    return c;
}

/// Deterministic N x N navigation grid with a single absorbing goal.
///
/// Row 0 is the top row. Moves into a wall leave the agent in place. Cells in
/// `start_exclusions` (besides the goal, which is always excluded) are never
/// drawn as start cells but are otherwise ordinary free cells.
struct GridSpec {
    int size = 0;
    Cell goal;
    double step_cost = -0.01;
    double goal_reward = 1.0;
    int episode_cap = 0;
    std::vector<Cell> start_exclusions;

    bool in_bounds(Cell c) const noexcept {
        return c.row >= 0 && c.row < size && c.col >= 0 && c.col < size;
    }

    bool is_start_cell(Cell c) const {
        if (c == goal) return false;
        return std::find(start_exclusions.begin(), start_exclusions.end(), c) ==
               start_exclusions.end();
    }

    /// All cells an episode may start from, in row-major order.
    std::vector<Cell> start_cells() const {
        std::vector<Cell> cells;
        cells.reserve(static_cast<std::size_t>(size) * size);
        for (int r = 0; r < size; ++r)
            for (int c = 0; c < size; ++c)
                if (is_start_cell({r, c})) cells.push_back({r, c});
        return cells;
    }

    void validate() const {
        if (size < 2) throw ParameterError("grid size must be at least 2, got " + std::to_string(size));
        if (!in_bounds(goal))
            throw ParameterError("goal (" + std::to_string(goal.row) + "," + std::to_string(goal.col) +
                                 ") outside " + std::to_string(size) + "x" + std::to_string(size) +
                                 " grid");
        if (episode_cap < 2 * (size - 1))
            throw ParameterError("episode_cap " + std::to_string(episode_cap) +
                                 " shorter than the longest optimal path " +
                                 std::to_string(2 * (size - 1)));
        for (const auto& c : start_exclusions)
            if (!in_bounds(c)) throw ParameterError("start exclusion outside grid");
        if (start_cells().empty()) throw ParameterError("grid has no admissible start cell");
    }

    /// Grid with the default reward shape (-0.01 per step, +1 at the goal, cap 8N).
    static GridSpec make(int n, Cell goal) {
        GridSpec spec;
        spec.size = n;
        spec.goal = goal;
        spec.episode_cap = 8 * n;
        spec.validate();
        return spec;
    }
};

struct EnvState {
    Cell agent;
    int steps_taken = 0;
    bool done = false;
};

struct StepResult {
    EnvState state;
    double reward = 0.0;
    bool done = false;
};

/// Agent drawn uniformly from the admissible start cells.
inline EnvState reset(const GridSpec& spec, Rng& rng) {
    const auto cells = spec.start_cells();
    return EnvState{cells[rng.below(cells.size())], 0, false};
}

inline StepResult step(const EnvState& state, Action action, const GridSpec& spec) {
    if (state.done) throw UsageError("step called on a finished episode");
    EnvState next = state;
    next.agent = move(state.agent, action, spec.size);
    next.steps_taken = state.steps_taken + 1;
    const bool at_goal = next.agent == spec.goal;
    next.done = at_goal || next.steps_taken >= spec.episode_cap;
    return StepResult{next, at_goal ? spec.goal_reward : spec.step_cost, next.done};
}

/// Mean Manhattan distance from the admissible start cells to the goal: the
/// exact optimal expected episode length under deterministic clamped moves.
inline double optimal_expected_steps(const GridSpec& spec) {
    const auto cells = spec.start_cells();
    long total = 0;
    for (const auto& c : cells) total += manhattan(c, spec.goal);
    return static_cast<double>(total) / static_cast<double>(cells.size());
}

// ---------------------------------------------------------------------------
// Instructions

/// Lowercases and collapses runs of whitespace to single spaces.
inline std::string normalize_text(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (unsigned char ch : text) {
        if (std::isspace(ch)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(ch)));
    }
    return out;
}

inline std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::istringstream in{std::string(text)};
    for (std::string w; in >> w;) words.push_back(std::move(w));
    return words;
}

struct Instruction {
    std::string text;     // normalized
    std::string task_id;  // words joined by '_'

    static Instruction make(std::string_view raw) {
        Instruction ins;
        ins.text = normalize_text(raw);
        if (ins.text.empty()) throw ParseError("instruction text is empty");
        ins.task_id = ins.text;
        std::replace(ins.task_id.begin(), ins.task_id.end(), ' ', '_');
        return ins;
    }

    friend bool operator==(const Instruction& a, const Instruction& b) { return a.text == b.text; }
};

inline constexpr std::array<std::string_view, 10> kOrdinals{
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth"};

/// Parses "top {left|right} {first..tenth}" into a row-0 goal cell.
/// Left counts columns from 0, right counts from N-1.
inline Cell instruction_to_goal(std::string_view text, int n) {
    const auto words = split_words(normalize_text(text));
    if (words.size() != 3)
        throw ParseError("expected 'top <left|right> <ordinal>', got '" + std::string(text) + "'");
    if (words[0] != "top") throw ParseError("unexpected token '" + words[0] + "', expected 'top'");
    const bool left = words[1] == "left";
    if (!left && words[1] != "right")
        throw ParseError("unexpected token '" + words[1] + "', expected 'left' or 'right'");
    const auto it = std::find(kOrdinals.begin(), kOrdinals.end(), words[2]);
    if (it == kOrdinals.end()) throw ParseError("unknown ordinal '" + words[2] + "'");
    const int k = static_cast<int>(it - kOrdinals.begin()) + 1;
    if (k > n)
        throw ParseError("ordinal '" + words[2] + "' exceeds grid size " + std::to_string(n));
    return left ? Cell{0, k - 1} : Cell{0, n - k};
}

// ---------------------------------------------------------------------------
// Color / shape object grid

struct GridObject {
    std::string color;
    std::string shape;
    Cell cell;
};

/// Objects laid out so that color, not shape, determines horizontal position:
/// each color owns a floor(N / colors)-wide column band and each shape a row
/// (1 + 3 * shape_index). `start`, when set, pins the start cell; otherwise
/// episodes start on a uniformly drawn non-object cell.
struct ObjectGridSpec {
    int size = 0;
    std::vector<GridObject> objects;
    std::optional<Cell> start;

    /// Navigation task whose goal is object `index`.
    GridSpec task(std::size_t index) const {
        GridSpec spec;
        spec.size = size;
        spec.goal = objects.at(index).cell;
        spec.episode_cap = 8 * size;
        if (start) {
            for (int r = 0; r < size; ++r)
                for (int c = 0; c < size; ++c)
                    if (!(Cell{r, c} == *start)) spec.start_exclusions.push_back({r, c});
        } else {
            for (const auto& o : objects)
                if (!(o.cell == spec.goal)) spec.start_exclusions.push_back(o.cell);
        }
        spec.validate();
        return spec;
    }

    std::size_t find(std::string_view color, std::string_view shape) const {
        for (std::size_t i = 0; i < objects.size(); ++i)
            if (objects[i].color == color && objects[i].shape == shape) return i;
        throw LookupError("no " + std::string(color) + " " + std::string(shape) + " on the grid");
    }
};

struct ObjectGridTasks {
    ObjectGridSpec grid;
    std::vector<Instruction> instructions;  // parallel to grid.objects
};

inline ObjectGridTasks build_object_grid(const std::vector<std::string>& colors,
                                         const std::vector<std::string>& shapes, int n) {
    if (colors.empty() || shapes.empty()) throw ParameterError("object grid needs colors and shapes");
    if (n < 2) throw ParameterError("grid size must be at least 2");
    const auto num_colors = static_cast<int>(colors.size());
    const auto num_shapes = static_cast<int>(shapes.size());
    if (num_colors * num_shapes >= n * n)
        throw ParameterError("object grid over capacity: " + std::to_string(num_colors * num_shapes) +
                             " objects on " + std::to_string(n * n) + " cells");
    const int band = n / num_colors;
    if (band < 1)
        throw ParameterError("object grid over capacity: " + std::to_string(num_colors) +
                             " color bands do not fit in " + std::to_string(n) + " columns");
    if (1 + 3 * (num_shapes - 1) >= n)
        throw ParameterError("object grid over capacity: " + std::to_string(num_shapes) +
                             " shape rows do not fit in " + std::to_string(n) + " rows");

    ObjectGridTasks out;
    out.grid.size = n;
    for (int c = 0; c < num_colors; ++c) {
        // Position inside the band runs left edge -> right edge across colors so
        // neighbouring bands are as far apart as the band width allows.
        const int offset = num_colors == 1 ? band / 2 : (c * (band - 1) + (num_colors - 1) / 2) / (num_colors - 1);
        const int col = c * band + offset;
        for (int s = 0; s < num_shapes; ++s) {
            out.grid.objects.push_back({normalize_text(colors[c]), normalize_text(shapes[s]), {1 + 3 * s, col}});
            out.instructions.push_back(
                Instruction::make("go to the " + colors[c] + " " + shapes[s]));
        }
    }
    return out;
}

/// Parses "go to the {color} {shape}" against the objects of `grid`.
inline Cell object_instruction_to_goal(std::string_view text, const ObjectGridSpec& grid) {
    const auto words = split_words(normalize_text(text));
    if (words.size() != 5 || words[0] != "go" || words[1] != "to" || words[2] != "the")
        throw ParseError("expected 'go to the <color> <shape>', got '" + std::string(text) + "'");
    bool color_known = false;
    for (const auto& o : grid.objects) {
        if (o.color == words[3]) {
            color_known = true;
            if (o.shape == words[4]) return o.cell;
        }
    }
    throw ParseError("unknown " + std::string(color_known ? "shape '" + words[4] : "color '" + words[3]) +
                     "'");
}

}  // namespace clipxfer
