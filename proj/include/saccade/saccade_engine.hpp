#pragma once

// Fixation sequencing with inhibition of return.
//
// Each step picks the arg-max cell of the working map (ties: smallest row,
// then smallest column), reveals the f x f fovea around it and suppresses
// the same window. The window center is clamped per axis to
// [f/2, G-1-f/2] so every fovea lies fully inside the grid and always
// covers exactly f*f cells.

#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "saccade/errors.hpp"
#include "saccade/format.hpp"
#include "saccade/saliency.hpp"
#include "saccade/tensorops.hpp"

namespace saccade {

inline constexpr float kSuppressed = -1e30f;

struct Cell {
    std::size_t row = 0;
    std::size_t col = 0;
    auto operator<=>(const Cell&) const = default;
};

using Mask = std::vector<std::uint8_t>; // row-major over the token grid

struct FoveaSpec {
    std::size_t f = 3;
    std::size_t grid_h = 14;
    std::size_t grid_w = 14;
    std::size_t patch_size = 16;

    std::size_t cells() const { return grid_h * grid_w; }

    void validate() const {
        detail::require(f % 2 == 1, "FoveaSpec: fovea size must be odd");
        detail::require(f <= std::min(grid_h, grid_w), "FoveaSpec: fovea larger than grid");
        detail::require(patch_size >= 1, "FoveaSpec: patch_size must be >= 1");
    }
};

struct FixationState {
    Grid2D values;
    Mask suppressed;

    explicit FixationState(Grid2D g) : values(std::move(g)), suppressed(values.size(), 0) {}
};

struct SaccadeTrace {
    std::vector<Cell> centers;        // raw arg-max cells
    std::vector<Mask> masks;          // cumulative reveal masks
    std::vector<std::size_t> revealed_cells;
    std::vector<double> revealed_fraction;
    SaliencySource source = SaliencySource::attention;

    std::size_t size() const { return centers.size(); }
};

inline Cell select_fixation(const FixationState& state) {
    const Grid2D& g = state.values;
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (state.suppressed[i]) continue;
        if (!best || g.values[i] > g.values[*best]) best = i;
    }
    if (!best) throw ExhaustionError("select_fixation: every cell is suppressed");
    return {*best / g.width, *best % g.width};
}

inline Cell clamp_center(Cell c, const FoveaSpec& spec) {
    const std::size_t h = spec.f / 2;
    return {std::clamp(c.row, h, spec.grid_h - 1 - h), std::clamp(c.col, h, spec.grid_w - 1 - h)};
}

inline Mask fovea_mask(Cell center, const FoveaSpec& spec) {
    spec.validate();
    detail::require(center.row < spec.grid_h && center.col < spec.grid_w, "fovea_mask: center outside grid");
    const Cell c = clamp_center(center, spec);
    const std::size_t h = spec.f / 2;
    Mask m(spec.cells(), 0);
    for (std::size_t y = c.row - h; y <= c.row + h; ++y)
        for (std::size_t x = c.col - h; x <= c.col + h; ++x) m[y * spec.grid_w + x] = 1;
    return m;
}

inline void apply_inhibition(FixationState& state, Cell center, const FoveaSpec& spec) {
    detail::require(state.values.height == spec.grid_h && state.values.width == spec.grid_w,
                    "apply_inhibition: state grid does not match fovea spec");
    const Mask window = fovea_mask(center, spec);
    for (std::size_t i = 0; i < window.size(); ++i) {
        if (!window[i]) continue;
        state.values.values[i] = kSuppressed;
        state.suppressed[i] = 1;
    }
}

inline SaccadeTrace run_saccade_sequence(const SaliencyGrid& sal, const FoveaSpec& spec, std::size_t k) {
    spec.validate();
    detail::require(k >= 1, "run_saccade_sequence: k must be >= 1");
    detail::require(sal.grid.height == spec.grid_h && sal.grid.width == spec.grid_w,
                    "run_saccade_sequence: saliency grid does not match fovea spec");
    for (float v : sal.grid.values)
        if (!std::isfinite(v)) throw ContractViolation("run_saccade_sequence: non-finite saliency value");

    FixationState state(sal.grid);
    SaccadeTrace trace;
    trace.source = sal.source;
    Mask cumulative(spec.cells(), 0);
    const double pixels_per_cell = static_cast<double>(spec.patch_size * spec.patch_size);
    const double image_pixels = static_cast<double>(spec.cells()) * pixels_per_cell;
    for (std::size_t s = 0; s < k; ++s) {
        const Cell c = select_fixation(state);
        const Mask fov = fovea_mask(c, spec);
        std::size_t revealed = 0;
        for (std::size_t i = 0; i < cumulative.size(); ++i) {
            cumulative[i] |= fov[i];
            revealed += cumulative[i];
        }
        apply_inhibition(state, c, spec);
        trace.centers.push_back(c);
        trace.masks.push_back(cumulative);
        trace.revealed_cells.push_back(revealed);
        trace.revealed_fraction.push_back(static_cast<double>(revealed) * pixels_per_cell / image_pixels);
    }
    return trace;
}

// All series are indexed by saccade and measured in token units. Index 0
// of from_first and from_previous is 0 by definition.
struct DistanceReport {
    std::vector<double> cross;         // |a_i - b_i|, empty without a second trace
    std::vector<double> from_first;    // |a_i - a_0|
    std::vector<double> from_previous; // |a_i - a_{i-1}|
};

inline double cell_distance(Cell a, Cell b) {
    const double dy = static_cast<double>(a.row) - static_cast<double>(b.row);
    const double dx = static_cast<double>(a.col) - static_cast<double>(b.col);
    return std::sqrt(dy * dy + dx * dx);
}

inline DistanceReport fixation_distances(const SaccadeTrace& a, const SaccadeTrace* b = nullptr) {
    if (b && b->size() != a.size())
        throw ContractViolation("fixation_distances: traces differ in length (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b->size()) + ")");
    DistanceReport r;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (b) r.cross.push_back(cell_distance(a.centers[i], b->centers[i]));
        r.from_first.push_back(cell_distance(a.centers[i], a.centers[0]));
        r.from_previous.push_back(i == 0 ? 0.0 : cell_distance(a.centers[i], a.centers[i - 1]));
    }
    return r;
}

inline constexpr const char* kTraceCsvHeader = "image_id,saccade_index,row,col,revealed_cells,revealed_fraction,source";

// One row per saccade; saccade_index is 1-based. No header.
inline void write_trace_rows(std::ostream& out, const std::string& image_id, const SaccadeTrace& t) {
    for (std::size_t i = 0; i < t.size(); ++i)
        out << image_id << ',' << (i + 1) << ',' << t.centers[i].row << ',' << t.centers[i].col << ','
            << t.revealed_cells[i] << ',' << fmt9(t.revealed_fraction[i]) << ',' << to_string(t.source) << '\n';
}

} // namespace saccade
