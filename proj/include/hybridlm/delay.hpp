#pragma once
// Per-codebook temporal shift: layer j is delayed by j steps, so one decoding
// step emits one token per layer taken from J different frames. The shifted
// layout is padded into a J x (T+J-1) grid and inverted before any decode.

#include <cstdint>
#include <vector>

#include "hybridlm/interleave.hpp"

namespace hybridlm {

struct DelayGrid {
    int num_codebooks = 0;                   // J
    int num_frames = 0;                      // T (original frame count)
    int32_t pad_id = -1;
    std::vector<std::vector<int32_t>> rows;  // J rows, width T+J-1 (0 when T == 0)

    size_t width() const { return rows.empty() ? 0 : rows[0].size(); }
};

// grid[j][t'] = frames[t'-j][j] inside the window, pad elsewhere.
// Throws std::invalid_argument when a frame's arity != J.
DelayGrid apply_delay(const std::vector<Frame>& frames, int num_codebooks, int32_t pad_id);

// Exact left inverse of apply_delay. Throws std::invalid_argument when the
// grid shape is inconsistent, a pad sits inside the non-pad window, or a
// non-pad value sits in the pad margin.
std::vector<Frame> invert_delay(const DelayGrid& grid);

// Column `step` of a (possibly partially emitted) grid: the length-J unit fed
// back as the next-step input during generation. Throws std::out_of_range
// when the column has not been fully emitted.
Frame delayed_column(const DelayGrid& grid, size_t step);

// True when row j of a full grid starts with exactly j pads and ends with
// exactly J-1-j pads, with no pads in between.
bool grid_well_formed(const DelayGrid& grid);

}  // namespace hybridlm
