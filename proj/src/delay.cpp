#include "hybridlm/delay.hpp"

#include <stdexcept>
#include <string>

namespace hybridlm {

DelayGrid apply_delay(const std::vector<Frame>& frames, int num_codebooks, int32_t pad_id) {
    if (num_codebooks < 1) throw std::invalid_argument("num_codebooks must be >= 1");
    for (size_t t = 0; t < frames.size(); ++t) {
        if ((int)frames[t].size() != num_codebooks)
            throw std::invalid_argument("frame " + std::to_string(t) + " has arity " +
                                        std::to_string(frames[t].size()) + ", expected " +
                                        std::to_string(num_codebooks));
    }

    DelayGrid grid;
    grid.num_codebooks = num_codebooks;
    grid.num_frames = (int)frames.size();
    grid.pad_id = pad_id;

    const int T = grid.num_frames;
    const int J = num_codebooks;
    const int width = T == 0 ? 0 : T + J - 1;
    grid.rows.assign((size_t)J, std::vector<int32_t>((size_t)width, pad_id));
    for (int j = 0; j < J; ++j)
        for (int t = 0; t < T; ++t)
            grid.rows[j][(size_t)(t + j)] = frames[t][(size_t)j];
    return grid;
}

static void check_shape(const DelayGrid& grid) {
    const int J = grid.num_codebooks;
    if (J < 1 || (int)grid.rows.size() != J)
        throw std::invalid_argument("grid must have exactly J rows");
    size_t w = grid.rows[0].size();
    for (const auto& row : grid.rows)
        if (row.size() != w) throw std::invalid_argument("grid rows have unequal widths");
}

std::vector<Frame> invert_delay(const DelayGrid& grid) {
    check_shape(grid);
    const int J = grid.num_codebooks;
    const size_t w = grid.width();
    if (w == 0) return {};
    if (w < (size_t)J)
        throw std::invalid_argument("grid width " + std::to_string(w) +
                                    " inconsistent with J = " + std::to_string(J));
    const int T = (int)w - J + 1;

    std::vector<Frame> frames((size_t)T, Frame((size_t)J, 0));
    for (int j = 0; j < J; ++j) {
        for (size_t c = 0; c < w; ++c) {
            bool in_window = c >= (size_t)j && c < (size_t)(j + T);
            int32_t v = grid.rows[(size_t)j][c];
            if (in_window) {
                if (v == grid.pad_id)
                    throw std::invalid_argument("pad inside non-pad window at row " +
                                                std::to_string(j) + " col " + std::to_string(c));
                frames[c - (size_t)j][(size_t)j] = v;
            } else if (v != grid.pad_id) {
                throw std::invalid_argument("non-pad value in pad margin at row " +
                                            std::to_string(j) + " col " + std::to_string(c));
            }
        }
    }
    return frames;
}

Frame delayed_column(const DelayGrid& grid, size_t step) {
    check_shape(grid);
    if (step >= grid.width())
        throw std::out_of_range("column " + std::to_string(step) +
                                " not yet emitted (width " + std::to_string(grid.width()) + ")");
    Frame col((size_t)grid.num_codebooks);
    for (int j = 0; j < grid.num_codebooks; ++j) col[(size_t)j] = grid.rows[(size_t)j][step];
    return col;
}

bool grid_well_formed(const DelayGrid& grid) {
    try {
        invert_delay(grid);
    } catch (const std::invalid_argument&) {
        return false;
    }
    return true;
}

}  // namespace hybridlm
