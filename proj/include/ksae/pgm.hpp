#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ksae/dense_matrix.hpp"
#include "ksae/io.hpp"

namespace ksae {

// Filter grid layout. Every column of W (one atom) is reshaped row-major to a
// tile_rows x tile_cols tile and min-max scaled to [0, 255] on its own,
// rounding to nearest; a tile whose values are all equal is drawn at 128.
// Tiles fill a grid of ceil(sqrt(n)) columns row by row, separated by
// 1-pixel black (0) lines. There is no outer border; unused cells are black.
struct GridLayout {
    std::size_t tile_rows = 0;
    std::size_t tile_cols = 0;
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;

    std::size_t width() const noexcept { return grid_cols * tile_cols + (grid_cols > 0 ? grid_cols - 1 : 0); }
    std::size_t height() const noexcept { return grid_rows * tile_rows + (grid_rows > 0 ? grid_rows - 1 : 0); }
};

GridLayout grid_layout(std::size_t filters, std::size_t tile_rows, std::size_t tile_cols);

struct GrayImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

// Uses the first `max_filters` atoms (all when 0). Throws if
// tile_rows * tile_cols != W.rows().
GrayImage render_filter_grid(const DenseMatrix& w, std::size_t tile_rows, std::size_t tile_cols,
                             std::size_t max_filters = 0);

// Binary PGM: "P5\n<w> <h>\n255\n" followed by the pixels.
Bytes encode_pgm(const GrayImage& image);

}  // namespace ksae
