#include "ksae/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ksae {

GridLayout grid_layout(std::size_t filters, std::size_t tile_rows, std::size_t tile_cols) {
    GridLayout g{tile_rows, tile_cols, 0, 0};
    if (filters == 0) return g;
    std::size_t cols = static_cast<std::size_t>(std::sqrt(static_cast<double>(filters)));
    while (cols * cols < filters) ++cols;
    g.grid_cols = cols;
    g.grid_rows = (filters + cols - 1) / cols;
    return g;
}

GrayImage render_filter_grid(const DenseMatrix& w, std::size_t tile_rows, std::size_t tile_cols,
                             std::size_t max_filters) {
    if (tile_rows == 0 || tile_cols == 0 || tile_rows * tile_cols != w.rows())
        throw std::invalid_argument("render_filter_grid: filters of length " + std::to_string(w.rows()) +
                                    " cannot be shown as " + std::to_string(tile_rows) + "x" +
                                    std::to_string(tile_cols) + " tiles");
    const std::size_t n = max_filters == 0 ? w.cols() : std::min(max_filters, w.cols());
    const GridLayout g = grid_layout(n, tile_rows, tile_cols);
    GrayImage img{g.width(), g.height(), {}};
    img.pixels.assign(img.width * img.height, 0);

    for (std::size_t f = 0; f < n; ++f) {
        const Vector atom = w.column(f);
        const auto [lo_it, hi_it] = std::minmax_element(atom.begin(), atom.end());
        const double lo = *lo_it;
        const double range = *hi_it - lo;
        const std::size_t top = (f / g.grid_cols) * (tile_rows + 1);
        const std::size_t left = (f % g.grid_cols) * (tile_cols + 1);
        for (std::size_t r = 0; r < tile_rows; ++r)
            for (std::size_t c = 0; c < tile_cols; ++c) {
                const double v = atom[r * tile_cols + c];
                const double scaled = range > 0.0 ? std::round(255.0 * (v - lo) / range) : 128.0;
                img.pixels[(top + r) * img.width + left + c] = static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
            }
    }
    return img;
}

Bytes encode_pgm(const GrayImage& image) {
    if (image.pixels.size() != image.width * image.height)
        throw std::invalid_argument("encode_pgm: pixel count does not match the image size");
    const std::string header = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    Bytes out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

}  // namespace ksae
