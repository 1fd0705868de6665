#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "flowbm/common.hpp"

namespace flowbm {

/// Binary PGM (P5) of square images (columns of `images`, values in [0,1],
/// row-major pixels) tiled `per_row` to a row, with a 1-pixel black gutter.
inline void write_image_grid(const std::string& path, const Eigen::MatrixXd& images, int per_row, int side = 28) {
    require(images.rows() == Eigen::Index(side) * side, "write_image_grid: images must be side x side");
    require(per_row >= 1, "write_image_grid: per_row must be at least 1");
    const int count = int(images.cols());
    const int cols = std::max(1, std::min(per_row, count));
    const int rows = std::max(1, (count + cols - 1) / cols);
    const int width = cols * (side + 1) + 1, height = rows * (side + 1) + 1;
    std::vector<unsigned char> pixels(std::size_t(width) * std::size_t(height), 0);
    for (int k = 0; k < count; ++k) {
        const int ox = 1 + (k % cols) * (side + 1), oy = 1 + (k / cols) * (side + 1);
        for (int r = 0; r < side; ++r)
            for (int c = 0; c < side; ++c) {
                const double v = std::clamp(images(r * side + c, k), 0.0, 1.0);
                pixels[std::size_t(oy + r) * std::size_t(width) + std::size_t(ox + c)] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "P5\n" << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(pixels.data()), std::streamsize(pixels.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace flowbm
