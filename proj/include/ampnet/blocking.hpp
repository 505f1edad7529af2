#ifndef AMPNET_BLOCKING_HPP
#define AMPNET_BLOCKING_HPP

#include <cstddef>
#include <vector>

#include "ampnet/kernels.hpp"

namespace ampnet {

// Single-channel image, pixels in [0,1] for inputs. Intermediate
// reconstructions may leave the range; clipping happens only on export.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;  // row-major

    Image() = default;
    Image(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w, 0.0) {}

    double& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
    double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
    std::size_t size() const { return pixels.size(); }
};

// Geometry of a block decomposition: block size, grid shape, the original
// image dimensions and the right/bottom padding that was applied to make
// them divisible.
struct BlockGeometry {
    std::size_t block_size = 0;
    std::size_t blocks_per_col = 0;  // vertical count
    std::size_t blocks_per_row = 0;  // horizontal count
    std::size_t orig_height = 0;
    std::size_t orig_width = 0;
    std::size_t pad_bottom = 0;
    std::size_t pad_right = 0;

    std::size_t block_count() const { return blocks_per_col * blocks_per_row; }
    std::size_t padded_height() const { return blocks_per_col * block_size; }
    std::size_t padded_width() const { return blocks_per_row * block_size; }

    bool operator==(const BlockGeometry&) const = default;
};

// Non-overlapping n x n blocks in row-major grid order; each block stored
// row-major.
struct BlockGrid {
    BlockGeometry geo;
    std::vector<double> blocks;  // block_count() * n * n

    double* block(std::size_t i) { return blocks.data() + i * geo.block_size * geo.block_size; }
    const double* block(std::size_t i) const {
        return blocks.data() + i * geo.block_size * geo.block_size;
    }
};

// Maps a padded coordinate back to its source index via symmetric
// reflection (edge included), so padding never invents pixel values.
std::size_t reflect_index(std::size_t pos, std::size_t size);

// Cut the image into n x n blocks, reflect-padding on the right/bottom
// when the dimensions are not divisible by n.
BlockGrid split(const Image& image, std::size_t n);

// Inverse of split: reassemble and drop the padding. Rejects grids whose
// block count disagrees with their geometry.
Image merge(const BlockGrid& grid);

// Column i is block i flattened row-major; result is n^2 x I.
Matrix vectorize(const BlockGrid& grid);

// Inverse of vectorize for the given geometry. Rejects shape mismatches.
BlockGrid devectorize(const Matrix& columns, const BlockGeometry& geo);

// Adjoint of the linear map image -> vectorize(split(image, n)): folds
// per-column gradients back onto the original pixels, accumulating where
// reflection duplicated them.
Image split_adjoint(const Matrix& col_grads, const BlockGeometry& geo);

// Adjoint of columns -> merge(devectorize(columns)): scatter the image
// gradient into block columns, zero where merge discarded padding.
Matrix merge_adjoint(const Image& image_grad, const BlockGeometry& geo);

BlockGeometry geometry_for(std::size_t height, std::size_t width, std::size_t n);

}  // namespace ampnet

#endif
