#include "ampnet/blocking.hpp"

#include <sstream>
#include <stdexcept>

namespace ampnet {

namespace {

void check_grid(const BlockGrid& grid) {
    const auto& g = grid.geo;
    if (g.block_size == 0 || g.block_count() == 0 ||
        grid.blocks.size() != g.block_count() * g.block_size * g.block_size ||
        g.padded_height() != g.orig_height + g.pad_bottom ||
        g.padded_width() != g.orig_width + g.pad_right) {
        std::ostringstream msg;
        msg << "inconsistent block grid: " << grid.blocks.size() << " values for "
            << g.blocks_per_col << "x" << g.blocks_per_row << " blocks of size " << g.block_size;
        throw std::invalid_argument(msg.str());
    }
}

}  // namespace

std::size_t reflect_index(std::size_t pos, std::size_t size) {
    if (pos < size) return pos;
    const std::size_t period = 2 * size;
    std::size_t m = pos % period;
    return m < size ? m : period - 1 - m;
}

BlockGeometry geometry_for(std::size_t height, std::size_t width, std::size_t n) {
    if (n == 0 || height == 0 || width == 0)
        throw std::invalid_argument("split: block size and image dims must be positive");
    BlockGeometry g;
    g.block_size = n;
    g.blocks_per_col = (height + n - 1) / n;
    g.blocks_per_row = (width + n - 1) / n;
    g.orig_height = height;
    g.orig_width = width;
    g.pad_bottom = g.blocks_per_col * n - height;
    g.pad_right = g.blocks_per_row * n - width;
    return g;
}

BlockGrid split(const Image& image, std::size_t n) {
    BlockGrid grid;
    grid.geo = geometry_for(image.height, image.width, n);
    const auto& g = grid.geo;
    grid.blocks.resize(g.block_count() * n * n);
    for (std::size_t by = 0; by < g.blocks_per_col; ++by) {
        for (std::size_t bx = 0; bx < g.blocks_per_row; ++bx) {
            double* blk = grid.block(by * g.blocks_per_row + bx);
            for (std::size_t y = 0; y < n; ++y) {
                const std::size_t sy = reflect_index(by * n + y, image.height);
                const double* row = image.pixels.data() + sy * image.width;
                for (std::size_t x = 0; x < n; ++x)
                    blk[y * n + x] = row[reflect_index(bx * n + x, image.width)];
            }
        }
    }
    return grid;
}

Image merge(const BlockGrid& grid) {
    check_grid(grid);
    const auto& g = grid.geo;
    const std::size_t n = g.block_size;
    Image out(g.orig_height, g.orig_width);
    for (std::size_t by = 0; by < g.blocks_per_col; ++by) {
        const std::size_t ylim = by * n >= g.orig_height ? 0 : std::min(n, g.orig_height - by * n);
        for (std::size_t bx = 0; bx < g.blocks_per_row; ++bx) {
            const std::size_t xlim = bx * n >= g.orig_width ? 0 : std::min(n, g.orig_width - bx * n);
            const double* blk = grid.block(by * g.blocks_per_row + bx);
            for (std::size_t y = 0; y < ylim; ++y) {
                double* row = out.pixels.data() + (by * n + y) * g.orig_width + bx * n;
                for (std::size_t x = 0; x < xlim; ++x) row[x] = blk[y * n + x];
            }
        }
    }
    return out;
}

Matrix vectorize(const BlockGrid& grid) {
    check_grid(grid);
    const std::size_t n2 = grid.geo.block_size * grid.geo.block_size;
    const std::size_t count = grid.geo.block_count();
    Matrix m(n2, count);
    for (std::size_t i = 0; i < count; ++i) {
        const double* blk = grid.block(i);
        for (std::size_t r = 0; r < n2; ++r) m.at(r, i) = blk[r];
    }
    return m;
}

BlockGrid devectorize(const Matrix& columns, const BlockGeometry& geo) {
    const std::size_t n2 = geo.block_size * geo.block_size;
    if (columns.rows != n2 || columns.cols != geo.block_count()) {
        std::ostringstream msg;
        msg << "devectorize: got " << columns.rows << "x" << columns.cols << ", geometry requires "
            << n2 << "x" << geo.block_count();
        throw std::invalid_argument(msg.str());
    }
    BlockGrid grid;
    grid.geo = geo;
    grid.blocks.resize(n2 * geo.block_count());
    for (std::size_t i = 0; i < geo.block_count(); ++i) {
        double* blk = grid.block(i);
        for (std::size_t r = 0; r < n2; ++r) blk[r] = columns.at(r, i);
    }
    return grid;
}

Image split_adjoint(const Matrix& col_grads, const BlockGeometry& geo) {
    BlockGrid grid = devectorize(col_grads, geo);
    const std::size_t n = geo.block_size;
    Image out(geo.orig_height, geo.orig_width);
    for (std::size_t by = 0; by < geo.blocks_per_col; ++by) {
        for (std::size_t bx = 0; bx < geo.blocks_per_row; ++bx) {
            const double* blk = grid.block(by * geo.blocks_per_row + bx);
            for (std::size_t y = 0; y < n; ++y) {
                const std::size_t sy = reflect_index(by * n + y, geo.orig_height);
                double* row = out.pixels.data() + sy * geo.orig_width;
                for (std::size_t x = 0; x < n; ++x)
                    row[reflect_index(bx * n + x, geo.orig_width)] += blk[y * n + x];
            }
        }
    }
    return out;
}

Matrix merge_adjoint(const Image& image_grad, const BlockGeometry& geo) {
    if (image_grad.height != geo.orig_height || image_grad.width != geo.orig_width)
        throw std::invalid_argument("merge_adjoint: image gradient does not match geometry");
    const std::size_t n = geo.block_size;
    Matrix cols(n * n, geo.block_count());
    for (std::size_t by = 0; by < geo.blocks_per_col; ++by) {
        const std::size_t ylim = by * n >= geo.orig_height ? 0 : std::min(n, geo.orig_height - by * n);
        for (std::size_t bx = 0; bx < geo.blocks_per_row; ++bx) {
            const std::size_t xlim = bx * n >= geo.orig_width ? 0 : std::min(n, geo.orig_width - bx * n);
            const std::size_t i = by * geo.blocks_per_row + bx;
            for (std::size_t y = 0; y < ylim; ++y) {
                const double* row = image_grad.pixels.data() + (by * n + y) * geo.orig_width + bx * n;
                for (std::size_t x = 0; x < xlim; ++x) cols.at(y * n + x, i) = row[x];
            }
        }
    }
    return cols;
}

}  // namespace ampnet
