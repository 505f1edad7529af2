#ifndef AMPNET_SAMPLING_HPP
#define AMPNET_SAMPLING_HPP

#include "ampnet/blocking.hpp"
#include "ampnet/kernels.hpp"

namespace ampnet {

// Block sampling operator: one M x n^2 matrix shared by all blocks.
struct SamplingModel {
    Matrix A;                // M x n^2
    std::size_t n = 0;       // block size
    std::size_t m = 0;       // measurements per block
    double ratio = 0.0;      // m / n^2
    bool trainable = false;  // true for the -M variants
};

// Per-block measurements; column i samples block i.
struct Measurement {
    Matrix Y;  // M x I
    BlockGeometry geometry;
};

// M = round(ratio * n^2), at least 1. ratio must lie in (0, 1].
std::size_t ratio_to_m(double ratio, std::size_t n);

// Rows drawn i.i.d. N(0, 1/M), then orthonormalized via Householder QR of
// A^T with the diagonal of R kept nonnegative, so the result is unique for
// a given seed. Requires M <= n^2.
SamplingModel init_sampling_matrix(Rng& rng, std::size_t m, std::size_t n);

// Y = A vec(split(image, n)).
Measurement measure(const SamplingModel& model, const Image& image);

// Z = Y - A vec(split(x, n)). Rejects geometry disagreements.
Matrix residual(const SamplingModel& model, const Measurement& y, const Image& x);

// Orthonormalizes the rows of a (rows <= cols) in place semantics: returns
// the row-orthonormal matrix with the QR sign convention above.
Matrix orthonormalize_rows(const Matrix& a);

}  // namespace ampnet

#endif
