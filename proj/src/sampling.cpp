#include "ampnet/sampling.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ampnet {

std::size_t ratio_to_m(double ratio, std::size_t n) {
    if (!(ratio > 0.0) || ratio > 1.0)
        throw std::invalid_argument("ratio_to_m: ratio must be in (0, 1]");
    const double m = std::round(ratio * static_cast<double>(n * n));
    return m < 1.0 ? 1 : static_cast<std::size_t>(m);
}

Matrix orthonormalize_rows(const Matrix& a) {
    const std::size_t r = a.cols;  // working on a^T, r x c
    const std::size_t c = a.rows;
    if (c > r) throw std::invalid_argument("orthonormalize_rows: more rows than columns");

    Matrix t = transpose(a);
    std::vector<double> vstore(r * c, 0.0);  // Householder vectors, column-major per step

    for (std::size_t k = 0; k < c; ++k) {
        double norm2 = 0.0;
        for (std::size_t i = k; i < r; ++i) norm2 += t.at(i, k) * t.at(i, k);
        const double norm = std::sqrt(norm2);
        double* v = vstore.data() + k * r;
        if (norm == 0.0) continue;
        const double alpha = t.at(k, k) >= 0.0 ? -norm : norm;
        v[k] = t.at(k, k) - alpha;
        for (std::size_t i = k + 1; i < r; ++i) v[i] = t.at(i, k);
        double vtv = 0.0;
        for (std::size_t i = k; i < r; ++i) vtv += v[i] * v[i];
        if (vtv == 0.0) continue;
        const double scale = 2.0 / vtv;
        t.at(k, k) = alpha;
        for (std::size_t i = k + 1; i < r; ++i) t.at(i, k) = 0.0;
        for (std::size_t j = k + 1; j < c; ++j) {
            double dot = 0.0;
            for (std::size_t i = k; i < r; ++i) dot += v[i] * t.at(i, j);
            dot *= scale;
            for (std::size_t i = k; i < r; ++i) t.at(i, j) -= dot * v[i];
        }
    }

    // q = H_0 H_1 ... H_{c-1} applied to the first c columns of I_r
    Matrix q(r, c);
    for (std::size_t j = 0; j < c; ++j) q.at(j, j) = 1.0;
    for (std::size_t k = c; k-- > 0;) {
        const double* v = vstore.data() + k * r;
        double vtv = 0.0;
        for (std::size_t i = k; i < r; ++i) vtv += v[i] * v[i];
        if (vtv == 0.0) continue;
        const double scale = 2.0 / vtv;
        for (std::size_t j = 0; j < c; ++j) {
            double dot = 0.0;
            for (std::size_t i = k; i < r; ++i) dot += v[i] * q.at(i, j);
            dot *= scale;
            for (std::size_t i = k; i < r; ++i) q.at(i, j) -= dot * v[i];
        }
    }

    // rows of the result are columns of q, sign-fixed so diag(R) >= 0
    Matrix out(c, r);
    for (std::size_t i = 0; i < c; ++i) {
        const double sign = t.at(i, i) < 0.0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < r; ++j) out.at(i, j) = sign * q.at(j, i);
    }
    return out;
}

SamplingModel init_sampling_matrix(Rng& rng, std::size_t m, std::size_t n) {
    const std::size_t n2 = n * n;
    if (m == 0 || m > n2) {
        std::ostringstream msg;
        msg << "init_sampling_matrix: M=" << m << " not in [1, " << n2 << "]";
        throw std::invalid_argument(msg.str());
    }
    SamplingModel model;
    model.n = n;
    model.m = m;
    model.ratio = static_cast<double>(m) / static_cast<double>(n2);
    model.A = orthonormalize_rows(gaussian_matrix(rng, m, n2, 1.0 / static_cast<double>(m)));
    return model;
}

Measurement measure(const SamplingModel& model, const Image& image) {
    BlockGrid grid = split(image, model.n);
    Measurement out;
    out.geometry = grid.geo;
    out.Y = matmul(model.A, vectorize(grid));
    return out;
}

Matrix residual(const SamplingModel& model, const Measurement& y, const Image& x) {
    BlockGrid grid = split(x, model.n);
    if (!(grid.geo == y.geometry))
        throw std::invalid_argument("residual: image geometry does not match measurement");
    Matrix ax = matmul(model.A, vectorize(grid));
    Matrix z = y.Y;
    for (std::size_t i = 0; i < z.data.size(); ++i) z.data[i] -= ax.data[i];
    return z;
}

}  // namespace ampnet
