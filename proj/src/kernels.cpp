#include "ampnet/kernels.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ampnet {

namespace {

[[noreturn]] void shape_error(const char* what, std::size_t ar, std::size_t ac,
                              std::size_t br, std::size_t bc) {
    std::ostringstream msg;
    msg << what << ": " << ar << "x" << ac << " vs " << br << "x" << bc;
    throw std::invalid_argument(msg.str());
}

}  // namespace

Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) shape_error("matmul dimension mismatch", a.rows, a.cols, b.rows, b.cols);
    Matrix c(a.rows, b.cols);
    const std::size_t n = b.cols;
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* crow = c.data.data() + i * n;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.data[i * a.cols + k];
            if (aik == 0.0) continue;
            const double* brow = b.data.data() + k * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) shape_error("matmul_tn dimension mismatch", a.cols, a.rows, b.rows, b.cols);
    Matrix c(a.cols, b.cols);
    const std::size_t n = b.cols;
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = a.data.data() + k * a.cols;
        const double* brow = b.data.data() + k * n;
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            if (aki == 0.0) continue;
            double* crow = c.data.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) shape_error("matmul_nt dimension mismatch", a.rows, a.cols, b.cols, b.rows);
    Matrix c(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = b.data.data() + j * b.cols;
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
            c.at(i, j) = s;
        }
    }
    return c;
}

FeatureMap conv2d_forward(const FeatureMap& input, const ConvLayerParams& layer) {
    if (input.channels != layer.in_channels)
        shape_error("conv2d_forward channel mismatch", input.channels, 0, layer.in_channels, 0);
    const std::size_t h = input.height, w = input.width;
    FeatureMap out(layer.out_channels, h, w);
    // Out-of-range neighbours read from a shared zero row, so every output row
    // sees three valid input rows and only the left/right columns need special
    // handling.
    std::vector<double> zero_row(w, 0.0);
    const double* const zrow = zero_row.data();
    for (std::size_t co = 0; co < layer.out_channels; ++co) {
        double* const op = out.plane(co);
        if (layer.has_bias()) {
            const double b = layer.bias[co];
            for (std::size_t i = 0; i < h * w; ++i) op[i] = b;
        }
        for (std::size_t ci = 0; ci < layer.in_channels; ++ci) {
            const double* const ip = input.plane(ci);
            const double* k9 = layer.kernel.data() + (co * layer.in_channels + ci) * 9;
            const double k00 = k9[0], k01 = k9[1], k02 = k9[2];
            const double k10 = k9[3], k11 = k9[4], k12 = k9[5];
            const double k20 = k9[6], k21 = k9[7], k22 = k9[8];
            for (std::size_t y = 0; y < h; ++y) {
                double* __restrict orow = op + y * w;
                const double* __restrict irm = y > 0 ? ip + (y - 1) * w : zrow;
                const double* __restrict ir0 = ip + y * w;
                const double* __restrict irp = y + 1 < h ? ip + (y + 1) * w : zrow;
                if (w == 1) {
                    orow[0] += k01 * irm[0] + k11 * ir0[0] + k21 * irp[0];
                    continue;
                }
                orow[0] += k01 * irm[0] + k02 * irm[1] + k11 * ir0[0] + k12 * ir0[1] +
                           k21 * irp[0] + k22 * irp[1];
                for (std::size_t x = 1; x + 1 < w; ++x)
                    orow[x] += k00 * irm[x - 1] + k01 * irm[x] + k02 * irm[x + 1] +
                               k10 * ir0[x - 1] + k11 * ir0[x] + k12 * ir0[x + 1] +
                               k20 * irp[x - 1] + k21 * irp[x] + k22 * irp[x + 1];
                orow[w - 1] += k00 * irm[w - 2] + k01 * irm[w - 1] + k10 * ir0[w - 2] +
                               k11 * ir0[w - 1] + k20 * irp[w - 2] + k21 * irp[w - 1];
            }
        }
    }
    return out;
}

ConvGrads conv2d_backward(const FeatureMap& grad_out, const FeatureMap& cached_input,
                          const ConvLayerParams& layer) {
    if (grad_out.channels != layer.out_channels || grad_out.height != cached_input.height ||
        grad_out.width != cached_input.width || cached_input.channels != layer.in_channels)
        shape_error("conv2d_backward shape mismatch", grad_out.channels, grad_out.height,
                    layer.out_channels, cached_input.height);
    const std::size_t h = cached_input.height, w = cached_input.width;
    ConvGrads g;
    g.input = FeatureMap(layer.in_channels, h, w);
    g.kernel.assign(layer.kernel.size(), 0.0);
    if (layer.has_bias()) g.bias.assign(layer.out_channels, 0.0);
    std::vector<double> zero_row(w, 0.0);
    const double* const zrow = zero_row.data();

    for (std::size_t co = 0; co < layer.out_channels; ++co) {
        const double* const gp = grad_out.plane(co);
        if (layer.has_bias()) {
            double s = 0.0;
            for (std::size_t i = 0; i < h * w; ++i) s += gp[i];
            g.bias[co] = s;
        }
        for (std::size_t ci = 0; ci < layer.in_channels; ++ci) {
            const double* const ip = cached_input.plane(ci);
            double* const gip = g.input.plane(ci);
            const double* k9 = layer.kernel.data() + (co * layer.in_channels + ci) * 9;
            double* gk9 = g.kernel.data() + (co * layer.in_channels + ci) * 9;
            const double k00 = k9[0], k01 = k9[1], k02 = k9[2];
            const double k10 = k9[3], k11 = k9[4], k12 = k9[5];
            const double k20 = k9[6], k21 = k9[7], k22 = k9[8];
            // Input gradient: correlate grad_out with the 180-degree-rotated
            // kernel.  Output pixel (y+ky-1, x+kx-1) received k[ky][kx] * in(y, x),
            // so in-gradient row y gathers from grad rows y-1..y+1 with flipped
            // column offsets.
            for (std::size_t y = 0; y < h; ++y) {
                double* __restrict girow = gip + y * w;
                const double* __restrict grm = y > 0 ? gp + (y - 1) * w : zrow;
                const double* __restrict gr0 = gp + y * w;
                const double* __restrict grp = y + 1 < h ? gp + (y + 1) * w : zrow;
                if (w == 1) {
                    girow[0] += k01 * grp[0] + k11 * gr0[0] + k21 * grm[0];
                    continue;
                }
                girow[0] += k00 * grp[1] + k01 * grp[0] + k10 * gr0[1] + k11 * gr0[0] +
                            k20 * grm[1] + k21 * grm[0];
                for (std::size_t x = 1; x + 1 < w; ++x)
                    girow[x] += k00 * grp[x + 1] + k01 * grp[x] + k02 * grp[x - 1] +
                                k10 * gr0[x + 1] + k11 * gr0[x] + k12 * gr0[x - 1] +
                                k20 * grm[x + 1] + k21 * grm[x] + k22 * grm[x - 1];
                girow[w - 1] += k01 * grp[w - 1] + k02 * grp[w - 2] + k11 * gr0[w - 1] +
                                k12 * gr0[w - 2] + k21 * grm[w - 1] + k22 * grm[w - 2];
            }
            // Kernel gradient: nine shifted dot products accumulated in one sweep.
            double a00 = 0.0, a01 = 0.0, a02 = 0.0;
            double a10 = 0.0, a11 = 0.0, a12 = 0.0;
            double a20 = 0.0, a21 = 0.0, a22 = 0.0;
            for (std::size_t y = 0; y < h; ++y) {
                const double* __restrict grow = gp + y * w;
                const double* __restrict irm = y > 0 ? ip + (y - 1) * w : zrow;
                const double* __restrict ir0 = ip + y * w;
                const double* __restrict irp = y + 1 < h ? ip + (y + 1) * w : zrow;
                if (w == 1) {
                    const double g0 = grow[0];
                    a01 += g0 * irm[0];
                    a11 += g0 * ir0[0];
                    a21 += g0 * irp[0];
                    continue;
                }
                const double gl = grow[0];
                a01 += gl * irm[0];
                a02 += gl * irm[1];
                a11 += gl * ir0[0];
                a12 += gl * ir0[1];
                a21 += gl * irp[0];
                a22 += gl * irp[1];
#pragma omp simd reduction(+ : a00, a01, a02, a10, a11, a12, a20, a21, a22)
                for (std::size_t x = 1; x < w - 1; ++x) {
                    const double gv = grow[x];
                    a00 += gv * irm[x - 1];
                    a01 += gv * irm[x];
                    a02 += gv * irm[x + 1];
                    a10 += gv * ir0[x - 1];
                    a11 += gv * ir0[x];
                    a12 += gv * ir0[x + 1];
                    a20 += gv * irp[x - 1];
                    a21 += gv * irp[x];
                    a22 += gv * irp[x + 1];
                }
                const double gr = grow[w - 1];
                a00 += gr * irm[w - 2];
                a01 += gr * irm[w - 1];
                a10 += gr * ir0[w - 2];
                a11 += gr * ir0[w - 1];
                a20 += gr * irp[w - 2];
                a21 += gr * irp[w - 1];
            }
            gk9[0] += a00;
            gk9[1] += a01;
            gk9[2] += a02;
            gk9[3] += a10;
            gk9[4] += a11;
            gk9[5] += a12;
            gk9[6] += a20;
            gk9[7] += a21;
            gk9[8] += a22;
        }
    }
    return g;
}

FeatureMap relu_forward(const FeatureMap& input) {
    FeatureMap out = input;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

FeatureMap relu_backward(const FeatureMap& grad, const FeatureMap& cached_input) {
    if (cached_input.size() != grad.size() || cached_input.channels != grad.channels)
        throw std::invalid_argument("relu_backward: cached forward input missing or mismatched");
    FeatureMap out = grad;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        if (!(cached_input.data[i] > 0.0)) out.data[i] = 0.0;
    return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state) w = splitmix64(s);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(state[0] + state[3], 23) + state[0];
    const std::uint64_t t = state[1] << 17;
    state[2] ^= state[0];
    state[3] ^= state[1];
    state[1] ^= state[2];
    state[0] ^= state[3];
    state[2] ^= t;
    state[3] = rotl(state[3], 45);
    return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double variance) {
    if (!(variance > 0.0)) throw std::invalid_argument("gaussian_matrix: variance must be > 0");
    Matrix m(rows, cols);
    const double sd = std::sqrt(variance);
    for (double& v : m.data) v = sd * rng.normal();
    return m;
}

}  // namespace ampnet
