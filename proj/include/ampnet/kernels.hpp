#ifndef AMPNET_KERNELS_HPP
#define AMPNET_KERNELS_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

namespace ampnet {

// Dense row-major matrix of doubles. All numeric state in this project is
// 64-bit; gradient checks against finite differences rely on it.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, rows*cols entries

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    std::size_t size() const { return data.size(); }
};

Matrix identity(std::size_t n);
Matrix transpose(const Matrix& a);

// a * b. Throws std::invalid_argument naming both shapes on mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b and a * b^T without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// Channel-major feature map (c, y, x), used for CNN activations.
struct FeatureMap {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> data;

    FeatureMap() = default;
    FeatureMap(std::size_t c, std::size_t h, std::size_t w)
        : channels(c), height(h), width(w), data(c * h * w, 0.0) {}

    double* plane(std::size_t c) { return data.data() + c * height * width; }
    const double* plane(std::size_t c) const { return data.data() + c * height * width; }
    std::size_t size() const { return data.size(); }
};

// One 3x3 convolution layer, stride 1, zero padding 1 (output keeps the
// spatial size). kernel layout: [out][in][ky][kx]. bias is empty for
// layers that have none.
struct ConvLayerParams {
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::vector<double> kernel;  // out*in*9
    std::vector<double> bias;    // out or empty

    ConvLayerParams() = default;
    ConvLayerParams(std::size_t co, std::size_t ci, bool with_bias)
        : out_channels(co), in_channels(ci), kernel(co * ci * 9, 0.0),
          bias(with_bias ? co : 0, 0.0) {}

    bool has_bias() const { return !bias.empty(); }
    std::size_t param_count() const { return kernel.size() + bias.size(); }
};

FeatureMap conv2d_forward(const FeatureMap& input, const ConvLayerParams& layer);

struct ConvGrads {
    FeatureMap input;            // gradient w.r.t. the layer input
    std::vector<double> kernel;  // gradient w.r.t. the 3x3 weights
    std::vector<double> bias;    // gradient w.r.t. the bias (empty if none)
};

// Reverse-mode gradients of a scalar loss through conv2d_forward.
ConvGrads conv2d_backward(const FeatureMap& grad_out, const FeatureMap& cached_input,
                          const ConvLayerParams& layer);

FeatureMap relu_forward(const FeatureMap& input);
// Pass-through where the cached forward input is > 0; the derivative at
// exactly 0 is taken as 0.
FeatureMap relu_backward(const FeatureMap& grad, const FeatureMap& cached_input);

// Seedable xoshiro256++ generator (Blackman & Vigna), seeded through
// splitmix64 so any 64-bit seed gives a well-mixed state. Normal deviates
// come from the Marsaglia polar variant of Box-Muller; one spare value is
// cached between calls. Identical seeds reproduce identical streams.
struct Rng {
    std::uint64_t state[4];

    explicit Rng(std::uint64_t seed);
    std::uint64_t next_u64();
    double uniform();              // [0, 1)
    double normal();               // standard normal
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Matrix with i.i.d. N(0, variance) entries. variance must be > 0.
Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double variance);

}  // namespace ampnet

#endif
