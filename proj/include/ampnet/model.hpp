#ifndef AMPNET_MODEL_HPP
#define AMPNET_MODEL_HPP

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "ampnet/blocking.hpp"
#include "ampnet/kernels.hpp"
#include "ampnet/sampling.hpp"

namespace ampnet {

// plain: denoising modules only; b: + deblocking; m: + trainable sampling
// matrix; bm: both.
enum class Variant { plain, b, m, bm };

bool variant_has_deblocker(Variant v);
bool variant_trains_matrix(Variant v);
Variant parse_variant(const std::string& name);  // "plain" | "B" | "M" | "BM"
std::string variant_name(Variant v);

// Four 3x3 conv layers, channels 1->32->32->32->1. The first three carry a
// bias and a ReLU; the last has neither. 19104 parameters.
struct CnnParams {
    std::array<ConvLayerParams, 4> layers;
    std::size_t param_count() const;
};

using DenoiserParams = CnnParams;
using DeblockerParams = CnnParams;

// Per-layer forward caches needed by the backward pass: the input each conv
// saw and its output before the activation.
struct CnnTape {
    std::array<FeatureMap, 4> inputs;
    std::array<FeatureMap, 4> pre_act;
};

CnnParams init_cnn(Rng& rng);  // Gaussian weights, std sqrt(2/fan_in); zero biases
FeatureMap cnn_forward(const CnnParams& p, const FeatureMap& input, CnnTape* tape = nullptr);

struct AmpNetModel {
    SamplingModel sampling;                   // holds A (M x n^2)
    Matrix B;                                 // n^2 x M, initialized to A^T
    std::vector<double> alphas;               // one control scalar per module
    std::vector<DenoiserParams> denoisers;    // K modules
    std::vector<DeblockerParams> deblockers;  // K modules, or empty
    std::size_t K = 0;
    Variant variant = Variant::plain;
};

// Seeded construction. Draw order is fixed (A, then denoisers, then
// deblockers) so a seed pins every parameter.
AmpNetModel make_model(Rng& rng, Variant variant, std::size_t K, std::size_t n, std::size_t m);

// Same structure with every parameter zero; checkpoint loading fills it.
AmpNetModel make_model_shell(Variant variant, std::size_t K, std::size_t n, std::size_t m);

struct IterationState {
    Image X;   // current estimate x^k
    Matrix Z;  // residual z^k, M x I
    Matrix e;  // optional noise-term columns, n^2 x I
};

// X^0 = merge(devectorize(B Y)), cropped to the measured dims.
Image init_estimate(const AmpNetModel& model, const Measurement& y);

// Runs the denoising CNN on every block.
BlockGrid denoiser_forward(const DenoiserParams& theta, const BlockGrid& blocks);

// One unrolled iteration (1-based k):
// x^k = alpha_k A^T z + x^{k-1} - (alpha_k A^T A - I) vec(N_k(x^{k-1})).
Image reconstruction_step(const AmpNetModel& model, std::size_t k, const Measurement& y,
                          const Image& x_prev);

// Whole-image residual correction: X - B(X).
Image deblock(const DeblockerParams& omega, const Image& x);

// Initialization followed by K iterations, each deblocked when the variant
// has deblockers. Returns the estimate at the original dims.
Image forward(const AmpNetModel& model, const Measurement& y);

struct NoiseTerm {
    std::vector<double> lhs;  // alpha A^T (A x_true - A x_est) + x_est
    std::vector<double> rhs;  // x_true + (alpha A^T A - I)(x_true - x_est)
};

// Both sides of the noise-term identity; alpha = 1 gives the ungeneralized
// form. Returned separately so tests can compare them.
NoiseTerm noise_term(const Matrix& a, const std::vector<double>& x_true,
                     const std::vector<double>& x_est, double alpha = 1.0);

enum class ThresholdSchedule { fixed, decaying };

struct BaselineConfig {
    std::size_t iterations = 30;
    double threshold = 0.0;  // lambda for the fixed schedule
    ThresholdSchedule schedule = ThresholdSchedule::fixed;
};

// Classical soft-threshold AMP-style iteration from x = 0:
//   z <- y - A x;  x <- soft(A^T z + x, lambda_t).
// The decaying schedule uses lambda_t = max|A^T y| * 0.8^t.
std::vector<double> amp_baseline(const Matrix& a, const std::vector<double>& y,
                                 const BaselineConfig& cfg);

// Trainable-parameter count; include_matrices adds B and (for the -M
// variants) A on top of {alpha_k, denoisers, deblockers}.
std::size_t param_count(const AmpNetModel& model, bool include_matrices);

}  // namespace ampnet

#endif
