#ifndef AMPNET_TRAINING_HPP
#define AMPNET_TRAINING_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ampnet/model.hpp"

namespace ampnet {

// Gradients of one four-layer CNN, shapes mirroring CnnParams.
struct CnnGrads {
    std::array<std::vector<double>, 4> kernel;
    std::array<std::vector<double>, 4> bias;
};

// One array per trainable leaf of the model. A is filled only when the
// sampling matrix is trainable; it is always allocated so the leaf list
// lines up with the parameter list.
struct Gradients {
    Matrix A;
    Matrix B;
    std::vector<double> alphas;
    std::vector<CnnGrads> denoisers;
    std::vector<CnnGrads> deblockers;
};

Gradients make_gradients(const AmpNetModel& model);

// Named view of one flat parameter (or gradient) array. The enumeration
// order is fixed: A, B, alpha, then denoiser and deblocker conv layers in
// module order; every consumer (Adam, checkpoints, gradient checks) relies
// on that order.
struct LeafView {
    std::string name;
    double* data = nullptr;
    std::size_t size = 0;
    std::vector<std::size_t> shape;
    bool trainable = true;
};

std::vector<LeafView> parameter_leaves(AmpNetModel& model);
std::vector<LeafView> gradient_leaves(Gradients& grads, const AmpNetModel& model);

// (1/(N_a N_b)) sum over the batch of squared differences. All images must
// share one shape.
double loss(const std::vector<Image>& truth, const std::vector<Image>& recon);

// Forward loss of the model against a batch of ground-truth images, each
// measured with the model's own sampling matrix.
double evaluate_loss(const AmpNetModel& model, const std::vector<Image>& batch);

struct BackwardResult {
    double loss = 0.0;
    Gradients grads;
};

// Reverse-mode gradient of the batch loss with respect to every trainable
// leaf, including both appearances of A (sampling and reconstruction) when
// the matrix is trainable. Per-sample work may be spread across threads;
// per-sample gradients are always reduced in sample order, so the result
// is bit-identical for any thread count. Throws if a non-finite value
// appears, naming the offending leaf.
BackwardResult backward(const AmpNetModel& model, const std::vector<Image>& batch,
                        std::size_t threads = 1);

// Per-iteration upstream gradients in block-column space: entry k holds
// d(loss)/d(x^k) as an n^2 x I matrix, k = 0..K. Computed by the downward
// recursion g_{k-1} = (I - a_k A^T A) g_k + J^T (I - a_k A^T A) g_k with J
// the denoiser Jacobian, independently of the tape engine. Only valid for
// models without deblockers on images whose dims are multiples of n.
struct UpstreamGradients {
    std::vector<Matrix> per_iter;
};

std::vector<UpstreamGradients> upstream_gradients(const AmpNetModel& model,
                                                  const std::vector<Image>& batch);

// Closed-form gradient of A: the sampling term B^T g_0 xbar^T plus, per
// iteration, a_k A (g_k xhat^T + xhat g_k^T) with
// xhat = xbar - x^{k-1} - vec(N_k(x^{k-1})), summed over the batch.
// Rejects models with deblockers and images that need padding.
Matrix grad_A_oracle(const AmpNetModel& model, const std::vector<Image>& batch,
                     const std::vector<UpstreamGradients>& upstream);

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
    std::uint64_t seed = 1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    Variant variant = Variant::plain;
    std::size_t K = 2;
    double ratio = 0.3;
    std::size_t threads = 1;
};

struct AdamState {
    std::size_t t = 0;
    std::vector<std::vector<double>> m;  // per leaf, parameter_leaves order
    std::vector<std::vector<double>> v;
};

AdamState make_adam_state(AmpNetModel& model);

// Standard bias-corrected Adam update of every trainable leaf.
void adam_step(AmpNetModel& model, const Gradients& grads, AdamState& state,
               const TrainConfig& cfg);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_psnr = 0.0;
};

struct FitResult {
    AmpNetModel best_model;
    double best_val_psnr = 0.0;
    std::size_t best_epoch = 0;
    std::vector<EpochRecord> history;
};

// Mini-batch training with a seeded shuffle per epoch (last partial batch
// kept) and per-epoch validation PSNR; returns the snapshot with the best
// validation PSNR plus the full history. Non-finite loss aborts with the
// epoch and batch in the message.
FitResult fit(const AmpNetModel& model, const std::vector<Image>& train_set,
              const std::vector<Image>& val_set, const TrainConfig& cfg,
              const std::function<void(const EpochRecord&)>& on_epoch = nullptr);

// Reverse-mode gradients of one CNN given its forward tape: accumulates
// layer gradients into acc and returns the gradient w.r.t. the CNN input.
FeatureMap cnn_backward(const CnnParams& p, const CnnTape& tape, const FeatureMap& grad_out,
                        CnnGrads& acc);

// The default seed is chosen so no ReLU pre-activation of the reference
// instance sits within the finite-difference step of zero; probing across
// a kink would invalidate the comparison for that element.
struct GradcheckOptions {
    std::uint64_t seed = 12;
    std::size_t samples_per_leaf = 24;  // FD probes per parameter array
    double fd_step = 1e-5;
    double rel_tol = 1e-4;
    double oracle_tol = 1e-8;
};

struct GradcheckResult {
    double max_rel_err = 0.0;  // finite differences vs engine, all leaves
    std::string worst_leaf;
    double alpha_rel_err = 0.0;   // scalar alpha check
    double oracle_max_abs = 0.0;  // engine A-gradient vs closed form
    double rel_tol = 0.0;
    double oracle_tol = 0.0;
    bool pass() const { return max_rel_err < rel_tol && oracle_max_abs < oracle_tol; }
};

// Builds the reference small instances (K=2, n=8, M=16; one 16x16 image):
// a BM model for the finite-difference sweep and an M model for the
// closed-form cross-check.
GradcheckResult run_gradcheck(const GradcheckOptions& opt);

// Central finite difference of evaluate_loss w.r.t. *elem.
double numeric_grad(AmpNetModel& model, const std::vector<Image>& batch, double* elem,
                    double step);

}  // namespace ampnet

#endif
