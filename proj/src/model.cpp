#include "ampnet/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace ampnet {

bool variant_has_deblocker(Variant v) { return v == Variant::b || v == Variant::bm; }
bool variant_trains_matrix(Variant v) { return v == Variant::m || v == Variant::bm; }

Variant parse_variant(const std::string& name) {
    if (name == "plain") return Variant::plain;
    if (name == "B" || name == "b") return Variant::b;
    if (name == "M" || name == "m") return Variant::m;
    if (name == "BM" || name == "bm") return Variant::bm;
    throw std::invalid_argument("unknown variant '" + name + "' (expected plain, B, M or BM)");
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::plain: return "plain";
        case Variant::b: return "B";
        case Variant::m: return "M";
        case Variant::bm: return "BM";
    }
    return "plain";
}

std::size_t CnnParams::param_count() const {
    std::size_t total = 0;
    for (const ConvLayerParams& l : layers) total += l.param_count();
    return total;
}

CnnParams init_cnn(Rng& rng) {
    CnnParams p;
    p.layers[0] = ConvLayerParams(32, 1, true);
    p.layers[1] = ConvLayerParams(32, 32, true);
    p.layers[2] = ConvLayerParams(32, 32, true);
    p.layers[3] = ConvLayerParams(1, 32, false);
    for (ConvLayerParams& l : p.layers) {
        const double sd = std::sqrt(2.0 / static_cast<double>(l.in_channels * 9));
        for (double& w : l.kernel) w = sd * rng.normal();
    }
    return p;
}

FeatureMap cnn_forward(const CnnParams& p, const FeatureMap& input, CnnTape* tape) {
    FeatureMap x = input;
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        if (tape) tape->inputs[i] = x;
        FeatureMap y = conv2d_forward(x, p.layers[i]);
        if (tape) tape->pre_act[i] = y;
        if (i + 1 < p.layers.size())
            x = relu_forward(y);
        else
            x = std::move(y);
    }
    return x;
}

namespace {

CnnParams cnn_shell() {
    CnnParams p;
    p.layers[0] = ConvLayerParams(32, 1, true);
    p.layers[1] = ConvLayerParams(32, 32, true);
    p.layers[2] = ConvLayerParams(32, 32, true);
    p.layers[3] = ConvLayerParams(1, 32, false);
    return p;
}

}  // namespace

AmpNetModel make_model_shell(Variant variant, std::size_t K, std::size_t n, std::size_t m) {
    if (K < 1) throw std::invalid_argument("make_model_shell: K must be at least 1");
    if (m == 0 || m > n * n) throw std::invalid_argument("make_model_shell: M not in [1, n^2]");
    AmpNetModel model;
    model.variant = variant;
    model.K = K;
    model.sampling.A = Matrix(m, n * n);
    model.sampling.n = n;
    model.sampling.m = m;
    model.sampling.ratio = static_cast<double>(m) / static_cast<double>(n * n);
    model.sampling.trainable = variant_trains_matrix(variant);
    model.B = Matrix(n * n, m);
    model.alphas.assign(K, 0.0);
    model.denoisers.assign(K, cnn_shell());
    if (variant_has_deblocker(variant)) model.deblockers.assign(K, cnn_shell());
    return model;
}

AmpNetModel make_model(Rng& rng, Variant variant, std::size_t K, std::size_t n, std::size_t m) {
    if (K < 1) throw std::invalid_argument("make_model: K must be at least 1");
    AmpNetModel model;
    model.variant = variant;
    model.K = K;
    model.sampling = init_sampling_matrix(rng, m, n);
    model.sampling.trainable = variant_trains_matrix(variant);
    model.B = transpose(model.sampling.A);
    model.alphas.assign(K, 1.0);
    model.denoisers.reserve(K);
    for (std::size_t k = 0; k < K; ++k) model.denoisers.push_back(init_cnn(rng));
    if (variant_has_deblocker(variant)) {
        model.deblockers.reserve(K);
        for (std::size_t k = 0; k < K; ++k) model.deblockers.push_back(init_cnn(rng));
    }
    return model;
}

Image init_estimate(const AmpNetModel& model, const Measurement& y) {
    if (model.B.cols != y.Y.rows)
        throw std::invalid_argument("init_estimate: B columns do not match measurement rows");
    return merge(devectorize(matmul(model.B, y.Y), y.geometry));
}

BlockGrid denoiser_forward(const DenoiserParams& theta, const BlockGrid& blocks) {
    const std::size_t n = blocks.geo.block_size;
    BlockGrid out;
    out.geo = blocks.geo;
    out.blocks.resize(blocks.blocks.size());
    FeatureMap in(1, n, n);
    for (std::size_t i = 0; i < blocks.geo.block_count(); ++i) {
        std::memcpy(in.data.data(), blocks.block(i), n * n * sizeof(double));
        FeatureMap res = cnn_forward(theta, in);
        std::memcpy(out.block(i), res.data.data(), n * n * sizeof(double));
    }
    return out;
}

Image reconstruction_step(const AmpNetModel& model, std::size_t k, const Measurement& y,
                          const Image& x_prev) {
    if (k < 1 || k > model.K)
        throw std::out_of_range("reconstruction_step: module index out of range");
    const Matrix& a = model.sampling.A;
    BlockGrid grid = split(x_prev, model.sampling.n);
    if (!(grid.geo == y.geometry))
        throw std::invalid_argument("reconstruction_step: geometry mismatch");

    Matrix cols = vectorize(grid);
    Matrix z = matmul(a, cols);
    for (std::size_t i = 0; i < z.data.size(); ++i) z.data[i] = y.Y.data[i] - z.data[i];

    Matrix ncols = vectorize(denoiser_forward(model.denoisers[k - 1], grid));
    Matrix an = matmul(a, ncols);
    for (std::size_t i = 0; i < z.data.size(); ++i) z.data[i] -= an.data[i];

    Matrix out = matmul_tn(a, z);  // A^T (z - A n)
    const double alpha = model.alphas[k - 1];
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = alpha * out.data[i] + cols.data[i] + ncols.data[i];
    return merge(devectorize(out, grid.geo));
}

Image deblock(const DeblockerParams& omega, const Image& x) {
    FeatureMap in(1, x.height, x.width);
    std::memcpy(in.data.data(), x.pixels.data(), x.pixels.size() * sizeof(double));
    FeatureMap res = cnn_forward(omega, in);
    Image out = x;
    for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] -= res.data[i];
    return out;
}

Image forward(const AmpNetModel& model, const Measurement& y) {
    Image x = init_estimate(model, y);
    for (std::size_t k = 1; k <= model.K; ++k) {
        x = reconstruction_step(model, k, y, x);
        if (!model.deblockers.empty()) x = deblock(model.deblockers[k - 1], x);
    }
    return x;
}

NoiseTerm noise_term(const Matrix& a, const std::vector<double>& x_true,
                     const std::vector<double>& x_est, double alpha) {
    const std::size_t n = a.cols;
    if (x_true.size() != n || x_est.size() != n)
        throw std::invalid_argument("noise_term: vector length does not match A columns");

    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = x_true[i] - x_est[i];

    std::vector<double> adiff(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += a.at(i, j) * diff[j];
        adiff[i] = acc;
    }
    std::vector<double> back(n, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double v = adiff[i];
        for (std::size_t j = 0; j < n; ++j) back[j] += a.at(i, j) * v;
    }

    NoiseTerm out;
    out.lhs.resize(n);
    out.rhs.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        out.lhs[j] = alpha * back[j] + x_est[j];
        out.rhs[j] = x_true[j] + alpha * back[j] - diff[j];
    }
    return out;
}

std::vector<double> amp_baseline(const Matrix& a, const std::vector<double>& y,
                                 const BaselineConfig& cfg) {
    if (y.size() != a.rows)
        throw std::invalid_argument("amp_baseline: y length does not match A rows");
    if (cfg.iterations < 1) throw std::invalid_argument("amp_baseline: iterations must be >= 1");
    if (cfg.threshold < 0.0) throw std::invalid_argument("amp_baseline: threshold must be >= 0");

    const std::size_t n = a.cols;
    std::vector<double> x(n, 0.0);
    std::vector<double> z(a.rows);
    std::vector<double> v(n);

    double lambda0 = cfg.threshold;
    if (cfg.schedule == ThresholdSchedule::decaying) {
        lambda0 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < a.rows; ++i) acc += a.at(i, j) * y[i];
            lambda0 = std::max(lambda0, std::fabs(acc));
        }
    }

    double lambda = lambda0;
    for (std::size_t t = 0; t < cfg.iterations; ++t) {
        for (std::size_t i = 0; i < a.rows; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += a.at(i, j) * x[j];
            z[i] = y[i] - acc;
        }
        for (std::size_t j = 0; j < n; ++j) v[j] = x[j];
        for (std::size_t i = 0; i < a.rows; ++i) {
            const double zi = z[i];
            for (std::size_t j = 0; j < n; ++j) v[j] += a.at(i, j) * zi;
        }
        for (std::size_t j = 0; j < n; ++j) {
            const double mag = std::fabs(v[j]) - lambda;
            x[j] = mag > 0.0 ? (v[j] < 0.0 ? -mag : mag) : 0.0;
        }
        if (cfg.schedule == ThresholdSchedule::decaying) lambda *= 0.8;
    }
    return x;
}

std::size_t param_count(const AmpNetModel& model, bool include_matrices) {
    std::size_t total = model.alphas.size();
    for (const auto& d : model.denoisers) total += d.param_count();
    for (const auto& d : model.deblockers) total += d.param_count();
    if (include_matrices) {
        total += model.B.size();
        if (model.sampling.trainable) total += model.sampling.A.size();
    }
    return total;
}

}  // namespace ampnet
