#include "ampnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "ampnet/metrics.hpp"

namespace ampnet {

namespace {

CnnGrads make_cnn_grads(const CnnParams& p) {
    CnnGrads g;
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        g.kernel[i].assign(p.layers[i].kernel.size(), 0.0);
        g.bias[i].assign(p.layers[i].bias.size(), 0.0);
    }
    return g;
}

void add_into(std::vector<double>& into, const std::vector<double>& add) {
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += add[i];
}

void accumulate(Gradients& into, const Gradients& add) {
    add_into(into.A.data, add.A.data);
    add_into(into.B.data, add.B.data);
    add_into(into.alphas, add.alphas);
    for (std::size_t k = 0; k < into.denoisers.size(); ++k)
        for (std::size_t i = 0; i < 4; ++i) {
            add_into(into.denoisers[k].kernel[i], add.denoisers[k].kernel[i]);
            add_into(into.denoisers[k].bias[i], add.denoisers[k].bias[i]);
        }
    for (std::size_t k = 0; k < into.deblockers.size(); ++k)
        for (std::size_t i = 0; i < 4; ++i) {
            add_into(into.deblockers[k].kernel[i], add.deblockers[k].kernel[i]);
            add_into(into.deblockers[k].bias[i], add.deblockers[k].bias[i]);
        }
}

void leaves_for_cnns(std::vector<LeafView>& out, const std::string& prefix,
                     std::array<ConvLayerParams, 4>* layers, std::size_t module) {
    for (std::size_t i = 0; i < 4; ++i) {
        ConvLayerParams& l = (*layers)[i];
        LeafView w;
        w.name = prefix + std::to_string(module) + ".w" + std::to_string(i);
        w.data = l.kernel.data();
        w.size = l.kernel.size();
        w.shape = {l.out_channels, l.in_channels, 3, 3};
        out.push_back(std::move(w));
        if (l.has_bias()) {
            LeafView b;
            b.name = prefix + std::to_string(module) + ".b" + std::to_string(i);
            b.data = l.bias.data();
            b.size = l.bias.size();
            b.shape = {l.out_channels};
            out.push_back(std::move(b));
        }
    }
}

void leaves_for_cnn_grads(std::vector<LeafView>& out, const std::string& prefix, CnnGrads* grads,
                          std::size_t module) {
    for (std::size_t i = 0; i < 4; ++i) {
        LeafView w;
        w.name = prefix + std::to_string(module) + ".w" + std::to_string(i);
        w.data = grads->kernel[i].data();
        w.size = grads->kernel[i].size();
        out.push_back(std::move(w));
        if (!grads->bias[i].empty()) {
            LeafView b;
            b.name = prefix + std::to_string(module) + ".b" + std::to_string(i);
            b.data = grads->bias[i].data();
            b.size = grads->bias[i].size();
            out.push_back(std::move(b));
        }
    }
}

// Everything the reverse pass needs from one sample's forward pass.
struct IterTape {
    Matrix cols_prev;  // n^2 x I
    Matrix ncols;      // n^2 x I
    Matrix t;          // z - A ncols, M x I
    std::vector<CnnTape> block_tapes;
    CnnTape deblock_tape;
};

struct SampleResult {
    double sse = 0.0;
    Gradients grads;
};

FeatureMap column_as_map(const Matrix& cols, std::size_t col, std::size_t n) {
    FeatureMap f(1, n, n);
    for (std::size_t j = 0; j < n * n; ++j) f.data[j] = cols.at(j, col);
    return f;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

// Forward with a full tape, then reverse. scale is d(loss)/d(sse) of this
// sample, i.e. 2/(N_a N_b) folded into the upstream seed.
SampleResult sample_backward(const AmpNetModel& model, const Image& truth, double scale) {
    const Matrix& a = model.sampling.A;
    const std::size_t n = model.sampling.n;
    const bool train_a = model.sampling.trainable;
    const bool has_deb = !model.deblockers.empty();

    SampleResult res;
    res.grads = make_gradients(model);

    // forward
    BlockGrid truth_grid = split(truth, n);
    const BlockGeometry geo = truth_grid.geo;
    const std::size_t blocks = geo.block_count();
    Matrix xbar_cols = vectorize(truth_grid);
    Matrix y = matmul(a, xbar_cols);

    Image x = merge(devectorize(matmul(model.B, y), geo));

    std::vector<IterTape> tapes(model.K);
    for (std::size_t k = 0; k < model.K; ++k) {
        IterTape& tp = tapes[k];
        BlockGrid grid = split(x, n);
        tp.cols_prev = vectorize(grid);

        Matrix t = matmul(a, tp.cols_prev);
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = y.data[i] - t.data[i];

        tp.block_tapes.resize(blocks);
        tp.ncols = Matrix(n * n, blocks);
        FeatureMap in(1, n, n);
        for (std::size_t b = 0; b < blocks; ++b) {
            std::memcpy(in.data.data(), grid.block(b), n * n * sizeof(double));
            FeatureMap out = cnn_forward(model.denoisers[k], in, &tp.block_tapes[b]);
            for (std::size_t j = 0; j < n * n; ++j) tp.ncols.at(j, b) = out.data[j];
        }

        Matrix an = matmul(a, tp.ncols);
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] -= an.data[i];
        tp.t = std::move(t);

        Matrix out = matmul_tn(a, tp.t);
        const double alpha = model.alphas[k];
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = alpha * out.data[i] + tp.cols_prev.data[i] + tp.ncols.data[i];
        x = merge(devectorize(out, geo));

        if (has_deb) {
            FeatureMap f(1, x.height, x.width);
            std::memcpy(f.data.data(), x.pixels.data(), x.pixels.size() * sizeof(double));
            FeatureMap corr = cnn_forward(model.deblockers[k], f, &tp.deblock_tape);
            for (std::size_t i = 0; i < x.pixels.size(); ++i) x.pixels[i] -= corr.data[i];
        }
    }

    // loss seed
    Image g(truth.height, truth.width);
    for (std::size_t i = 0; i < g.pixels.size(); ++i) {
        const double d = x.pixels[i] - truth.pixels[i];
        res.sse += d * d;
        g.pixels[i] = scale * d;
    }

    // reverse
    Matrix gy(y.rows, y.cols);
    for (std::size_t k = model.K; k-- > 0;) {
        const IterTape& tp = tapes[k];
        const double alpha = model.alphas[k];

        if (has_deb) {
            FeatureMap gout(1, g.height, g.width);
            std::memcpy(gout.data.data(), g.pixels.data(), g.pixels.size() * sizeof(double));
            FeatureMap neg = gout;
            for (double& v : neg.data) v = -v;
            FeatureMap gin = cnn_backward(model.deblockers[k], tp.deblock_tape, neg,
                                          res.grads.deblockers[k]);
            for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] += gin.data[i];
        }

        Matrix gcols = merge_adjoint(g, geo);
        Matrix ag = matmul(a, gcols);
        res.grads.alphas[k] += dot(ag.data, tp.t.data);

        Matrix dt = ag;  // alpha * A * gcols
        for (double& v : dt.data) v *= alpha;
        Matrix atdt = matmul_tn(a, dt);

        // shared linear part of d(cols_prev) and d(ncols): (I - a A^T A) g
        Matrix dcommon = gcols;
        for (std::size_t i = 0; i < dcommon.data.size(); ++i) dcommon.data[i] -= atdt.data[i];

        Matrix dcols = dcommon;
        FeatureMap gmap(1, n, n);
        for (std::size_t b = 0; b < blocks; ++b) {
            for (std::size_t j = 0; j < n * n; ++j) gmap.data[j] = dcommon.at(j, b);
            FeatureMap gin =
                cnn_backward(model.denoisers[k], tp.block_tapes[b], gmap, res.grads.denoisers[k]);
            for (std::size_t j = 0; j < n * n; ++j) dcols.at(j, b) += gin.data[j];
        }

        if (train_a) {
            Matrix term = matmul_nt(tp.t, gcols);  // from out = a A^T t
            for (std::size_t i = 0; i < term.data.size(); ++i)
                res.grads.A.data[i] += alpha * term.data[i];
            Matrix tn = matmul_nt(dt, tp.ncols);  // t = z - A ncols
            Matrix tc = matmul_nt(dt, tp.cols_prev);  // z = y - A cols_prev
            for (std::size_t i = 0; i < res.grads.A.data.size(); ++i)
                res.grads.A.data[i] -= tn.data[i] + tc.data[i];
        }
        add_into(gy.data, dt.data);

        g = split_adjoint(dcols, geo);
    }

    Matrix g0 = merge_adjoint(g, geo);
    Matrix gb = matmul_nt(g0, y);
    add_into(res.grads.B.data, gb.data);
    Matrix gy_init = matmul_tn(model.B, g0);
    add_into(gy.data, gy_init.data);
    if (train_a) {
        Matrix ga = matmul_nt(gy, xbar_cols);
        add_into(res.grads.A.data, ga.data);
    }
    return res;
}

void check_batch(const std::vector<Image>& batch) {
    if (batch.empty()) throw std::invalid_argument("batch is empty");
    for (const Image& im : batch)
        if (im.height != batch[0].height || im.width != batch[0].width)
            throw std::invalid_argument("batch images must share one shape");
}

void require_oracle_domain(const AmpNetModel& model, const std::vector<Image>& batch) {
    if (!model.deblockers.empty())
        throw std::invalid_argument("closed-form A gradient is defined for models without "
                                    "deblockers only");
    for (const Image& im : batch)
        if (im.height % model.sampling.n != 0 || im.width % model.sampling.n != 0)
            throw std::invalid_argument("closed-form A gradient requires dims divisible by n");
}

}  // namespace

Gradients make_gradients(const AmpNetModel& model) {
    Gradients g;
    g.A = Matrix(model.sampling.A.rows, model.sampling.A.cols);
    g.B = Matrix(model.B.rows, model.B.cols);
    g.alphas.assign(model.alphas.size(), 0.0);
    for (const auto& d : model.denoisers) g.denoisers.push_back(make_cnn_grads(d));
    for (const auto& d : model.deblockers) g.deblockers.push_back(make_cnn_grads(d));
    return g;
}

std::vector<LeafView> parameter_leaves(AmpNetModel& model) {
    std::vector<LeafView> out;
    LeafView a;
    a.name = "A";
    a.data = model.sampling.A.data.data();
    a.size = model.sampling.A.size();
    a.shape = {model.sampling.A.rows, model.sampling.A.cols};
    a.trainable = model.sampling.trainable;
    out.push_back(std::move(a));
    LeafView b;
    b.name = "B";
    b.data = model.B.data.data();
    b.size = model.B.size();
    b.shape = {model.B.rows, model.B.cols};
    out.push_back(std::move(b));
    LeafView al;
    al.name = "alpha";
    al.data = model.alphas.data();
    al.size = model.alphas.size();
    al.shape = {model.alphas.size()};
    out.push_back(std::move(al));
    for (std::size_t k = 0; k < model.denoisers.size(); ++k)
        leaves_for_cnns(out, "den", &model.denoisers[k].layers, k);
    for (std::size_t k = 0; k < model.deblockers.size(); ++k)
        leaves_for_cnns(out, "deb", &model.deblockers[k].layers, k);
    return out;
}

std::vector<LeafView> gradient_leaves(Gradients& grads, const AmpNetModel& model) {
    std::vector<LeafView> out;
    LeafView a;
    a.name = "A";
    a.data = grads.A.data.data();
    a.size = grads.A.size();
    a.trainable = model.sampling.trainable;
    out.push_back(std::move(a));
    LeafView b;
    b.name = "B";
    b.data = grads.B.data.data();
    b.size = grads.B.size();
    out.push_back(std::move(b));
    LeafView al;
    al.name = "alpha";
    al.data = grads.alphas.data();
    al.size = grads.alphas.size();
    out.push_back(std::move(al));
    for (std::size_t k = 0; k < grads.denoisers.size(); ++k)
        leaves_for_cnn_grads(out, "den", &grads.denoisers[k], k);
    for (std::size_t k = 0; k < grads.deblockers.size(); ++k)
        leaves_for_cnn_grads(out, "deb", &grads.deblockers[k], k);
    return out;
}

double loss(const std::vector<Image>& truth, const std::vector<Image>& recon) {
    if (truth.size() != recon.size() || truth.empty())
        throw std::invalid_argument("loss: batch sizes differ or are empty");
    const std::size_t na = truth[0].size();
    double sse = 0.0;
    for (std::size_t m = 0; m < truth.size(); ++m) {
        if (truth[m].height != recon[m].height || truth[m].width != recon[m].width ||
            truth[m].size() != na)
            throw std::invalid_argument("loss: image shapes do not agree");
        for (std::size_t i = 0; i < na; ++i) {
            const double d = truth[m].pixels[i] - recon[m].pixels[i];
            sse += d * d;
        }
    }
    return sse / (static_cast<double>(na) * static_cast<double>(truth.size()));
}

double evaluate_loss(const AmpNetModel& model, const std::vector<Image>& batch) {
    check_batch(batch);
    const double na = static_cast<double>(batch[0].size());
    double sse = 0.0;
    for (const Image& im : batch) {
        Image rec = forward(model, measure(model.sampling, im));
        for (std::size_t i = 0; i < im.pixels.size(); ++i) {
            const double d = rec.pixels[i] - im.pixels[i];
            sse += d * d;
        }
    }
    return sse / (na * static_cast<double>(batch.size()));
}

FeatureMap cnn_backward(const CnnParams& p, const CnnTape& tape, const FeatureMap& grad_out,
                        CnnGrads& acc) {
    if (acc.kernel[0].empty())
        for (std::size_t i = 0; i < 4; ++i) {
            acc.kernel[i].assign(p.layers[i].kernel.size(), 0.0);
            acc.bias[i].assign(p.layers[i].bias.size(), 0.0);
        }
    FeatureMap g = grad_out;
    for (std::size_t i = 4; i-- > 0;) {
        ConvGrads cg = conv2d_backward(g, tape.inputs[i], p.layers[i]);
        add_into(acc.kernel[i], cg.kernel);
        if (!cg.bias.empty()) add_into(acc.bias[i], cg.bias);
        g = std::move(cg.input);
        if (i > 0) g = relu_backward(g, tape.pre_act[i - 1]);
    }
    return g;
}

BackwardResult backward(const AmpNetModel& model, const std::vector<Image>& batch,
                        std::size_t threads) {
    check_batch(batch);
    const double na = static_cast<double>(batch[0].size());
    const double nb = static_cast<double>(batch.size());
    const double scale = 2.0 / (na * nb);

    BackwardResult out;
    out.grads = make_gradients(model);
    double sse = 0.0;

    if (threads <= 1) {
        for (const Image& im : batch) {
            SampleResult r = sample_backward(model, im, scale);
            sse += r.sse;
            accumulate(out.grads, r.grads);
        }
    } else {
        // waves of independent samples; reduction stays in sample order so
        // the sum is identical for every thread count
        for (std::size_t base = 0; base < batch.size(); base += threads) {
            const std::size_t count = std::min(threads, batch.size() - base);
            std::vector<SampleResult> slots(count);
            std::vector<std::thread> pool;
            pool.reserve(count);
            for (std::size_t j = 0; j < count; ++j)
                pool.emplace_back([&, j] { slots[j] = sample_backward(model, batch[base + j], scale); });
            for (std::thread& th : pool) th.join();
            for (std::size_t j = 0; j < count; ++j) {
                sse += slots[j].sse;
                accumulate(out.grads, slots[j].grads);
            }
        }
    }

    out.loss = sse / (na * nb);
    if (!std::isfinite(out.loss)) throw std::runtime_error("non-finite loss");
    for (const LeafView& leaf : gradient_leaves(out.grads, model)) {
        if (leaf.name == "A" && !leaf.trainable) continue;
        for (std::size_t i = 0; i < leaf.size; ++i)
            if (!std::isfinite(leaf.data[i]))
                throw std::runtime_error("non-finite gradient in leaf '" + leaf.name + "'");
    }
    return out;
}

std::vector<UpstreamGradients> upstream_gradients(const AmpNetModel& model,
                                                  const std::vector<Image>& batch) {
    require_oracle_domain(model, batch);
    check_batch(batch);
    const Matrix& a = model.sampling.A;
    const std::size_t n = model.sampling.n;
    const double scale = 2.0 / (static_cast<double>(batch[0].size()) *
                                static_cast<double>(batch.size()));

    std::vector<UpstreamGradients> out;
    out.reserve(batch.size());
    for (const Image& im : batch) {
        BlockGrid grid = split(im, n);
        const std::size_t blocks = grid.geo.block_count();
        Matrix xbar = vectorize(grid);
        Matrix y = matmul(a, xbar);

        // forward in column space (exact: no padding in this domain)
        std::vector<Matrix> xs(model.K + 1);
        std::vector<std::vector<CnnTape>> tapes(model.K);
        xs[0] = matmul(model.B, y);
        for (std::size_t k = 0; k < model.K; ++k) {
            Matrix t = matmul(a, xs[k]);
            for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = y.data[i] - t.data[i];
            tapes[k].resize(blocks);
            Matrix ncols(n * n, blocks);
            for (std::size_t b = 0; b < blocks; ++b) {
                FeatureMap res = cnn_forward(model.denoisers[k], column_as_map(xs[k], b, n),
                                             &tapes[k][b]);
                for (std::size_t j = 0; j < n * n; ++j) ncols.at(j, b) = res.data[j];
            }
            Matrix an = matmul(a, ncols);
            for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] -= an.data[i];
            Matrix next = matmul_tn(a, t);
            const double alpha = model.alphas[k];
            for (std::size_t i = 0; i < next.data.size(); ++i)
                next.data[i] = alpha * next.data[i] + xs[k].data[i] + ncols.data[i];
            xs[k + 1] = std::move(next);
        }

        UpstreamGradients ug;
        ug.per_iter.resize(model.K + 1);
        Matrix g(n * n, blocks);
        for (std::size_t i = 0; i < g.data.size(); ++i)
            g.data[i] = scale * (xs[model.K].data[i] - xbar.data[i]);
        ug.per_iter[model.K] = g;
        for (std::size_t k = model.K; k-- > 0;) {
            // h = (I - a A^T A) g
            Matrix ag = matmul(a, ug.per_iter[k + 1]);
            for (double& v : ag.data) v *= model.alphas[k];
            Matrix atag = matmul_tn(a, ag);
            Matrix h = ug.per_iter[k + 1];
            for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] -= atag.data[i];

            Matrix prev = h;
            CnnGrads scratch;
            for (std::size_t b = 0; b < blocks; ++b) {
                FeatureMap gin = cnn_backward(model.denoisers[k], tapes[k][b],
                                              column_as_map(h, b, n), scratch);
                for (std::size_t j = 0; j < n * n; ++j) prev.at(j, b) += gin.data[j];
            }
            ug.per_iter[k] = std::move(prev);
        }
        out.push_back(std::move(ug));
    }
    return out;
}

Matrix grad_A_oracle(const AmpNetModel& model, const std::vector<Image>& batch,
                     const std::vector<UpstreamGradients>& upstream) {
    require_oracle_domain(model, batch);
    check_batch(batch);
    if (upstream.size() != batch.size())
        throw std::invalid_argument("grad_A_oracle: one upstream entry per sample required");
    const Matrix& a = model.sampling.A;
    const std::size_t n = model.sampling.n;

    Matrix ga(a.rows, a.cols);
    for (std::size_t s = 0; s < batch.size(); ++s) {
        BlockGrid grid = split(batch[s], n);
        const std::size_t blocks = grid.geo.block_count();
        Matrix xbar = vectorize(grid);
        Matrix y = matmul(a, xbar);

        // sampling term: B^T g_0 xbar^T
        Matrix bg = matmul_tn(model.B, upstream[s].per_iter[0]);
        Matrix sam = matmul_nt(bg, xbar);
        add_into(ga.data, sam.data);

        Matrix x = matmul(model.B, y);
        for (std::size_t k = 0; k < model.K; ++k) {
            Matrix ncols(n * n, blocks);
            for (std::size_t b = 0; b < blocks; ++b) {
                FeatureMap res = cnn_forward(model.denoisers[k], column_as_map(x, b, n));
                for (std::size_t j = 0; j < n * n; ++j) ncols.at(j, b) = res.data[j];
            }
            Matrix xhat = xbar;
            for (std::size_t i = 0; i < xhat.data.size(); ++i)
                xhat.data[i] -= x.data[i] + ncols.data[i];

            const Matrix& g = upstream[s].per_iter[k + 1];
            Matrix agk = matmul(a, g);
            Matrix axh = matmul(a, xhat);
            Matrix t1 = matmul_nt(agk, xhat);
            Matrix t2 = matmul_nt(axh, g);
            const double alpha = model.alphas[k];
            for (std::size_t i = 0; i < ga.data.size(); ++i)
                ga.data[i] += alpha * (t1.data[i] + t2.data[i]);

            // advance x to x^{k+1}
            Matrix t = matmul(a, x);
            for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = y.data[i] - t.data[i];
            Matrix an = matmul(a, ncols);
            for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] -= an.data[i];
            Matrix next = matmul_tn(a, t);
            for (std::size_t i = 0; i < next.data.size(); ++i)
                next.data[i] = alpha * next.data[i] + x.data[i] + ncols.data[i];
            x = std::move(next);
        }
    }
    return ga;
}

AdamState make_adam_state(AmpNetModel& model) {
    AdamState st;
    for (const LeafView& leaf : parameter_leaves(model)) {
        st.m.emplace_back(leaf.size, 0.0);
        st.v.emplace_back(leaf.size, 0.0);
    }
    return st;
}

void adam_step(AmpNetModel& model, const Gradients& grads, AdamState& state,
               const TrainConfig& cfg) {
    if (cfg.learning_rate < 0.0)
        throw std::invalid_argument("adam_step: learning rate must be >= 0");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

    std::vector<LeafView> params = parameter_leaves(model);
    std::vector<LeafView> gl = gradient_leaves(const_cast<Gradients&>(grads), model);
    if (params.size() != gl.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: state does not match the model");

    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable) continue;
        double* p = params[i].data;
        const double* g = gl[i].data;
        std::vector<double>& m = state.m[i];
        std::vector<double>& v = state.v[i];
        for (std::size_t j = 0; j < params[i].size; ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

FitResult fit(const AmpNetModel& model_in, const std::vector<Image>& train_set,
              const std::vector<Image>& val_set, const TrainConfig& cfg,
              const std::function<void(const EpochRecord&)>& on_epoch) {
    if (train_set.empty() || val_set.empty())
        throw std::invalid_argument("fit: training and validation sets must be non-empty");
    if (cfg.batch_size < 1) throw std::invalid_argument("fit: batch size must be >= 1");
    if (cfg.epochs < 1) throw std::invalid_argument("fit: epochs must be >= 1");

    AmpNetModel model = model_in;
    AdamState state = make_adam_state(model);
    Rng shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    FitResult res;
    res.best_val_psnr = -std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i-- > 1;) {
            const std::size_t j = shuffle_rng.next_u64() % (i + 1);
            std::swap(order[i], order[j]);
        }

        double loss_weighted = 0.0;
        std::size_t seen = 0;
        for (std::size_t base = 0; base < order.size(); base += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, order.size() - base);
            std::vector<Image> batch;
            batch.reserve(count);
            for (std::size_t j = 0; j < count; ++j) batch.push_back(train_set[order[base + j]]);

            BackwardResult br;
            try {
                br = backward(model, batch, cfg.threads);
            } catch (const std::runtime_error& e) {
                std::ostringstream msg;
                msg << "training diverged at epoch " << epoch << ", batch "
                    << (base / cfg.batch_size + 1) << ": " << e.what();
                throw std::runtime_error(msg.str());
            }
            adam_step(model, br.grads, state, cfg);
            loss_weighted += br.loss * static_cast<double>(count);
            seen += count;
        }

        double psnr_sum = 0.0;
        for (const Image& im : val_set)
            psnr_sum += psnr(im, forward(model, measure(model.sampling, im)), 1.0);
        const double val_psnr = psnr_sum / static_cast<double>(val_set.size());

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_weighted / static_cast<double>(seen);
        rec.val_psnr = val_psnr;
        res.history.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (val_psnr > res.best_val_psnr) {
            res.best_val_psnr = val_psnr;
            res.best_epoch = epoch;
            res.best_model = model;
        }
    }
    return res;
}

double numeric_grad(AmpNetModel& model, const std::vector<Image>& batch, double* elem,
                    double step) {
    const double saved = *elem;
    *elem = saved + step;
    const double up = evaluate_loss(model, batch);
    *elem = saved - step;
    const double down = evaluate_loss(model, batch);
    *elem = saved;
    return (up - down) / (2.0 * step);
}

GradcheckResult run_gradcheck(const GradcheckOptions& opt) {
    GradcheckResult result;
    result.rel_tol = opt.rel_tol;
    result.oracle_tol = opt.oracle_tol;

    Rng rng(opt.seed);
    AmpNetModel bm = make_model(rng, Variant::bm, 2, 8, 16);
    Image img(16, 16);
    for (double& p : img.pixels) p = rng.uniform();
    const std::vector<Image> batch{img};

    BackwardResult br = backward(bm, batch);
    std::vector<LeafView> params = parameter_leaves(bm);
    std::vector<LeafView> gl = gradient_leaves(br.grads, bm);

    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable) continue;
        const std::size_t stride =
            std::max<std::size_t>(1, params[i].size / opt.samples_per_leaf);
        for (std::size_t j = 0; j < params[i].size; j += stride) {
            const double fd = numeric_grad(bm, batch, params[i].data + j, opt.fd_step);
            const double g = gl[i].data[j];
            const double denom = std::max({std::fabs(g), std::fabs(fd), 1e-6});
            const double rel = std::fabs(g - fd) / denom;
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst_leaf = params[i].name;
            }
            if (params[i].name == "alpha") {
                const double arel = std::fabs(g - fd) / std::max(std::fabs(g), std::fabs(fd));
                result.alpha_rel_err = std::max(result.alpha_rel_err, arel);
            }
        }
    }

    AmpNetModel mm = make_model(rng, Variant::m, 2, 8, 16);
    BackwardResult mr = backward(mm, batch);
    Matrix oracle = grad_A_oracle(mm, batch, upstream_gradients(mm, batch));
    for (std::size_t i = 0; i < oracle.data.size(); ++i)
        result.oracle_max_abs =
            std::max(result.oracle_max_abs, std::fabs(oracle.data[i] - mr.grads.A.data[i]));
    return result;
}

}  // namespace ampnet
