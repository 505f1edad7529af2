#include <cmath>
#include <stdexcept>

#include "ampnet/sampling.hpp"
#include "doctest.h"

using namespace ampnet;

namespace {

Image random_image(Rng& rng, std::size_t h, std::size_t w) {
    Image img(h, w);
    for (double& v : img.pixels) v = rng.uniform();
    return img;
}

double max_abs(const Matrix& m) {
    double r = 0.0;
    for (double v : m.data) r = std::max(r, std::fabs(v));
    return r;
}

}  // namespace

TEST_CASE("ratio_to_m rounds and clamps") {
    CHECK(ratio_to_m(1.0, 33) == 1089);
    CHECK(ratio_to_m(0.25, 33) == 272);
    CHECK(ratio_to_m(0.01, 33) == 11);
    CHECK(ratio_to_m(0.0001, 33) == 1);  // never below one measurement
    CHECK_THROWS_AS(ratio_to_m(0.0, 33), std::invalid_argument);
    CHECK_THROWS_AS(ratio_to_m(1.5, 33), std::invalid_argument);
    CHECK_THROWS_AS(ratio_to_m(-0.1, 33), std::invalid_argument);
}

TEST_CASE("init_sampling_matrix with one row gives a unit vector") {
    Rng rng(5);
    SamplingModel model = init_sampling_matrix(rng, 1, 8);
    CHECK(model.A.rows == 1);
    CHECK(model.A.cols == 64);
    double norm = 0.0;
    for (double v : model.A.data) norm += v * v;
    CHECK(std::fabs(norm - 1.0) < 1e-12);
}

TEST_CASE("init_sampling_matrix rows are orthonormal at M=272, n=33") {
    Rng rng(7);
    SamplingModel model = init_sampling_matrix(rng, 272, 33);
    CHECK(model.m == 272);
    CHECK(model.n == 33);
    Matrix gram = matmul_nt(model.A, model.A);
    for (std::size_t i = 0; i < gram.rows; ++i) gram.at(i, i) -= 1.0;
    CHECK(max_abs(gram) < 1e-10);
}

TEST_CASE("init_sampling_matrix is deterministic in the seed") {
    Rng a(42);
    Rng b(42);
    SamplingModel ma = init_sampling_matrix(a, 16, 8);
    SamplingModel mb = init_sampling_matrix(b, 16, 8);
    for (std::size_t i = 0; i < ma.A.data.size(); ++i) CHECK(ma.A.data[i] == mb.A.data[i]);
    Rng c(43);
    SamplingModel mc = init_sampling_matrix(c, 16, 8);
    bool same = true;
    for (std::size_t i = 0; i < ma.A.data.size(); ++i)
        if (ma.A.data[i] != mc.A.data[i]) same = false;
    CHECK_FALSE(same);
}

TEST_CASE("init_sampling_matrix rejects M out of range") {
    Rng rng(1);
    CHECK_THROWS_AS(init_sampling_matrix(rng, 0, 8), std::invalid_argument);
    CHECK_THROWS_AS(init_sampling_matrix(rng, 65, 8), std::invalid_argument);
}

TEST_CASE("orthonormalize_rows keeps the row space and fixes signs deterministically") {
    Rng rng(11);
    Matrix a = gaussian_matrix(rng, 6, 20, 1.0);
    Matrix q = orthonormalize_rows(a);
    Matrix gram = matmul_nt(q, q);
    for (std::size_t i = 0; i < 6; ++i) gram.at(i, i) -= 1.0;
    CHECK(max_abs(gram) < 1e-12);
    // same input twice gives the identical result
    Matrix q2 = orthonormalize_rows(a);
    for (std::size_t i = 0; i < q.data.size(); ++i) CHECK(q.data[i] == q2.data[i]);
}

TEST_CASE("measuring a zero image yields zero measurements") {
    Rng rng(13);
    SamplingModel model = init_sampling_matrix(rng, 272, 33);
    Image img(66, 66);
    Measurement m = measure(model, img);
    CHECK(m.Y.rows == 272);
    CHECK(m.Y.cols == 4);
    for (double v : m.Y.data) CHECK(v == 0.0);
}

TEST_CASE("measure of a 66x66 image at M=272, n=33 has shape 272x4") {
    Rng rng(17);
    SamplingModel model = init_sampling_matrix(rng, 272, 33);
    Image img = random_image(rng, 66, 66);
    Measurement m = measure(model, img);
    CHECK(m.Y.rows == 272);
    CHECK(m.Y.cols == 4);
    CHECK(m.geometry.block_count() == 4);
    CHECK(m.geometry.orig_height == 66);
}

TEST_CASE("measure is linear in the image") {
    Rng rng(19);
    SamplingModel model = init_sampling_matrix(rng, 16, 8);
    Image u = random_image(rng, 24, 16);
    Image v = random_image(rng, 24, 16);
    Image w(24, 16);
    for (std::size_t i = 0; i < w.pixels.size(); ++i)
        w.pixels[i] = 1.5 * u.pixels[i] - 0.5 * v.pixels[i];
    Measurement mu = measure(model, u);
    Measurement mv = measure(model, v);
    Measurement mw = measure(model, w);
    for (std::size_t i = 0; i < mw.Y.data.size(); ++i)
        CHECK(std::fabs(mw.Y.data[i] - (1.5 * mu.Y.data[i] - 0.5 * mv.Y.data[i])) < 1e-12);
}

TEST_CASE("residual of the measured image is exactly zero") {
    Rng rng(23);
    SamplingModel model = init_sampling_matrix(rng, 272, 33);
    Image img = random_image(rng, 99, 99);
    Measurement y = measure(model, img);
    Matrix z = residual(model, y, img);
    for (double v : z.data) CHECK(v == 0.0);
}

TEST_CASE("residual against a zero estimate returns the measurements") {
    Rng rng(29);
    SamplingModel model = init_sampling_matrix(rng, 16, 8);
    Image img = random_image(rng, 16, 16);
    Measurement y = measure(model, img);
    Image zero(16, 16);
    Matrix z = residual(model, y, zero);
    for (std::size_t i = 0; i < z.data.size(); ++i) CHECK(z.data[i] == y.Y.data[i]);
}

TEST_CASE("residual matches the dense oracle") {
    Rng rng(31);
    SamplingModel model = init_sampling_matrix(rng, 16, 8);
    Image img = random_image(rng, 16, 16);
    Image est = random_image(rng, 16, 16);
    Measurement y = measure(model, img);
    Matrix z = residual(model, y, est);
    Matrix cols = vectorize(split(est, 8));
    Matrix want = y.Y;
    Matrix ax = matmul(model.A, cols);
    for (std::size_t i = 0; i < want.data.size(); ++i) want.data[i] -= ax.data[i];
    for (std::size_t i = 0; i < z.data.size(); ++i)
        CHECK(std::fabs(z.data[i] - want.data[i]) < 1e-15);
}

TEST_CASE("residual rejects geometry disagreements") {
    Rng rng(37);
    SamplingModel model = init_sampling_matrix(rng, 16, 8);
    Image img = random_image(rng, 16, 16);
    Measurement y = measure(model, img);
    Image other = random_image(rng, 24, 24);
    CHECK_THROWS_AS(residual(model, y, other), std::invalid_argument);
}
