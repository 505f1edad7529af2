#ifndef AMPNET_TESTS_SYNTH_HPP
#define AMPNET_TESTS_SYNTH_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ampnet/blocking.hpp"
#include "ampnet/kernels.hpp"

namespace ampnet::synth {

// Deterministic piecewise-smooth test scene: a few random 2-D cosine modes
// plus random discs and rectangles, min-max normalized to [0,1]. Gives the
// training criteria a corpus with both smooth shading and hard edges.
inline Image scene(Rng& rng, std::size_t h, std::size_t w) {
    Image img(h, w);
    constexpr double two_pi = 6.283185307179586;
    for (int c = 0; c < 6; ++c) {
        const double fy = 0.5 + 2.5 * rng.uniform();
        const double fx = 0.5 + 2.5 * rng.uniform();
        const double phase = two_pi * rng.uniform();
        const double amp = 0.3 + 0.7 * rng.uniform();
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                img.at(y, x) += amp * std::cos(two_pi * (fx * static_cast<double>(x) / w +
                                                         fy * static_cast<double>(y) / h) +
                                               phase);
    }
    const double mind = static_cast<double>(std::min(h, w));
    for (int s = 0; s < 8; ++s) {
        const bool disc = rng.uniform() < 0.5;
        const double v = -1.5 + 3.0 * rng.uniform();
        const double cy = rng.uniform() * static_cast<double>(h);
        const double cx = rng.uniform() * static_cast<double>(w);
        if (disc) {
            const double r = (0.05 + 0.20 * rng.uniform()) * mind;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const double dy = static_cast<double>(y) - cy;
                    const double dx = static_cast<double>(x) - cx;
                    if (dy * dy + dx * dx <= r * r) img.at(y, x) += v;
                }
        } else {
            const double ry = (0.05 + 0.20 * rng.uniform()) * mind;
            const double rx = (0.05 + 0.20 * rng.uniform()) * mind;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    if (std::fabs(static_cast<double>(y) - cy) <= ry &&
                        std::fabs(static_cast<double>(x) - cx) <= rx)
                        img.at(y, x) += v;
        }
    }
    const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
    const double span = *hi - *lo > 1e-12 ? *hi - *lo : 1.0;
    for (double& p : img.pixels) p = (p - *lo) / span;
    return img;
}

// count random size x size crops, drawing a fresh 160x160 scene every 25
// patches. Fully determined by the seed.
inline std::vector<Image> patches(std::uint64_t seed, std::size_t count, std::size_t size) {
    Rng rng(seed);
    std::vector<Image> out;
    out.reserve(count);
    Image current;
    constexpr std::size_t kScene = 160;
    for (std::size_t i = 0; i < count; ++i) {
        if (i % 25 == 0) current = scene(rng, kScene, kScene);
        const std::size_t top = rng.next_u64() % (kScene - size + 1);
        const std::size_t left = rng.next_u64() % (kScene - size + 1);
        Image p(size, size);
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) p.at(y, x) = current.at(top + y, left + x);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace ampnet::synth

#endif
