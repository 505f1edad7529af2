#include "ampnet/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace ampnet {

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;
constexpr double kRange = 1.0;

void check_dims(const Image& a, const Image& b) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument("image dimensions do not match");
}

std::vector<double> gaussian_window() {
    std::vector<double> w(kWindow * kWindow);
    const double c = (kWindow - 1) / 2.0;
    double sum = 0.0;
    for (std::size_t y = 0; y < kWindow; ++y)
        for (std::size_t x = 0; x < kWindow; ++x) {
            const double dy = y - c;
            const double dx = x - c;
            w[y * kWindow + x] = std::exp(-(dy * dy + dx * dx) / (2.0 * kSigma * kSigma));
            sum += w[y * kWindow + x];
        }
    for (double& v : w) v /= sum;
    return w;
}

}  // namespace

double mse(const Image& truth, const Image& estimate) {
    check_dims(truth, estimate);
    double acc = 0.0;
    for (std::size_t i = 0; i < truth.pixels.size(); ++i) {
        const double d = truth.pixels[i] - estimate.pixels[i];
        acc += d * d;
    }
    return acc / static_cast<double>(truth.pixels.size());
}

double psnr(const Image& truth, const Image& estimate, double peak) {
    if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
    const double e = mse(truth, estimate);
    if (e == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(peak) - 10.0 * std::log10(e);
}

double ssim(const Image& truth, const Image& estimate) {
    check_dims(truth, estimate);
    if (truth.height < kWindow || truth.width < kWindow)
        throw std::invalid_argument("ssim: image smaller than 11x11 window");

    static const std::vector<double> w = gaussian_window();
    const double c1 = (kK1 * kRange) * (kK1 * kRange);
    const double c2 = (kK2 * kRange) * (kK2 * kRange);

    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t oy = 0; oy + kWindow <= truth.height; ++oy) {
        for (std::size_t ox = 0; ox + kWindow <= truth.width; ++ox) {
            double mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
            for (std::size_t y = 0; y < kWindow; ++y)
                for (std::size_t x = 0; x < kWindow; ++x) {
                    const double wgt = w[y * kWindow + x];
                    const double px = truth.at(oy + y, ox + x);
                    const double py = estimate.at(oy + y, ox + x);
                    mx += wgt * px;
                    my += wgt * py;
                    mxx += wgt * px * px;
                    myy += wgt * py * py;
                    mxy += wgt * px * py;
                }
            const double vx = mxx - mx * mx;
            const double vy = myy - my * my;
            const double cov = mxy - mx * my;
            const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
            const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
            total += num / den;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

QualityReport evaluate_quality(const Image& truth, const Image& estimate, double peak) {
    QualityReport r;
    r.mse = mse(truth, estimate);
    r.psnr = psnr(truth, estimate, peak);
    r.ssim = ssim(truth, estimate);
    return r;
}

}  // namespace ampnet
