#pragma once

#include "ampnet/blocking.hpp"

namespace ampnet {

struct QualityReport {
    double mse = 0.0;
    double psnr = 0.0;  // decibels, +inf when mse == 0
    double ssim = 0.0;
};

double mse(const Image& truth, const Image& estimate);

// 20*log10(peak) - 10*log10(mse); +inf when mse == 0
double psnr(const Image& truth, const Image& estimate, double peak = 1.0);

// mean local SSIM, 11x11 Gaussian window sigma=1.5, K1=0.01, K2=0.03, range 1.0
double ssim(const Image& truth, const Image& estimate);

QualityReport evaluate_quality(const Image& truth, const Image& estimate, double peak = 1.0);

}  // namespace ampnet
