#pragma once

#include "tensor.hpp"

namespace icp2p {

/// [p, s, m] triple used by evaluation, the PAM, and the reports.
struct MetricVector {
    double p = 0.0; // PSNR in dB (+inf sentinel when mse == 0)
    double s = 0.0; // SSIM in [-1, 1]
    double m = 0.0; // MSE >= 0
};

/// Mean squared difference, accumulated in double.
double mse(const Tensor& a, const Tensor& b);

/// 10*log10(L^2 / m); +inf when m == 0. Canonical formula path, shared so
/// the MetricVector consistency invariant p = 20 log10 L - 10 log10 m holds.
double psnr_from_mse(double m, double dynamic_range);

double psnr(const Tensor& a, const Tensor& b, double dynamic_range);

/// Mean of the local SSIM map: 11x11 Gaussian window (sigma 1.5), valid
/// positions only, C1=(0.01 L)^2, C2=(0.03 L)^2. Requires shapes >= 11x11.
double ssim(const Tensor& a, const Tensor& b, double dynamic_range);

MetricVector evaluate_pair(const Tensor& pred, const Tensor& target, double dynamic_range);

} // namespace icp2p
