#include "metrics.hpp"

#include <array>
#include <limits>

namespace icp2p {

static void check_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (!a.same_shape(b)) throw ShapeError(std::string(who) + ": operand shapes differ");
}

double mse(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mse");
    const int64_t n = a.numel();
    if (n == 0) throw ShapeError("mse: empty tensors");
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a.data[static_cast<size_t>(i)]) -
                         static_cast<double>(b.data[static_cast<size_t>(i)]);
        acc += d * d;
    }
    return acc / static_cast<double>(n);
}

double psnr_from_mse(double m, double dynamic_range) {
    if (dynamic_range <= 0.0) throw ShapeError("psnr: dynamic range must be positive");
    if (m < 0.0) throw ShapeError("psnr: negative mse");
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(dynamic_range * dynamic_range / m);
}

double psnr(const Tensor& a, const Tensor& b, double dynamic_range) {
    return psnr_from_mse(mse(a, b), dynamic_range);
}

namespace {

constexpr int kWin = 11;

// Normalized 11x11 Gaussian window, sigma 1.5.
const std::array<double, kWin * kWin>& ssim_window() {
    static const std::array<double, kWin * kWin> win = [] {
        std::array<double, kWin * kWin> w{};
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i) {
            for (int j = 0; j < kWin; ++j) {
                const double dy = i - kWin / 2;
                const double dx = j - kWin / 2;
                const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5));
                w[static_cast<size_t>(i * kWin + j)] = v;
                sum += v;
            }
        }
        for (double& v : w) v /= sum;
        return w;
    }();
    return win;
}

} // namespace

double ssim(const Tensor& a, const Tensor& b, double dynamic_range) {
    check_same_shape(a, b, "ssim");
    if (dynamic_range <= 0.0) throw ShapeError("ssim: dynamic range must be positive");
    const int64_t h = a.h(), w = a.w();
    if (a.shape.size() != 2 || h < kWin || w < kWin)
        throw ShapeError("ssim: image smaller than the 11x11 window");

    const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
    const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
    const auto& win = ssim_window();

    double total = 0.0;
    int64_t count = 0;
    for (int64_t y = 0; y + kWin <= h; ++y) {
        for (int64_t x = 0; x + kWin <= w; ++x) {
            double mu_a = 0.0, mu_b = 0.0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    const double wv = win[static_cast<size_t>(i * kWin + j)];
                    mu_a += wv * a.at(y + i, x + j);
                    mu_b += wv * b.at(y + i, x + j);
                }
            double var_a = 0.0, var_b = 0.0, cov = 0.0;
            for (int i = 0; i < kWin; ++i)
                for (int j = 0; j < kWin; ++j) {
                    const double wv = win[static_cast<size_t>(i * kWin + j)];
                    const double da = a.at(y + i, x + j) - mu_a;
                    const double db = b.at(y + i, x + j) - mu_b;
                    var_a += wv * da * da;
                    var_b += wv * db * db;
                    // (da * db) first: the product commutes bitwise, so
                    // ssim(a, b) == ssim(b, a) exactly.
                    cov += wv * (da * db);
                }
            const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

MetricVector evaluate_pair(const Tensor& pred, const Tensor& target, double dynamic_range) {
    MetricVector mv;
    mv.m = mse(pred, target);
    mv.p = psnr_from_mse(mv.m, dynamic_range);
    mv.s = ssim(pred, target, dynamic_range);
    return mv;
}

} // namespace icp2p
