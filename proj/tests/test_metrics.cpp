#include <doctest.h>

#include <cmath>
#include <limits>

#include "metrics.hpp"
#include "rng.hpp"

using namespace icp2p;

namespace {

// Oracle: two-pass mean-of-squares with long double accumulation, iterating
// in reverse order so it shares nothing with the library implementation.
double mse_oracle(const Tensor& a, const Tensor& b) {
    long double acc = 0.0L;
    for (size_t i = a.data.size(); i-- > 0;) {
        const long double d = static_cast<long double>(a.data[i]) - static_cast<long double>(b.data[i]);
        acc += d * d;
    }
    return static_cast<double>(acc / static_cast<long double>(a.data.size()));
}

Tensor random_image(uint64_t seed, int64_t h, int64_t w, float lo, float hi) {
    Rng rng(seed);
    Tensor t(h, w);
    for (float& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

} // namespace

TEST_CASE("mse matches a long-double reverse-order oracle") {
    const Tensor a = random_image(11, 23, 31, 0.0f, 1.0f);
    const Tensor b = random_image(12, 23, 31, 0.0f, 1.0f);
    const double got = mse(a, b);
    const double want = mse_oracle(a, b);
    CHECK(got == doctest::Approx(want).epsilon(1e-13));
    CHECK(mse(a, a) == 0.0);
}

TEST_CASE("psnr closed forms") {
    // Canonical scalar path: mse 0.01 at unit range is 20 dB on the nose.
    CHECK(psnr_from_mse(0.01, 1.0) == 20.0);

    // Image path: a constant offset of 0.1 against zero. float32 stores 0.1
    // with a relative error of ~1.5e-8, so allow 1e-6 dB.
    const Tensor zero(17, 19);
    const Tensor off = Tensor::full(17, 19, 0.1f);
    CHECK(std::abs(psnr(off, zero, 1.0) - 20.0) < 1e-6);

    // Halving the error adds 10*log10(4) = 6.0205999... dB.
    const Tensor half = Tensor::full(17, 19, 0.05f);
    const double gain_db = psnr(half, zero, 1.0) - psnr(off, zero, 1.0);
    CHECK(gain_db == doctest::Approx(10.0 * std::log10(4.0)).epsilon(1e-9));
    CHECK(std::abs(psnr(half, zero, 1.0) - 26.0206) < 1e-3);
}

TEST_CASE("psnr identities and edge cases") {
    // p = 20 log10 L - 10 log10 m for arbitrary positive inputs.
    Rng rng(77);
    for (int i = 0; i < 32; ++i) {
        const double m = std::exp(rng.uniform(-12.0, 2.0));
        const double L = std::exp(rng.uniform(-2.0, 2.0));
        const double want = 20.0 * std::log10(L) - 10.0 * std::log10(m);
        CHECK(psnr_from_mse(m, L) == doctest::Approx(want).epsilon(1e-12));
    }

    CHECK(psnr_from_mse(0.0, 1.0) == std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(psnr_from_mse(0.01, 0.0), ShapeError);
    CHECK_THROWS_AS(psnr_from_mse(0.01, -1.0), ShapeError);
    CHECK_THROWS_AS(psnr_from_mse(-0.01, 1.0), ShapeError);

    const Tensor a = random_image(5, 16, 16, 0.0f, 1.0f);
    const Tensor b = random_image(6, 16, 17, 0.0f, 1.0f);
    CHECK_THROWS_AS(psnr(a, b, 1.0), ShapeError);
}

TEST_CASE("ssim of an image with itself is exactly one") {
    const Tensor a = random_image(21, 24, 29, 0.0f, 1.0f);
    CHECK(ssim(a, a, 1.0) == 1.0);
}

TEST_CASE("ssim of constant images matches the closed form") {
    // Zero variance everywhere: SSIM reduces to the luminance term
    // (2 v1 v2 + C1) / (v1^2 + v2^2 + C1).
    const double v1 = 0.3, v2 = 0.7, L = 1.0;
    const double c1 = (0.01 * L) * (0.01 * L);
    const double want = (2.0 * v1 * v2 + c1) / (v1 * v1 + v2 * v2 + c1);
    const Tensor a = Tensor::full(16, 16, static_cast<float>(v1));
    const Tensor b = Tensor::full(16, 16, static_cast<float>(v2));
    CHECK(ssim(a, b, L) == doctest::Approx(want).epsilon(1e-7));
}

TEST_CASE("ssim is symmetric, bounded, and degrades with noise") {
    const Tensor clean = random_image(31, 32, 32, 0.2f, 0.8f);

    Rng rng(32);
    Tensor noisy_lo = clean, noisy_hi = clean;
    for (size_t i = 0; i < clean.data.size(); ++i) {
        const double n = rng.gauss();
        noisy_lo.data[i] += static_cast<float>(0.02 * n);
        noisy_hi.data[i] += static_cast<float>(0.15 * n);
    }

    const double s_lo = ssim(clean, noisy_lo, 1.0);
    const double s_hi = ssim(clean, noisy_hi, 1.0);
    CHECK(ssim(noisy_lo, clean, 1.0) == s_lo);
    CHECK(s_lo > s_hi);
    CHECK(s_lo <= 1.0);
    CHECK(s_hi >= -1.0);
    CHECK(s_lo > 0.95); // mild noise barely dents structure
    CHECK(s_hi < 0.85); // heavy noise visibly degrades it
}

TEST_CASE("ssim rejects images smaller than its window") {
    const Tensor small(10, 64);
    CHECK_THROWS_AS(ssim(small, small, 1.0), ShapeError);
    const Tensor ok(11, 11);
    CHECK(ssim(ok, ok, 1.0) == 1.0);
}

TEST_CASE("evaluate_pair is consistent with the individual metrics") {
    const Tensor a = random_image(41, 20, 22, 0.0f, 1.0f);
    const Tensor b = random_image(42, 20, 22, 0.0f, 1.0f);
    const MetricVector mv = evaluate_pair(a, b, 1.0);
    CHECK(mv.m == mse(a, b));
    CHECK(mv.p == psnr_from_mse(mv.m, 1.0));
    CHECK(mv.s == ssim(a, b, 1.0));
    CHECK(mv.p == doctest::Approx(-10.0 * std::log10(mv.m)).epsilon(1e-12));
}
