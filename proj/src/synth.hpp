#pragma once

#include <cstdint>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace icp2p {

/// Per-institution acquisition model: signal-dependent noise gain, electronic
/// noise sigma, intensity window the clean images live in, and an anatomy
/// seed family that shifts the phantom geometry statistics.
struct ProtocolParams {
    int id = 0;
    double gain = 0.0;       // per-pixel noise variance contribution, gain * clean
    double sigma = 0.0;      // electronic noise stddev, intensity units
    double window_lo = 0.08; // clean intensity window
    double window_hi = 0.92;
    int family = 0;

    void check() const;
};

struct ImagePair {
    Tensor clean;
    Tensor noisy;
    int protocol_id = 0;
};

struct InstitutionDataset {
    int id = 0;
    ProtocolParams protocol;
    std::vector<ImagePair> train;
    std::vector<ImagePair> test;
    std::vector<ImagePair> characteristic;
};

/// Piecewise-smooth random-ellipse phantom, values inside the protocol's
/// intensity window, deterministic in seed. Minimum size 32x32.
Tensor generate_phantom(const ProtocolParams& protocol, uint64_t seed, int64_t h, int64_t w);

/// noisy = clean + n, n zero-mean Gaussian with per-pixel variance
/// gain * clean + sigma^2. Deterministic in seed; no clipping.
Tensor simulate_low_dose(const Tensor& clean, const ProtocolParams& protocol, uint64_t seed);

/// All aligned patch x patch windows at the given stride, row-major order.
std::vector<Tensor> extract_patches(const Tensor& img, int64_t patch, int64_t stride);

enum class Split : uint64_t { Train = 0, Test = 1, Characteristic = 2 };

/// Seed for one (institution, split, index) image; splits draw from disjoint
/// streams by construction.
uint64_t dataset_seed(uint64_t base_seed, int institution, Split split, int64_t index);

struct DatasetSpec {
    int64_t train_count = 200;
    int64_t test_count = 50;
    int64_t characteristic_count = 50;
    int64_t image_size = 64;
};

InstitutionDataset make_institution_dataset(const ProtocolParams& protocol, const DatasetSpec& spec,
                                            uint64_t base_seed);

} // namespace icp2p
