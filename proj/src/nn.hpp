#pragma once

#include <span>

#include "rng.hpp"
#include "tensor.hpp"

namespace icp2p {

/// Residual denoiser family:
///   head 3x3 conv (1 -> C) + ReLU, then `blocks` residual blocks of
///   [conv C->C, ReLU, conv C->C] with a block skip, then a linear 3x3
///   tail conv (C -> 1). With the global residual on, the tail output is
///   added to the input, so all-zero weights give the identity map.
/// Zero padding, stride 1 everywhere; spatial shape is preserved.
///
/// Parameter vector layout (flat, in this order):
///   head.W  [C][1][3][3], head.b [C],
///   for each block b: conv1.W [C][C][3][3], conv1.b [C],
///                     conv2.W [C][C][3][3], conv2.b [C],
///   tail.W  [1][C][3][3], tail.b [1].
/// Weight index order is [out][in][ky][kx], ky/kx row-major over the
/// 3x3 tap grid (tap (ky,kx) reads input pixel (y + ky - 1, x + kx - 1)).
struct ModelArch {
    int blocks = 3;
    int channels = 16;
    bool global_residual = true;

    int64_t param_count() const;
    void check() const;
};

struct DenoiserModel {
    ModelArch arch;
    ParamVector params;

    void check() const;
};

/// Kaiming-uniform-style fan-in init, biases zero, output projection zeroed
/// (a fresh model with the global residual is exactly the identity). Draw
/// order is fixed by the parameter layout, so a seed pins the full vector.
ParamVector init_params(const ModelArch& arch, uint64_t seed);

Tensor forward(const DenoiserModel& model, const Tensor& x);

/// Gradient of mean squared error w.r.t. all parameters; returns the loss.
/// grad must hold param_count() elements and is overwritten.
double backward(const DenoiserModel& model, const Tensor& x, const Tensor& y,
                std::span<float> grad);

/// Mean loss / mean gradient over pairs, accumulated in double in pair
/// order (deterministic). grad is resized to param_count().
double mean_gradient(const DenoiserModel& model,
                     const std::vector<std::pair<const Tensor*, const Tensor*>>& pairs,
                     std::vector<double>& grad);

// 64-bit shadow path; exists for finite-difference validation only.
namespace shadow {

std::vector<double> widen(const ParamVector& params);

double loss(const ModelArch& arch, std::span<const double> params, const Tensor& x,
            const Tensor& y);

double backward(const ModelArch& arch, std::span<const double> params, const Tensor& x,
                const Tensor& y, std::span<double> grad);

} // namespace shadow

} // namespace icp2p
