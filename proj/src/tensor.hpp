#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "errors.hpp"

namespace icp2p {

/// Dense row-major float32 tensor. Images are (H, W); the network keeps its
/// own channel-major scratch internally and never exposes it here.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(int64_t h, int64_t w) : shape{h, w}, data(static_cast<size_t>(h * w), 0.0f) {}
    Tensor(std::vector<int64_t> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {}

    static Tensor full(int64_t h, int64_t w, float v) {
        Tensor t(h, w);
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }
    int64_t h() const { return shape.size() == 2 ? shape[0] : 0; }
    int64_t w() const { return shape.size() == 2 ? shape[1] : 0; }

    float& at(int64_t y, int64_t x) { return data[static_cast<size_t>(y * shape[1] + x)]; }
    float at(int64_t y, int64_t x) const { return data[static_cast<size_t>(y * shape[1] + x)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void check_valid(const char* who) const {
        if (static_cast<int64_t>(data.size()) != numel())
            throw ShapeError(std::string(who) + ": data length " + std::to_string(data.size()) +
                             " does not match shape product " + std::to_string(numel()));
        for (int64_t d : shape)
            if (d <= 0) throw ShapeError(std::string(who) + ": non-positive dimension");
        for (float v : data)
            if (!std::isfinite(v)) throw NumericError(std::string(who) + ": non-finite element");
    }
};

/// Flat model weight vector; the unit shipped between peers. Kept as a plain
/// alias: length is pinned by the architecture, finiteness checked at use.
using ParamVector = std::vector<float>;

inline bool all_finite(const std::vector<float>& v) {
    for (float x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

/// FNV-1a over the little-endian float bytes; used as the cross-node
/// parameter agreement digest.
uint64_t param_digest(const ParamVector& params);
std::string digest_hex(uint64_t digest);

} // namespace icp2p
