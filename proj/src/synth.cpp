#include "synth.hpp"

#include <algorithm>

namespace icp2p {

void ProtocolParams::check() const {
    if (gain < 0.0) throw ShapeError("protocol: noise gain must be >= 0");
    if (sigma < 0.0) throw ShapeError("protocol: electronic noise sigma must be >= 0");
    if (!(window_lo >= 0.0 && window_hi <= 1.0 && window_lo < window_hi))
        throw ShapeError("protocol: intensity window must satisfy 0 <= lo < hi <= 1");
}

Tensor generate_phantom(const ProtocolParams& protocol, uint64_t seed, int64_t h, int64_t w) {
    protocol.check();
    if (h < 32 || w < 32) throw ShapeError("generate_phantom: size must be at least 32x32");

    Rng rng(stream_seed(seed, 0x9e7a, static_cast<uint64_t>(protocol.family)));

    // Anatomy family shifts how many ellipses appear and how large they run.
    const int base_count = 4 + (protocol.family % 3);
    const int n_ellipses = base_count + static_cast<int>(rng.below(5));
    const double axis_scale = 0.12 + 0.03 * static_cast<double>(protocol.family % 4);

    struct Ellipse {
        double cy, cx, ay, ax, cos_t, sin_t, value;
    };
    std::vector<Ellipse> ellipses;
    ellipses.reserve(static_cast<size_t>(n_ellipses));
    for (int i = 0; i < n_ellipses; ++i) {
        Ellipse e;
        e.cy = rng.uniform(0.15, 0.85) * static_cast<double>(h);
        e.cx = rng.uniform(0.15, 0.85) * static_cast<double>(w);
        e.ay = rng.uniform(0.5, 2.0) * axis_scale * static_cast<double>(h);
        e.ax = rng.uniform(0.5, 2.0) * axis_scale * static_cast<double>(w);
        const double theta = rng.uniform(0.0, 3.14159265358979323846);
        e.cos_t = std::cos(theta);
        e.sin_t = std::sin(theta);
        e.value = rng.uniform(-0.6, 1.0);
        ellipses.push_back(e);
    }
    const double background = rng.uniform(0.1, 0.35);

    Tensor img(h, w);
    double lo = 1e300, hi = -1e300;
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            double v = background;
            for (const Ellipse& e : ellipses) {
                const double dy = static_cast<double>(y) - e.cy;
                const double dx = static_cast<double>(x) - e.cx;
                const double ry = (dy * e.cos_t + dx * e.sin_t) / e.ay;
                const double rx = (-dy * e.sin_t + dx * e.cos_t) / e.ax;
                const double r2 = ry * ry + rx * rx;
                if (r2 < 1.0) {
                    // soft rim keeps the image piecewise smooth rather than binary
                    const double edge = std::min(1.0, 4.0 * (1.0 - r2));
                    v += e.value * edge;
                }
            }
            img.at(y, x) = static_cast<float>(v);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }

    // Affine map into the protocol's intensity window; every pixel lands in
    // [window_lo, window_hi], so the mean does too.
    const double span = hi - lo;
    const double scale = (span > 1e-12) ? (protocol.window_hi - protocol.window_lo) / span : 0.0;
    for (float& v : img.data)
        v = static_cast<float>(protocol.window_lo + (static_cast<double>(v) - lo) * scale);
    return img;
}

Tensor simulate_low_dose(const Tensor& clean, const ProtocolParams& protocol, uint64_t seed) {
    protocol.check();
    clean.check_valid("simulate_low_dose input");
    Rng rng(stream_seed(seed, 0x10d5e));
    Tensor noisy = clean;
    for (size_t i = 0; i < noisy.data.size(); ++i) {
        const double c = static_cast<double>(clean.data[i]);
        const double var = protocol.gain * std::max(0.0, c) + protocol.sigma * protocol.sigma;
        noisy.data[i] = static_cast<float>(c + std::sqrt(var) * rng.gauss());
    }
    return noisy;
}

std::vector<Tensor> extract_patches(const Tensor& img, int64_t patch, int64_t stride) {
    const int64_t h = img.h(), w = img.w();
    if (img.shape.size() != 2) throw ShapeError("extract_patches: need a 2-d image");
    if (patch <= 0 || patch > std::min(h, w))
        throw ShapeError("extract_patches: patch must be in [1, min(H, W)]");
    if (stride < 1) throw ShapeError("extract_patches: stride must be >= 1");

    std::vector<Tensor> out;
    const int64_t ny = (h - patch) / stride + 1;
    const int64_t nx = (w - patch) / stride + 1;
    out.reserve(static_cast<size_t>(ny * nx));
    for (int64_t py = 0; py < ny; ++py) {
        for (int64_t px = 0; px < nx; ++px) {
            Tensor t(patch, patch);
            for (int64_t y = 0; y < patch; ++y)
                for (int64_t x = 0; x < patch; ++x)
                    t.at(y, x) = img.at(py * stride + y, px * stride + x);
            out.push_back(std::move(t));
        }
    }
    return out;
}

uint64_t dataset_seed(uint64_t base_seed, int institution, Split split, int64_t index) {
    return stream_seed(base_seed, 0xda7a, static_cast<uint64_t>(institution),
                       static_cast<uint64_t>(split), static_cast<uint64_t>(index));
}

InstitutionDataset make_institution_dataset(const ProtocolParams& protocol, const DatasetSpec& spec,
                                            uint64_t base_seed) {
    protocol.check();
    if (spec.train_count <= 0) throw ShapeError("dataset: train count must be positive");

    InstitutionDataset ds;
    ds.id = protocol.id;
    ds.protocol = protocol;

    auto fill = [&](std::vector<ImagePair>& out, Split split, int64_t count) {
        out.reserve(static_cast<size_t>(count));
        for (int64_t i = 0; i < count; ++i) {
            const uint64_t s = dataset_seed(base_seed, protocol.id, split, i);
            ImagePair pair;
            pair.protocol_id = protocol.id;
            pair.clean = generate_phantom(protocol, s, spec.image_size, spec.image_size);
            pair.noisy = simulate_low_dose(pair.clean, protocol, stream_seed(s, 0x4015e));
            out.push_back(std::move(pair));
        }
    };
    fill(ds.train, Split::Train, spec.train_count);
    fill(ds.test, Split::Test, spec.test_count);
    fill(ds.characteristic, Split::Characteristic, spec.characteristic_count);
    return ds;
}

} // namespace icp2p
