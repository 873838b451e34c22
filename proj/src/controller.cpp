#include "controller.hpp"

#include <algorithm>
#include <cmath>

namespace icp2p {

namespace {

constexpr int kDims[5] = {3, 16, 16, 8, 1};

void check_layer(const std::vector<double>& w, const std::vector<double>& b, int out, int in,
                 const char* name) {
    if (static_cast<int>(w.size()) != out * in || static_cast<int>(b.size()) != out)
        throw ShapeError(std::string("pam: layer ") + name + " has wrong shape");
    if (!all_finite(w) || !all_finite(b))
        throw NumericError(std::string("pam: non-finite weights in layer ") + name);
}

// y = W x + b
void affine(const std::vector<double>& w, const std::vector<double>& b, const double* x, int in,
            double* y, int out) {
    for (int o = 0; o < out; ++o) {
        double acc = b[static_cast<size_t>(o)];
        for (int i = 0; i < in; ++i) acc += w[static_cast<size_t>(o * in + i)] * x[i];
        y[o] = acc;
    }
}

struct PamTrace {
    std::array<double, 3> x;
    std::array<double, 16> z1, a1;
    std::array<double, 16> z2, a2;
    std::array<double, 8> z3, a3;
    double out;
};

double pam_forward(const PamMlp& pam, const std::array<double, 3>& x, PamTrace* trace) {
    std::array<double, 16> z1, a1, z2, a2;
    std::array<double, 8> z3, a3;
    affine(pam.w1, pam.b1, x.data(), 3, z1.data(), 16);
    for (int i = 0; i < 16; ++i) a1[static_cast<size_t>(i)] = std::tanh(z1[static_cast<size_t>(i)]);
    affine(pam.w2, pam.b2, a1.data(), 16, z2.data(), 16);
    for (int i = 0; i < 16; ++i) a2[static_cast<size_t>(i)] = std::tanh(z2[static_cast<size_t>(i)]);
    affine(pam.w3, pam.b3, a2.data(), 16, z3.data(), 8);
    for (int i = 0; i < 8; ++i) a3[static_cast<size_t>(i)] = std::tanh(z3[static_cast<size_t>(i)]);
    double out;
    affine(pam.w4, pam.b4, a3.data(), 8, &out, 1);
    if (trace) {
        trace->x = x;
        trace->z1 = z1;
        trace->a1 = a1;
        trace->z2 = z2;
        trace->a2 = a2;
        trace->z3 = z3;
        trace->a3 = a3;
        trace->out = out;
    }
    return out;
}

struct PamGrad {
    std::vector<double> w1, b1, w2, b2, w3, b3, w4, b4;

    explicit PamGrad() {
        w1.assign(16 * 3, 0.0);
        b1.assign(16, 0.0);
        w2.assign(16 * 16, 0.0);
        b2.assign(16, 0.0);
        w3.assign(8 * 16, 0.0);
        b3.assign(8, 0.0);
        w4.assign(8, 0.0);
        b4.assign(1, 0.0);
    }
};

// Accumulate d(loss)/d(weights) for one sample given d(loss)/d(out).
void pam_backward(const PamMlp& pam, const PamTrace& t, double dout, PamGrad& g) {
    std::array<double, 8> d3;
    for (int i = 0; i < 8; ++i) {
        g.w4[static_cast<size_t>(i)] += dout * t.a3[static_cast<size_t>(i)];
        d3[static_cast<size_t>(i)] = dout * pam.w4[static_cast<size_t>(i)];
    }
    g.b4[0] += dout;
    std::array<double, 8> dz3;
    for (int i = 0; i < 8; ++i)
        dz3[static_cast<size_t>(i)] =
            d3[static_cast<size_t>(i)] * (1.0 - t.a3[static_cast<size_t>(i)] * t.a3[static_cast<size_t>(i)]);

    std::array<double, 16> d2{};
    for (int o = 0; o < 8; ++o) {
        g.b3[static_cast<size_t>(o)] += dz3[static_cast<size_t>(o)];
        for (int i = 0; i < 16; ++i) {
            g.w3[static_cast<size_t>(o * 16 + i)] += dz3[static_cast<size_t>(o)] * t.a2[static_cast<size_t>(i)];
            d2[static_cast<size_t>(i)] += dz3[static_cast<size_t>(o)] * pam.w3[static_cast<size_t>(o * 16 + i)];
        }
    }
    std::array<double, 16> dz2;
    for (int i = 0; i < 16; ++i)
        dz2[static_cast<size_t>(i)] =
            d2[static_cast<size_t>(i)] * (1.0 - t.a2[static_cast<size_t>(i)] * t.a2[static_cast<size_t>(i)]);

    std::array<double, 16> d1{};
    for (int o = 0; o < 16; ++o) {
        g.b2[static_cast<size_t>(o)] += dz2[static_cast<size_t>(o)];
        for (int i = 0; i < 16; ++i) {
            g.w2[static_cast<size_t>(o * 16 + i)] += dz2[static_cast<size_t>(o)] * t.a1[static_cast<size_t>(i)];
            d1[static_cast<size_t>(i)] += dz2[static_cast<size_t>(o)] * pam.w2[static_cast<size_t>(o * 16 + i)];
        }
    }
    std::array<double, 16> dz1;
    for (int i = 0; i < 16; ++i)
        dz1[static_cast<size_t>(i)] =
            d1[static_cast<size_t>(i)] * (1.0 - t.a1[static_cast<size_t>(i)] * t.a1[static_cast<size_t>(i)]);

    for (int o = 0; o < 16; ++o) {
        g.b1[static_cast<size_t>(o)] += dz1[static_cast<size_t>(o)];
        for (int i = 0; i < 3; ++i)
            g.w1[static_cast<size_t>(o * 3 + i)] += dz1[static_cast<size_t>(o)] * t.x[static_cast<size_t>(i)];
    }
}

void check_mv(const MetricVector& mv) {
    if (!std::isfinite(mv.p) || !std::isfinite(mv.s) || !std::isfinite(mv.m))
        throw NumericError("pam: non-finite metric vector");
}

} // namespace

void PamMlp::check() const {
    check_layer(w1, b1, kDims[1], kDims[0], "1");
    check_layer(w2, b2, kDims[2], kDims[1], "2");
    check_layer(w3, b3, kDims[3], kDims[2], "3");
    check_layer(w4, b4, kDims[4], kDims[3], "4");
}

PamMlp pam_init(uint64_t seed) {
    Rng rng(stream_seed(seed, 0x9a3));
    PamMlp pam;
    auto init_layer = [&](std::vector<double>& w, std::vector<double>& b, int out, int in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        w.resize(static_cast<size_t>(out * in));
        for (double& v : w) v = rng.uniform(-bound, bound);
        b.assign(static_cast<size_t>(out), 0.0);
    };
    init_layer(pam.w1, pam.b1, kDims[1], kDims[0]);
    init_layer(pam.w2, pam.b2, kDims[2], kDims[1]);
    init_layer(pam.w3, pam.b3, kDims[3], kDims[2]);
    init_layer(pam.w4, pam.b4, kDims[4], kDims[3]);
    return pam;
}

std::array<double, 3> pam_normalize(const MetricVector& mv) {
    check_mv(mv);
    return {std::min(mv.p, 60.0) / 60.0, mv.s, std::clamp(mv.m / 0.01, 0.0, 1.0)};
}

double fallback_score(const MetricVector& mv) {
    check_mv(mv);
    return 0.5 * (std::min(mv.p, 60.0) / 30.0) + 0.5 * mv.s;
}

double pam_score(const PamMlp& pam, const MetricVector& mv) {
    pam.check();
    return pam_forward(pam, pam_normalize(mv), nullptr);
}

PamMlp pam_pretrain(const std::vector<std::pair<MetricVector, double>>& calibration,
                    uint64_t seed) {
    if (calibration.size() < 32)
        throw ShapeError("pam_pretrain: need at least 32 calibration points, got " +
                         std::to_string(calibration.size()));
    std::vector<std::array<double, 3>> xs;
    xs.reserve(calibration.size());
    for (const auto& [mv, target] : calibration) {
        xs.push_back(pam_normalize(mv));
        if (!std::isfinite(target)) throw NumericError("pam_pretrain: non-finite target");
    }

    PamMlp pam = pam_init(seed);
    const double lr = 0.05;
    const double momentum = 0.9;
    PamGrad vel;

    const double inv_n = 1.0 / static_cast<double>(calibration.size());
    for (int step = 0; step < 5000; ++step) {
        PamGrad grad;
        double mse_acc = 0.0;
        for (size_t i = 0; i < calibration.size(); ++i) {
            PamTrace t;
            const double out = pam_forward(pam, xs[i], &t);
            const double err = out - calibration[i].second;
            mse_acc += err * err;
            pam_backward(pam, t, 2.0 * err * inv_n, grad);
        }
        // The contract floor is 1e-3; training to 1e-6 keeps held-out error
        // against a smooth target comfortably inside 0.02.
        if (mse_acc * inv_n <= 1e-6) break;

        auto apply = [&](std::vector<double>& w, std::vector<double>& g, std::vector<double>& v) {
            for (size_t i = 0; i < w.size(); ++i) {
                v[i] = momentum * v[i] - lr * g[i];
                w[i] += v[i];
            }
        };
        apply(pam.w1, grad.w1, vel.w1);
        apply(pam.b1, grad.b1, vel.b1);
        apply(pam.w2, grad.w2, vel.w2);
        apply(pam.b2, grad.b2, vel.b2);
        apply(pam.w3, grad.w3, vel.w3);
        apply(pam.b3, grad.b3, vel.b3);
        apply(pam.w4, grad.w4, vel.w4);
        apply(pam.b4, grad.b4, vel.b4);
    }
    pam.check();
    return pam;
}

ParamVector pam_to_params(const PamMlp& pam) {
    pam.check();
    ParamVector out;
    auto push = [&](const std::vector<double>& v) {
        for (double x : v) out.push_back(static_cast<float>(x));
    };
    push(pam.w1);
    push(pam.b1);
    push(pam.w2);
    push(pam.b2);
    push(pam.w3);
    push(pam.b3);
    push(pam.w4);
    push(pam.b4);
    return out;
}

PamMlp pam_from_params(const ParamVector& params) {
    PamMlp pam;
    size_t at = 0;
    auto pull = [&](std::vector<double>& v, int n) {
        if (at + static_cast<size_t>(n) > params.size())
            throw ShapeError("pam_from_params: vector too short");
        v.resize(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] = static_cast<double>(params[at++]);
    };
    pull(pam.w1, 16 * 3);
    pull(pam.b1, 16);
    pull(pam.w2, 16 * 16);
    pull(pam.b2, 16);
    pull(pam.w3, 8 * 16);
    pull(pam.b3, 8);
    pull(pam.w4, 8);
    pull(pam.b4, 1);
    if (at != params.size()) throw ShapeError("pam_from_params: trailing data");
    pam.check();
    return pam;
}

void ControlDirective::check() const {
    if (sequence.empty()) throw ShapeError("directive: empty sequence");
    if (site_rounds.size() != sequence.size())
        throw ShapeError("directive: site_rounds must parallel the sequence");
    std::vector<int32_t> sorted = sequence;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw ShapeError("directive: sequence contains a duplicate id");
    for (int32_t s : site_rounds)
        if (s < 1) throw ShapeError("directive: site-round counts must be >= 1");
    if (trans_rounds < 1) throw ShapeError("directive: transmission count must be >= 1");
    if (streak < 0) throw ShapeError("directive: negative streak");
}

int32_t ControlDirective::rounds_for(int32_t id) const {
    for (size_t i = 0; i < sequence.size(); ++i)
        if (sequence[i] == id) return site_rounds[i];
    throw ShapeError("directive: unknown institution id " + std::to_string(id));
}

int32_t ControlDirective::successor_of(int32_t id) const {
    for (size_t i = 0; i < sequence.size(); ++i)
        if (sequence[i] == id) return sequence[(i + 1) % sequence.size()];
    throw ShapeError("directive: unknown institution id " + std::to_string(id));
}

ControlDirective initial_directive(const std::vector<int32_t>& ids, const TrainConfig& cfg) {
    cfg.check();
    ControlDirective d;
    d.sequence = ids;
    std::sort(d.sequence.begin(), d.sequence.end());
    d.site_rounds.assign(d.sequence.size(), cfg.site_rounds);
    d.trans_rounds = cfg.transmissions;
    d.check();
    return d;
}

ControlDirective odm_decide(const std::map<int32_t, double>& scores, const TrainConfig& cfg,
                            const ControlDirective& current) {
    current.check();
    cfg.check();
    if (scores.size() != current.sequence.size())
        throw ShapeError("odm_decide: need exactly one score per institution");
    for (int32_t id : current.sequence) {
        auto it = scores.find(id);
        if (it == scores.end())
            throw ShapeError("odm_decide: missing score for institution " + std::to_string(id));
        if (!std::isfinite(it->second))
            throw NumericError("odm_decide: non-finite score for institution " + std::to_string(id));
    }

    bool any = false, all = true;
    for (const auto& [id, rho] : scores) {
        if (rho >= cfg.threshold)
            any = true;
        else
            all = false;
    }

    ControlDirective next = current;
    if (!any) {
        next.streak = 0; // a below-threshold cycle breaks any convergence run
        return next;
    }

    // Worst score trains first; ties resolved by ascending id (std::map
    // iteration order makes the sort stable in id).
    std::vector<std::pair<double, int32_t>> order;
    order.reserve(scores.size());
    for (const auto& [id, rho] : scores) order.emplace_back(rho, id);
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    next.sequence.clear();
    next.site_rounds.clear();
    const int32_t boosted = std::min(cfg.site_rounds + 2, 2 * cfg.site_rounds);
    for (size_t i = 0; i < order.size(); ++i) {
        next.sequence.push_back(order[i].second);
        next.site_rounds.push_back(i == 0 ? boosted : cfg.site_rounds);
    }
    next.streak = all ? current.streak + 1 : 0;
    next.converged = next.streak >= 2;
    next.check();
    return next;
}

} // namespace icp2p
