#include "validate.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>

#include "continual.hpp"
#include "controller.hpp"
#include "errors.hpp"
#include "metrics.hpp"
#include "nn.hpp"
#include "orchestrator.hpp"
#include "rng.hpp"
#include "synth.hpp"
#include "wire.hpp"

namespace icp2p {

namespace {

struct Harness {
    std::vector<ValidationResult> results;

    void check(const std::string& name, const std::function<std::string()>& body) {
        ValidationResult r;
        r.name = name;
        try {
            r.detail = body();
            r.ok = true;
        } catch (const std::exception& e) {
            r.ok = false;
            r.detail = e.what();
        }
        results.push_back(std::move(r));
    }
};

[[noreturn]] void fail(const std::string& msg) { throw Error(msg); }

void expect(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

std::string wire_checks() {
    const uint8_t probe[9] = {'1', '2', '3', '4', '5', '6', '7', '8', '9'};
    expect(crc32(probe, sizeof(probe)) == 0xCBF43926u, "CRC32 check value mismatch");

    ModelPacket p;
    p.sender = 3;
    p.cycle = 7;
    p.site_rounds_done = 5;
    p.mv = {31.5, 0.91, 7.1e-4};
    p.params = {0.5f, -1.25f, 3.0f};
    p.has_g_prev = true;
    p.g_prev = {0.1f, 0.2f, 0.3f};
    std::vector<uint8_t> frame = encode(p);
    WireMessage m = decode(frame);
    expect(std::holds_alternative<ModelPacket>(m), "round-trip lost the message type");
    expect(encode(std::get<ModelPacket>(m)) == frame, "round-trip changed the bytes");

    std::vector<uint8_t> corrupt = frame;
    corrupt[frame.size() / 2] ^= 0x10;
    try {
        decode(corrupt);
        fail("corrupted frame decoded without error");
    } catch (const WireError&) {
    }
    return "crc check value, round-trip, corruption detection";
}

std::string qp_checks() {
    Rng rng(0x5EEDu);
    for (int i = 0; i < 50; ++i) {
        int dim = 2 + static_cast<int>(rng.below(10));
        std::vector<double> g(static_cast<size_t>(dim));
        for (double& x : g) x = rng.uniform(-1.0, 1.0);
        GradientConstraintSet G;
        int nrows = 1 + static_cast<int>(rng.below(3));
        for (int r = 0; r < nrows; ++r) {
            std::vector<double> row(static_cast<size_t>(dim));
            for (double& x : row) x = rng.uniform(-1.0, 1.0);
            G.add_row(std::move(row));
        }
        std::vector<double> proj = qp_project(g, G);
        for (const auto& row : G.rows) {
            double dot = 0;
            for (size_t k = 0; k < row.size(); ++k) dot += row[k] * proj[k];
            expect(dot >= -1e-8, "projection violates a constraint row");
        }
        bool feasible = true;
        for (const auto& row : G.rows) {
            double dot = 0;
            for (size_t k = 0; k < row.size(); ++k) dot += row[k] * g[k];
            feasible = feasible && dot >= 0.0;
        }
        if (feasible) expect(proj == g, "feasible input was not returned unchanged");
    }
    return "50 random instances: feasibility and fixed-point behavior";
}

std::string metric_checks() {
    expect(psnr_from_mse(0.01, 1.0) == 20.0, "psnr(mse=0.01, L=1) != 20 dB");
    Tensor a(16, 16);
    Rng rng(17);
    for (int64_t i = 0; i < a.numel(); ++i) a.data[i] = rng.uniform_f32();
    expect(mse(a, a) == 0.0, "mse(a,a) != 0");
    expect(ssim(a, a, 1.0) == 1.0, "ssim(a,a) != 1");
    return "psnr/ssim/mse identities";
}

std::string synth_checks() {
    ProtocolParams proto;
    proto.id = 1;
    proto.gain = 0.002;
    proto.sigma = 0.02;
    proto.family = 1;
    Tensor c1 = generate_phantom(proto, 42, 32, 32);
    Tensor c2 = generate_phantom(proto, 42, 32, 32);
    expect(c1.data == c2.data, "phantom generation is not seed-deterministic");
    Tensor n1 = simulate_low_dose(c1, proto, 43);
    Tensor n2 = simulate_low_dose(c1, proto, 43);
    expect(n1.data == n2.data, "noise simulation is not seed-deterministic");
    expect(n1.data != c1.data, "noise simulation left the image unchanged");
    return "bitwise repeatable phantoms and noise";
}

std::string identity_checks() {
    ModelArch arch;
    arch.blocks = 1;
    arch.channels = 4;
    DenoiserModel model;
    model.arch = arch;
    model.params = init_params(arch, 99);
    ParamVector again = init_params(arch, 99);
    expect(model.params == again, "init is not seed-deterministic");
    ProtocolParams proto;
    proto.id = 1;
    proto.gain = 0.004;
    proto.sigma = 0.03;
    proto.family = 2;
    Tensor x = generate_phantom(proto, 7, 32, 32);
    Tensor y = forward(model, x);
    expect(y.data == x.data, "fresh model is not the identity map");
    return "deterministic init; fresh model reproduces its input bitwise";
}

std::string gradient_checks() {
    ModelArch arch;
    arch.blocks = 1;
    arch.channels = 2;
    ParamVector p32 = init_params(arch, 5);
    Rng rng(11);
    for (float& v : p32) v += 0.1f * rng.uniform_f32() - 0.05f; // move off exact zeros
    std::vector<double> params = shadow::widen(p32);
    ProtocolParams proto;
    proto.id = 1;
    proto.gain = 0.002;
    proto.sigma = 0.02;
    proto.family = 1;
    Tensor x = generate_phantom(proto, 3, 32, 32);
    Tensor y = simulate_low_dose(x, proto, 4);

    std::vector<double> grad(params.size());
    shadow::backward(arch, params, x, y, grad);
    const double h = 1e-5;
    int checked = 0;
    for (size_t i = 0; i < params.size(); i += params.size() / 24 + 1) {
        std::vector<double> pp = params, pm = params;
        pp[i] += h;
        pm[i] -= h;
        double fd = (shadow::loss(arch, pp, x, y) - shadow::loss(arch, pm, x, y)) / (2 * h);
        double tol = 1e-6 + 1e-4 * std::abs(fd);
        expect(std::abs(fd - grad[i]) <= tol, "finite-difference mismatch at coordinate " +
                                                  std::to_string(i));
        ++checked;
    }
    return std::to_string(checked) + " coordinates vs central differences";
}

std::string controller_checks() {
    TrainConfig cfg;
    cfg.threshold = 0.8;
    std::vector<int32_t> ids{1, 2, 3, 4};
    ControlDirective cur = initial_directive(ids, cfg);
    Rng rng(0xD1CE);
    for (int trial = 0; trial < 100; ++trial) {
        std::map<int32_t, double> scores;
        bool any = false;
        for (int32_t id : ids) {
            double s = rng.uniform(0.0, 1.2);
            any = any || s >= cfg.threshold;
            scores[id] = s;
        }
        ControlDirective d1 = odm_decide(scores, cfg, cur);
        ControlDirective d2 = odm_decide(scores, cfg, cur);
        expect(d1.sequence == d2.sequence && d1.converged == d2.converged,
               "decision is not reproducible");
        std::vector<int32_t> sorted = d1.sequence;
        std::sort(sorted.begin(), sorted.end());
        expect(sorted == ids, "decision sequence is not a permutation");
        expect(any || d1.sequence == cur.sequence, "reorder without a triggering score");
    }
    return "100 randomized decisions: permutation, reproducibility, trigger rule";
}

std::string ring_checks() {
    DatasetSpec spec;
    spec.train_count = 2;
    spec.test_count = 1;
    spec.characteristic_count = 1;
    spec.image_size = 32;
    std::vector<InstitutionDataset> data;
    for (int id = 1; id <= 2; ++id) {
        ProtocolParams proto;
        proto.id = id;
        proto.gain = 0.002 * id;
        proto.sigma = 0.010 + 0.015 * (id - 1);
        proto.family = id;
        data.push_back(make_institution_dataset(proto, spec, 12));
    }
    RunConfig cfg;
    cfg.method = Method::Icp2pFl;
    cfg.train.seed = 12;
    cfg.train.batch = 2;
    cfg.train.lr = 1e-3;
    cfg.train.transmissions = 1;
    cfg.train.site_rounds = 1;
    cfg.train.patch = 32;
    cfg.train.stride = 32;
    cfg.arch.blocks = 1;
    cfg.arch.channels = 2;
    RunOutput a = run_icp2pfl(cfg, data, TransportKind::InProc);
    RunOutput b = run_icp2pfl(cfg, data, TransportKind::InProc);
    expect(a.transcript == b.transcript, "repeat run changed the transcript");
    expect(a.report.institutions.size() == 2, "missing institution trail");
    expect(a.report.institutions[0].final_digest == a.report.institutions[1].final_digest,
           "final digests disagree across the ring");
    expect(a.report.model_packets == 2, "unexpected message count for a 2-node single-cycle run");
    char buf[64];
    std::snprintf(buf, sizeof(buf), "digest %s on both nodes",
                  digest_hex(a.report.institutions[0].final_digest).c_str());
    return buf;
}

std::string average_checks() {
    std::vector<ParamVector> locals{{1.0f, 3.0f}, {3.0f, 5.0f}};
    ParamVector avg = federated_average(locals, {1.0, 1.0});
    expect(avg == ParamVector({2.0f, 4.0f}), "unweighted average wrong");
    ParamVector w = federated_average(locals, {1.0, 3.0});
    expect(w == ParamVector({2.5f, 4.5f}), "weighted average wrong");
    ParamVector same = federated_average({locals[0]}, {7.0});
    expect(same == locals[0], "single-model average is not the identity");
    return "weighted and unweighted parameter averaging";
}

} // namespace

std::vector<ValidationResult> run_validation() {
    Harness h;
    h.check("wire.framing", wire_checks);
    h.check("qp.projection", qp_checks);
    h.check("metrics.identities", metric_checks);
    h.check("synth.determinism", synth_checks);
    h.check("model.identity_init", identity_checks);
    h.check("model.gradient", gradient_checks);
    h.check("controller.decision", controller_checks);
    h.check("federated.average", average_checks);
    h.check("ring.two_node", ring_checks);
    return h.results;
}

bool all_ok(const std::vector<ValidationResult>& results) {
    for (const ValidationResult& r : results)
        if (!r.ok) return false;
    return true;
}

std::string format_validation(const std::vector<ValidationResult>& results) {
    std::ostringstream os;
    size_t passed = 0;
    for (const ValidationResult& r : results) {
        if (r.ok) {
            os << "ok   " << r.name << ": " << r.detail << "\n";
            ++passed;
        } else {
            os << "FAIL " << r.name << ": " << r.detail << "\n";
        }
    }
    os << passed << "/" << results.size() << " checks passed\n";
    return os.str();
}

} // namespace icp2p
