#include "orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <exception>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "metrics.hpp"
#include "node.hpp"
#include "rng.hpp"
#include "wire.hpp"

namespace icp2p {

const char* method_name(Method m) {
    switch (m) {
        case Method::Icp2pFl: return "icp2pfl";
        case Method::FedAvg: return "fedavg";
        case Method::ClSi: return "cl-si";
        case Method::ClMi: return "cl-mi";
        case Method::SeqAblation: return "seq-ablation";
    }
    return "?";
}

Method method_from_name(const std::string& name) {
    for (Method m : {Method::Icp2pFl, Method::FedAvg, Method::ClSi, Method::ClMi,
                     Method::SeqAblation})
        if (name == method_name(m)) return m;
    throw ShapeError("unknown method: " + name);
}

const char* transport_name(TransportKind k) {
    return k == TransportKind::InProc ? "inproc" : "socket";
}

void RunConfig::check() const {
    train.check();
    arch.check();
    if (!(dynamic_range > 0.0)) throw ShapeError("dynamic_range must be positive");
    if (!(psnr_cap > 0.0) || !std::isfinite(psnr_cap)) throw ShapeError("psnr_cap must be positive and finite");
    if (lr_decay_round < 0) throw ShapeError("lr_decay_round must be >= 0");
    if (!(lr_decay_factor > 0.0) || lr_decay_factor > 1.0)
        throw ShapeError("lr_decay_factor must be in (0, 1]");
    if (si_institution < 0) throw ShapeError("si_institution must be >= 0");
}

namespace {

// ---- shared numerics ----------------------------------------------------

constexpr uint64_t kInitTag = 0x1217;    // global model init stream
constexpr uint64_t kRingShuffle = 0xba7c4;
constexpr uint64_t kFedShuffle = 0xfeda;
constexpr uint64_t kPoolShuffle = 0xce27;

double capped(double p, double cap) { return p < cap ? p : cap; }

MetricVector finalize_metrics(double sum_m, double sum_s, size_t n, double range, double cap) {
    MetricVector mv;
    mv.m = sum_m / static_cast<double>(n);
    mv.s = sum_s / static_cast<double>(n);
    mv.p = capped(psnr_from_mse(mv.m, range), cap);
    return mv;
}

} // namespace

ParamVector federated_average(const std::vector<ParamVector>& locals,
                              const std::vector<double>& sizes) {
    if (locals.empty() || locals.size() != sizes.size())
        throw ShapeError("federated_average: locals/sizes mismatch");
    const size_t n = locals[0].size();
    double total = 0.0;
    for (double s : sizes) {
        if (!(s > 0.0) || !std::isfinite(s)) throw ShapeError("federated_average: bad size weight");
        total += s;
    }
    std::vector<double> acc(n, 0.0);
    for (size_t k = 0; k < locals.size(); ++k) {
        if (locals[k].size() != n) throw ShapeError("federated_average: parameter count mismatch");
        for (size_t i = 0; i < n; ++i) acc[i] += sizes[k] * static_cast<double>(locals[k][i]);
    }
    ParamVector out(n);
    for (size_t i = 0; i < n; ++i) out[i] = static_cast<float>(acc[i] / total);
    if (!all_finite(out)) throw NumericError("federated_average: non-finite result");
    return out;
}

size_t batches_per_epoch(size_t n, int batch) {
    if (n == 0 || batch <= 0) throw ShapeError("batches_per_epoch: empty set or bad batch");
    const size_t nb = n / static_cast<size_t>(batch);
    return nb == 0 ? 1 : nb;
}

MetricVector evaluate_noisy(const std::vector<ImagePair>& pairs, double dynamic_range, double cap) {
    if (pairs.empty()) throw ShapeError("evaluate_noisy: empty split");
    double sum_m = 0.0, sum_s = 0.0;
    for (const ImagePair& pr : pairs) {
        sum_m += mse(pr.noisy, pr.clean);
        sum_s += ssim(pr.noisy, pr.clean, dynamic_range);
    }
    return finalize_metrics(sum_m, sum_s, pairs.size(), dynamic_range, cap);
}

MetricVector evaluate_model(const DenoiserModel& model, const std::vector<ImagePair>& pairs,
                            double dynamic_range, double cap) {
    if (pairs.empty()) throw ShapeError("evaluate_model: empty split");
    double sum_m = 0.0, sum_s = 0.0;
    for (const ImagePair& pr : pairs) {
        const Tensor pred = forward(model, pr.noisy);
        sum_m += mse(pred, pr.clean);
        sum_s += ssim(pred, pr.clean, dynamic_range);
    }
    return finalize_metrics(sum_m, sum_s, pairs.size(), dynamic_range, cap);
}

namespace {

// ---- run plumbing -------------------------------------------------------

std::vector<ImagePair> patchify(const std::vector<ImagePair>& pairs, int64_t patch,
                                int64_t stride) {
    std::vector<ImagePair> out;
    for (const ImagePair& pr : pairs) {
        std::vector<Tensor> pc = extract_patches(pr.clean, patch, stride);
        std::vector<Tensor> pn = extract_patches(pr.noisy, patch, stride);
        for (size_t i = 0; i < pc.size(); ++i) {
            ImagePair p;
            p.clean = std::move(pc[i]);
            p.noisy = std::move(pn[i]);
            p.protocol_id = pr.protocol_id;
            out.push_back(std::move(p));
        }
    }
    if (out.empty()) throw ShapeError("patchify: no training patches");
    return out;
}

std::vector<size_t> shuffled_indices(size_t n, Rng& rng) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    return idx;
}

std::vector<std::pair<const Tensor*, const Tensor*>>
gather_batch(const std::vector<ImagePair>& patches, const std::vector<size_t>& idx, size_t b,
             int batch) {
    const size_t lo = b * static_cast<size_t>(batch);
    const size_t hi = std::min(lo + static_cast<size_t>(batch), idx.size());
    std::vector<std::pair<const Tensor*, const Tensor*>> pairs;
    pairs.reserve(hi - lo);
    for (size_t i = lo; i < hi; ++i)
        pairs.push_back({&patches[idx[i]].noisy, &patches[idx[i]].clean});
    return pairs;
}

double effective_lr(const RunConfig& cfg, int32_t round) {
    if (cfg.lr_decay_round > 0 && round + 1 >= cfg.lr_decay_round)
        return cfg.train.lr * cfg.lr_decay_factor;
    return cfg.train.lr;
}

/// One plain-SGD epoch over the patch set (baselines; also the ring method
/// when the correction strength is zero).
void plain_epoch(DenoiserModel& model, const std::vector<ImagePair>& patches, int batch,
                 double lr, uint64_t shuffle_seed) {
    Rng rng(shuffle_seed);
    const std::vector<size_t> idx = shuffled_indices(patches.size(), rng);
    const size_t nb = batches_per_epoch(patches.size(), batch);
    std::vector<double> grad;
    for (size_t b = 0; b < nb; ++b) {
        mean_gradient(model, gather_batch(patches, idx, b, batch), grad);
        update_params(model.params, grad, lr);
    }
}

std::vector<const InstitutionDataset*> sorted_datasets(const std::vector<InstitutionDataset>& data,
                                                       size_t min_count) {
    if (data.size() < min_count)
        throw ShapeError("run: need at least " + std::to_string(min_count) + " institutions");
    std::vector<const InstitutionDataset*> out;
    for (const InstitutionDataset& d : data) {
        if (d.train.empty() || d.test.empty() || d.characteristic.empty())
            throw ShapeError("run: institution " + std::to_string(d.id) + " has an empty split");
        out.push_back(&d);
    }
    std::sort(out.begin(), out.end(),
              [](const InstitutionDataset* a, const InstitutionDataset* b) { return a->id < b->id; });
    for (size_t i = 1; i < out.size(); ++i)
        if (out[i]->id == out[i - 1]->id)
            throw ShapeError("run: duplicate institution id " + std::to_string(out[i]->id));
    return out;
}

/// Calibration grid for the score MLP: a lattice of metric points labelled
/// by the closed-form scorer. Every node builds the same grid, so every node
/// fits the same network.
PamMlp build_pam(const RunConfig& cfg) {
    std::vector<std::pair<MetricVector, double>> calib;
    for (double p : {18.0, 26.0, 34.0, 42.0, 50.0, 58.0})
        for (double s : {0.35, 0.55, 0.72, 0.86, 0.94, 0.99}) {
            MetricVector mv;
            mv.p = p;
            mv.s = s;
            mv.m = std::pow(10.0, -p / 10.0); // range-1 self-consistent MSE
            calib.push_back({mv, fallback_score(mv)});
        }
    return pam_pretrain(calib, cfg.train.seed);
}

struct Scorer {
    bool use_pam = false;
    PamMlp pam;

    double operator()(const MetricVector& mv) const {
        return use_pam ? pam_score(pam, mv) : fallback_score(mv);
    }
};

MetricVector clamp_for_wire(MetricVector mv, double cap) {
    mv.p = capped(mv.p, cap);
    return mv;
}

uint32_t frame_crc(const std::vector<uint8_t>& frame) {
    uint32_t crc = 0;
    std::memcpy(&crc, frame.data() + frame.size() - 4, 4);
    return crc;
}

std::string hex8(uint32_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(8) << std::setfill('0') << v;
    return os.str();
}

// ---- ring engine --------------------------------------------------------

struct NodeRt;

struct RingShared {
    const RunConfig* cfg = nullptr;
    Transport* transport = nullptr;
    Scorer scorer;
    std::vector<int32_t> ids;

    std::atomic<int> active{0}; // ring conservation: at most one worker
    std::atomic<bool> abort{false};
    std::mutex err_mu;
    std::exception_ptr error;

    std::mutex dir_mu;
    std::vector<DirectiveRecord> directives;

    std::atomic<uint64_t> mp_sent{0}, sr_sent{0};

    void fail(std::exception_ptr e) {
        {
            std::lock_guard<std::mutex> lock(err_mu);
            if (!error) error = e;
        }
        abort = true;
        transport->shutdown();
    }
};

struct NodeRt {
    NodeCore core;
    const InstitutionDataset* data = nullptr;
    std::vector<ImagePair> patches;
    ParamVector params;

    // Constraint context for the upcoming turn.
    std::vector<float> g_prev;
    bool has_g_prev = false;
    ParamVector anchor;
    bool has_anchor = false;

    int32_t turn = 0; // completed cycles

    // Scores received / produced, keyed cycle -> institution.
    std::mutex score_mu;
    std::map<int32_t, std::map<int32_t, double>> rho;

    InstitutionTrail trail;

    // Deterministic per-node event log; score receipts are kept separately
    // because their arrival order is transport-dependent.
    std::vector<std::string> log;
    std::vector<std::tuple<int32_t, int32_t, uint32_t>> score_log; // cycle, sender, crc
};

void store_rho(NodeRt& rt, int32_t cycle, int32_t inst, double value) {
    std::lock_guard<std::mutex> lock(rt.score_mu);
    rt.rho[cycle][inst] = value;
}

void absorb_score(NodeRt& rt, const std::vector<uint8_t>& frame, const ScoreReport& report) {
    rt.score_log.push_back({report.cycle, report.sender, frame_crc(frame)});
    store_rho(rt, report.cycle, report.sender, report.rho);
}

bool scores_complete(NodeRt& rt, int32_t cycle, const std::vector<int32_t>& expected,
                     std::map<int32_t, double>& out) {
    std::lock_guard<std::mutex> lock(rt.score_mu);
    const auto it = rt.rho.find(cycle);
    if (it == rt.rho.end()) return false;
    for (int32_t id : expected)
        if (!it->second.count(id)) return false;
    out = it->second;
    return true;
}

/// Collector barrier: all of `expected` must have reported for `cycle`.
/// This node's loop is the only consumer of its inbox, so the barrier keeps
/// draining it; only score traffic may arrive while the node holds the
/// training token.
std::map<int32_t, double> await_scores(NodeRt& rt, RingShared& shared, int32_t cycle,
                                       const std::vector<int32_t>& expected) {
    std::map<int32_t, double> got;
    while (!scores_complete(rt, cycle, expected, got)) {
        if (shared.abort) throw ProtocolError("run aborted while awaiting score reports");
        std::vector<uint8_t> frame;
        if (!shared.transport->recv(rt.core.id, frame))
            throw ProtocolError("node " + std::to_string(rt.core.id) +
                                ": score reports missing for cycle " + std::to_string(cycle));
        const WireMessage msg = decode(frame);
        const auto* report = std::get_if<ScoreReport>(&msg);
        if (!report)
            throw ProtocolError("node " + std::to_string(rt.core.id) +
                                ": non-score message while holding the training token");
        absorb_score(rt, frame, *report);
        advance(rt.core, EvMessage{msg}); // legality check; absorbed silently
    }
    return got;
}

void send_all(NodeRt& rt, RingShared& shared, const std::vector<Outgoing>& outs) {
    for (const Outgoing& o : outs) {
        const std::vector<uint8_t> frame = encode(o.msg);
        const char* type = std::holds_alternative<ModelPacket>(o.msg) ? "MP" : "SR";
        int32_t cycle = 0;
        if (const auto* p = std::get_if<ModelPacket>(&o.msg)) {
            cycle = p->cycle;
            shared.mp_sent++;
        } else if (const auto* r = std::get_if<ScoreReport>(&o.msg)) {
            cycle = r->cycle;
            shared.sr_sent++;
        }
        rt.log.push_back("sent " + std::string(type) + " -> " + std::to_string(o.dest) +
                         " cycle=" + std::to_string(cycle) + " len=" + std::to_string(frame.size()) +
                         " crc=" + hex8(frame_crc(frame)));
        shared.transport->send(rt.core.id, o.dest, frame);
    }
}

/// One full turn: site-rounds of corrected batched SGD, then evaluation,
/// packet construction, and (for the cycle-end node) the controller step.
void do_turn(NodeRt& rt, RingShared& shared) {
    const RunConfig& cfg = *shared.cfg;
    const int32_t cycle = rt.turn;
    const int32_t id = rt.core.id;
    const double eps = cfg.train.eps;

    if (1 + shared.active.fetch_add(1) > 1)
        throw ProtocolError("ring conservation violated: concurrent training turns");

    DenoiserModel model;
    model.arch = cfg.arch;
    if (!cfg.fine_tune_incoming && rt.has_anchor) {
        // Ablation: ignore the incoming weights for training (they still
        // anchor the drift constraint) and restart from a fresh init.
        model.params = init_params(cfg.arch, stream_seed(cfg.train.seed, kInitTag,
                                                         static_cast<uint64_t>(id),
                                                         static_cast<uint64_t>(cycle) + 1));
    } else {
        model.params = rt.params;
    }

    const int32_t rounds = rt.core.directive.rounds_for(id);
    const double lr = effective_lr(cfg, cycle);
    std::vector<double> grad;
    for (int32_t r = 0; r < rounds; ++r) {
        std::vector<double> g_curr;
        if (eps > 0.0) g_curr = reference_gradient(model, rt.data->characteristic);
        Rng rng(stream_seed(cfg.train.seed, kRingShuffle, static_cast<uint64_t>(id),
                            static_cast<uint64_t>(cycle), static_cast<uint64_t>(r)));
        const std::vector<size_t> idx = shuffled_indices(rt.patches.size(), rng);
        const size_t nb = batches_per_epoch(rt.patches.size(), cfg.train.batch);
        for (size_t b = 0; b < nb; ++b) {
            mean_gradient(model, gather_batch(rt.patches, idx, b, cfg.train.batch), grad);
            if (eps > 0.0) {
                GradientConstraintSet G;
                if (rt.has_g_prev) G.add_row(rt.g_prev);
                G.add_row(g_curr);
                if (rt.has_anchor) {
                    std::vector<double> delta(model.params.size());
                    for (size_t i = 0; i < delta.size(); ++i)
                        delta[i] = static_cast<double>(model.params[i]) -
                                   static_cast<double>(rt.anchor[i]);
                    G.add_row(std::move(delta));
                }
                update_params(model.params, corrected_gradient(grad, G, eps).first, lr);
            } else {
                update_params(model.params, grad, lr);
            }
        }
    }

    send_all(rt, shared, advance(rt.core, EvTrainingComplete{})); // no emission

    const std::vector<double> g_out = reference_gradient(model, rt.data->characteristic);
    const MetricVector mv_char =
        evaluate_model(model, rt.data->characteristic, cfg.dynamic_range, cfg.psnr_cap);
    const MetricVector mv_test =
        evaluate_model(model, rt.data->test, cfg.dynamic_range, cfg.psnr_cap);
    const double rho = shared.scorer(mv_char);

    rt.params = model.params;
    rt.trail.cycles.push_back({cycle, mv_test, mv_char, rho});
    store_rho(rt, cycle, id, rho);

    EvEvaluationComplete ev;
    ev.packet.sender = id;
    ev.packet.cycle = cycle;
    ev.packet.site_rounds_done = rounds;
    ev.packet.mv = clamp_for_wire(mv_char, cfg.psnr_cap);
    ev.packet.params = rt.params;
    ev.packet.has_g_prev = true;
    ev.packet.g_prev.assign(g_out.size(), 0.0f);
    for (size_t i = 0; i < g_out.size(); ++i) ev.packet.g_prev[i] = static_cast<float>(g_out[i]);
    ev.packet.has_directive = true;
    ev.packet.directive = rt.core.directive;

    if (rt.core.is_cycle_end()) {
        std::vector<int32_t> expected;
        for (int32_t other : rt.core.directive.sequence)
            if (other != id) expected.push_back(other);
        const std::map<int32_t, double> scores = await_scores(rt, shared, cycle, expected);

        ControlDirective decision =
            cfg.odm_switch ? odm_decide(scores, cfg.train, rt.core.directive) : rt.core.directive;
        if (cycle + 1 >= cfg.train.transmissions) decision.converged = true; // budget exhausted
        {
            std::lock_guard<std::mutex> lock(shared.dir_mu);
            shared.directives.push_back({cycle, decision});
        }
        ev.decision = decision;
    } else {
        ScoreReport report;
        report.sender = id;
        report.cycle = cycle;
        report.rho = rho;
        report.mv = ev.packet.mv;
        ev.report = report;
    }

    const std::vector<Outgoing> outs = advance(rt.core, std::move(ev));
    // The token moves with the packet: release before the send so the
    // receiver's pickup can never race ahead of this decrement.
    shared.active.fetch_sub(1);
    send_all(rt, shared, outs);
    rt.turn = cycle + 1;
}

void finish_node(NodeRt& rt, const RunConfig& cfg) {
    DenoiserModel model;
    model.arch = cfg.arch;
    model.params = rt.params;
    rt.trail.final_test = evaluate_model(model, rt.data->test, cfg.dynamic_range, cfg.psnr_cap);
    rt.trail.final_characteristic =
        evaluate_model(model, rt.data->characteristic, cfg.dynamic_range, cfg.psnr_cap);
    rt.trail.final_digest = param_digest(rt.params);
    rt.log.push_back("final digest=" + digest_hex(rt.trail.final_digest));
}

void node_loop(NodeRt& rt, RingShared& shared) {
    const RunConfig& cfg = *shared.cfg;
    send_all(rt, shared, advance(rt.core, EvStart{}));
    if (rt.core.state == NodeState::Training) do_turn(rt, shared);

    while (rt.core.state != NodeState::Terminated) {
        if (rt.core.state == NodeState::Broadcasting) {
            send_all(rt, shared, advance(rt.core, EvBroadcastComplete{}));
            break;
        }
        std::vector<uint8_t> frame;
        if (!shared.transport->recv(rt.core.id, frame)) {
            if (shared.abort) throw ProtocolError("run aborted");
            throw ProtocolError("node " + std::to_string(rt.core.id) + " starved for messages");
        }
        const WireMessage msg = decode(frame);

        if (const auto* r = std::get_if<ScoreReport>(&msg)) {
            absorb_score(rt, frame, *r);
            advance(rt.core, EvMessage{msg}); // absorbed, nothing emitted
            continue;
        }

        const ModelPacket& packet = std::get<ModelPacket>(msg);
        rt.log.push_back("recv MP sender=" + std::to_string(packet.sender) +
                         " cycle=" + std::to_string(packet.cycle) + " crc=" +
                         hex8(frame_crc(frame)));
        const std::vector<Outgoing> outs = advance(rt.core, EvMessage{msg});

        if (rt.core.state == NodeState::Broadcasting) {
            rt.params = packet.params; // final weights
            send_all(rt, shared, outs);
            send_all(rt, shared, advance(rt.core, EvBroadcastComplete{}));
            break;
        }

        // Training: adopt the payload as this turn's starting point/anchor.
        const int32_t expect =
            rt.core.directive.sequence.front() == rt.core.id ? rt.turn - 1 : rt.turn;
        if (packet.cycle != expect)
            throw ProtocolError("node " + std::to_string(rt.core.id) + ": cycle stamp " +
                                std::to_string(packet.cycle) + ", expected " +
                                std::to_string(expect));
        if (packet.params.size() != rt.params.size())
            throw ProtocolError("node " + std::to_string(rt.core.id) +
                                ": parameter count mismatch in model packet");
        rt.anchor = packet.params;
        rt.has_anchor = true;
        if (cfg.fine_tune_incoming) rt.params = packet.params;
        rt.has_g_prev = packet.has_g_prev;
        if (packet.has_g_prev) rt.g_prev = packet.g_prev;
        do_turn(rt, shared);
    }
    finish_node(rt, cfg);
}

std::string assemble_transcript(const RunConfig& cfg, const std::vector<NodeRt>& nodes) {
    std::ostringstream os;
    os << "run method=" << method_name(cfg.method) << " seed=" << cfg.train.seed
       << " nodes=" << nodes.size() << "\n";
    for (const NodeRt& rt : nodes) {
        os << "node " << rt.core.id << "\n";
        for (const std::string& line : rt.log) os << "  " << line << "\n";
        std::vector<std::tuple<int32_t, int32_t, uint32_t>> scores = rt.score_log;
        std::sort(scores.begin(), scores.end());
        for (const auto& [cycle, sender, crc] : scores)
            os << "  score cycle=" << cycle << " from=" << sender << " crc=" << hex8(crc) << "\n";
    }
    return os.str();
}

RunReport base_report(const RunConfig& cfg,
                      const std::vector<const InstitutionDataset*>& data) {
    RunReport report;
    report.method = cfg.method;
    report.seed = cfg.train.seed;
    report.institutions.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) {
        report.institutions[i].id = data[i]->id;
        report.institutions[i].noisy_test =
            evaluate_noisy(data[i]->test, cfg.dynamic_range, cfg.psnr_cap);
    }
    return report;
}

} // namespace

RunOutput run_icp2pfl(const RunConfig& cfg, const std::vector<InstitutionDataset>& data,
                      TransportKind kind) {
    cfg.check();
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<const InstitutionDataset*> sorted = sorted_datasets(data, 2);

    RingShared shared;
    shared.cfg = &cfg;
    shared.scorer.use_pam = cfg.use_pam;
    if (cfg.use_pam) shared.scorer.pam = build_pam(cfg);
    for (const InstitutionDataset* d : sorted) shared.ids.push_back(d->id);

    std::unique_ptr<Transport> transport = kind == TransportKind::InProc
                                               ? make_inproc_transport(shared.ids)
                                               : make_socket_transport(shared.ids);
    shared.transport = transport.get();

    const ControlDirective initial = initial_directive(shared.ids, cfg.train);
    const ParamVector init = init_params(cfg.arch, stream_seed(cfg.train.seed, kInitTag));

    std::vector<NodeRt> nodes(sorted.size());
    for (size_t i = 0; i < sorted.size(); ++i) {
        NodeRt& rt = nodes[i];
        rt.core.id = sorted[i]->id;
        rt.core.directive = initial;
        rt.data = sorted[i];
        rt.patches = patchify(sorted[i]->train, cfg.train.patch, cfg.train.stride);
        rt.params = init;
        rt.trail.id = sorted[i]->id;
    }

    std::vector<std::thread> threads;
    threads.reserve(nodes.size());
    for (NodeRt& rt : nodes)
        threads.emplace_back([&rt, &shared] {
            try {
                node_loop(rt, shared);
            } catch (...) {
                shared.fail(std::current_exception());
            }
        });
    for (std::thread& t : threads) t.join();
    transport->shutdown();
    if (shared.error) std::rethrow_exception(shared.error);

    RunOutput out;
    out.report = base_report(cfg, sorted);
    out.report.transport = kind;
    out.report.directives = std::move(shared.directives);
    std::sort(out.report.directives.begin(), out.report.directives.end(),
              [](const DirectiveRecord& a, const DirectiveRecord& b) { return a.cycle < b.cycle; });
    out.report.executed_cycles = static_cast<int32_t>(out.report.directives.size());
    out.report.model_packets = shared.mp_sent;
    out.report.score_reports = shared.sr_sent;
    for (size_t i = 0; i < nodes.size(); ++i) {
        NodeRt& rt = nodes[i];
        if (static_cast<int32_t>(rt.trail.cycles.size()) != out.report.executed_cycles)
            throw ProtocolError("trail length mismatch at institution " +
                                std::to_string(rt.core.id));
        out.report.final_rho[rt.core.id] = rt.trail.cycles.back().rho;
        out.report.institutions[i].cycles = std::move(rt.trail.cycles);
        out.report.institutions[i].final_test = rt.trail.final_test;
        out.report.institutions[i].final_characteristic = rt.trail.final_characteristic;
        out.report.institutions[i].final_digest = rt.trail.final_digest;
    }
    out.transcript = assemble_transcript(cfg, nodes);
    out.report.wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    return out;
}

RunOutput run_fedavg(const RunConfig& cfg, const std::vector<InstitutionDataset>& data) {
    cfg.check();
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<const InstitutionDataset*> sorted = sorted_datasets(data, 1);

    std::vector<std::vector<ImagePair>> patches;
    std::vector<double> sizes;
    for (const InstitutionDataset* d : sorted) {
        patches.push_back(patchify(d->train, cfg.train.patch, cfg.train.stride));
        sizes.push_back(static_cast<double>(patches.back().size()));
    }

    ParamVector global = init_params(cfg.arch, stream_seed(cfg.train.seed, kInitTag));
    const int32_t rounds = cfg.train.transmissions * cfg.train.site_rounds;

    RunOutput out;
    out.report = base_report(cfg, sorted);
    out.report.executed_cycles = rounds;

    std::vector<ParamVector> locals(sorted.size());
    for (int32_t round = 0; round < rounds; ++round) {
        for (size_t k = 0; k < sorted.size(); ++k) {
            DenoiserModel local;
            local.arch = cfg.arch;
            local.params = global;
            plain_epoch(local, patches[k], cfg.train.batch, effective_lr(cfg, round),
                        stream_seed(cfg.train.seed, kFedShuffle,
                                    static_cast<uint64_t>(sorted[k]->id),
                                    static_cast<uint64_t>(round)));
            locals[k] = std::move(local.params);
        }
        global = federated_average(locals, sizes);

        DenoiserModel model;
        model.arch = cfg.arch;
        model.params = global;
        for (size_t k = 0; k < sorted.size(); ++k) {
            CycleRecord rec;
            rec.cycle = round;
            rec.test = evaluate_model(model, sorted[k]->test, cfg.dynamic_range, cfg.psnr_cap);
            rec.characteristic =
                evaluate_model(model, sorted[k]->characteristic, cfg.dynamic_range, cfg.psnr_cap);
            rec.rho = std::nan("");
            out.report.institutions[k].cycles.push_back(rec);
        }
    }

    DenoiserModel model;
    model.arch = cfg.arch;
    model.params = global;
    const uint64_t digest = param_digest(global);
    for (size_t k = 0; k < sorted.size(); ++k) {
        out.report.institutions[k].final_test =
            evaluate_model(model, sorted[k]->test, cfg.dynamic_range, cfg.psnr_cap);
        out.report.institutions[k].final_characteristic =
            evaluate_model(model, sorted[k]->characteristic, cfg.dynamic_range, cfg.psnr_cap);
        out.report.institutions[k].final_digest = digest;
    }
    out.report.wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    return out;
}

RunOutput run_centralized(const RunConfig& cfg, const std::vector<InstitutionDataset>& data,
                          bool pooled) {
    cfg.check();
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<const InstitutionDataset*> sorted = sorted_datasets(data, 1);

    std::vector<ImagePair> pool;
    if (pooled) {
        for (const InstitutionDataset* d : sorted) {
            std::vector<ImagePair> p = patchify(d->train, cfg.train.patch, cfg.train.stride);
            for (ImagePair& pr : p) pool.push_back(std::move(pr));
        }
    } else {
        const InstitutionDataset* si = nullptr;
        for (const InstitutionDataset* d : sorted)
            if (d->id == cfg.si_institution) si = d;
        if (!si)
            throw ShapeError("cl-si: no institution with id " +
                             std::to_string(cfg.si_institution));
        pool = patchify(si->train, cfg.train.patch, cfg.train.stride);
    }

    DenoiserModel model;
    model.arch = cfg.arch;
    model.params = init_params(cfg.arch, stream_seed(cfg.train.seed, kInitTag));
    const int32_t epochs = cfg.train.transmissions * cfg.train.site_rounds;

    RunOutput out;
    out.report = base_report(cfg, sorted);
    out.report.executed_cycles = epochs;

    for (int32_t epoch = 0; epoch < epochs; ++epoch) {
        plain_epoch(model, pool, cfg.train.batch, effective_lr(cfg, epoch),
                    stream_seed(cfg.train.seed, kPoolShuffle, static_cast<uint64_t>(epoch)));
        if (!all_finite(model.params)) throw NumericError("centralized: non-finite weights");
        for (size_t k = 0; k < sorted.size(); ++k) {
            CycleRecord rec;
            rec.cycle = epoch;
            rec.test = evaluate_model(model, sorted[k]->test, cfg.dynamic_range, cfg.psnr_cap);
            rec.characteristic =
                evaluate_model(model, sorted[k]->characteristic, cfg.dynamic_range, cfg.psnr_cap);
            rec.rho = std::nan("");
            out.report.institutions[k].cycles.push_back(rec);
        }
    }

    const uint64_t digest = param_digest(model.params);
    for (size_t k = 0; k < sorted.size(); ++k) {
        out.report.institutions[k].final_test =
            evaluate_model(model, sorted[k]->test, cfg.dynamic_range, cfg.psnr_cap);
        out.report.institutions[k].final_characteristic =
            evaluate_model(model, sorted[k]->characteristic, cfg.dynamic_range, cfg.psnr_cap);
        out.report.institutions[k].final_digest = digest;
    }
    out.report.wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
    return out;
}

RunOutput run_method(const RunConfig& cfg, const std::vector<InstitutionDataset>& data,
                     TransportKind kind) {
    switch (cfg.method) {
        case Method::Icp2pFl:
            return run_icp2pfl(cfg, data, kind);
        case Method::SeqAblation: {
            RunConfig ablated = cfg;
            ablated.train.eps = 0.0;
            ablated.odm_switch = false;
            return run_icp2pfl(ablated, data, kind);
        }
        case Method::FedAvg:
            return run_fedavg(cfg, data);
        case Method::ClSi:
            return run_centralized(cfg, data, false);
        case Method::ClMi:
            return run_centralized(cfg, data, true);
    }
    throw ShapeError("run_method: bad method");
}

} // namespace icp2p
