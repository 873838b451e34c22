#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "continual.hpp"
#include "controller.hpp"
#include "nn.hpp"
#include "synth.hpp"
#include "transport.hpp"

namespace icp2p {

enum class Method { Icp2pFl, FedAvg, ClSi, ClMi, SeqAblation };

const char* method_name(Method m);
Method method_from_name(const std::string& name); // throws ShapeError on unknown

enum class TransportKind { InProc, Socket };

const char* transport_name(TransportKind k);

/// Everything one run needs besides the datasets.
struct RunConfig {
    Method method = Method::Icp2pFl;
    TrainConfig train;
    ModelArch arch;
    double dynamic_range = 1.0;
    double psnr_cap = 60.0; // reported/scored PSNR ceiling (exact-match sentinel)
    bool odm_switch = true; // ring reordering enabled
    bool fine_tune_incoming = true; // start each turn from the received weights
    bool use_pam = false;           // score with the pretrained MLP; else closed form
    int32_t lr_decay_round = 0;     // global round at which lr steps down; 0 = off
    double lr_decay_factor = 0.2;
    int32_t si_institution = 1; // single-institution centralized: who trains

    void check() const;
};

/// One institution's per-cycle measurement. For ring runs the test /
/// characteristic numbers are taken right after the institution's own
/// site-rounds; for round-based baselines after the shared-model update.
struct CycleRecord {
    int32_t cycle = 0;
    MetricVector test;
    MetricVector characteristic;
    double rho = 0.0; // meaningful for ring methods only (NaN elsewhere)
};

struct InstitutionTrail {
    int32_t id = 0;
    std::vector<CycleRecord> cycles;
    MetricVector noisy_test;  // metric of the raw noisy inputs (no model)
    MetricVector final_test;  // final weights on this institution's test split
    MetricVector final_characteristic;
    uint64_t final_digest = 0;
};

struct DirectiveRecord {
    int32_t cycle = 0;
    ControlDirective directive;
};

struct RunReport {
    Method method = Method::Icp2pFl;
    uint64_t seed = 0;
    TransportKind transport = TransportKind::InProc;
    int32_t executed_cycles = 0;
    std::vector<InstitutionTrail> institutions; // ascending id
    std::map<int32_t, double> final_rho;        // ring methods
    std::vector<DirectiveRecord> directives;    // ring methods: decision per cycle
    uint64_t model_packets = 0;
    uint64_t score_reports = 0;
    double wall_ms = 0.0; // excluded from canonical serialization
};

struct RunOutput {
    RunReport report;
    /// Canonical per-node message log (ring methods; empty otherwise). Equal
    /// configs and seeds yield byte-equal transcripts on both transports.
    std::string transcript;
};

/// Token-ring federated run with QP-corrected updates and the cycle-end
/// controller decision. Seeds, batch order, and arithmetic are pinned, so
/// the output is bit-reproducible.
RunOutput run_icp2pfl(const RunConfig& cfg, const std::vector<InstitutionDataset>& data,
                      TransportKind kind);

/// Synchronous federated averaging over train-size-weighted local epochs;
/// runs T*S rounds for step-budget parity with the ring method.
RunOutput run_fedavg(const RunConfig& cfg, const std::vector<InstitutionDataset>& data);

/// Centralized training for T*S epochs: pooled union of all institutions
/// (pooled=true) or a single institution's data (pooled=false, cfg.si_institution).
RunOutput run_centralized(const RunConfig& cfg, const std::vector<InstitutionDataset>& data,
                          bool pooled);

/// Dispatch on cfg.method. SeqAblation runs the ring with correction strength
/// zero and reordering off (plain sequential fine-tuning around the ring).
RunOutput run_method(const RunConfig& cfg, const std::vector<InstitutionDataset>& data,
                     TransportKind kind);

/// Size-weighted parameter average: (sum_k sizes[k] * locals[k]) / sum sizes,
/// accumulated in double, rounded once to float.
ParamVector federated_average(const std::vector<ParamVector>& locals,
                              const std::vector<double>& sizes);

/// Batches per epoch: floor(n / batch), at least 1 (n < batch trains one
/// whole-set batch). The shuffled tail shorter than a batch is skipped.
size_t batches_per_epoch(size_t n, int batch);

/// Model-free evaluation of a split: mean MSE / mean SSIM over the pairs,
/// PSNR derived from the mean MSE and capped.
MetricVector evaluate_noisy(const std::vector<ImagePair>& pairs, double dynamic_range, double cap);

/// Forward the model over each noisy image and score against the clean one.
MetricVector evaluate_model(const DenoiserModel& model, const std::vector<ImagePair>& pairs,
                            double dynamic_range, double cap);

} // namespace icp2p
