#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "orchestrator.hpp"
#include "synth.hpp"

namespace icp2p {

/// Full description of an experiment: which method to run, over which seeds,
/// on what synthetic data, with what training/evaluation knobs.
///
/// The on-disk form is a flat plain-text file of dotted keys:
///
///   # comment
///   method = icp2pfl            # icp2pfl | fedavg | cl-si | cl-mi | seq-ablation
///   institutions = 3            # ids 1..K, default acquisition table
///   seeds = 11, 22, 33
///   transport = inproc          # inproc | socket
///   output.dir = out
///   train.lr = 1e-4
///   train.batch = 64
///   train.eps = 1.0
///   train.transmissions = 10
///   train.site_rounds = 5
///   train.threshold = 1.4759
///   train.patch = 64
///   train.stride = 64
///   train.decay_round = 0       # 0 disables the step decay
///   train.decay_factor = 0.2
///   train.fine_tune_incoming = true
///   model.blocks = 3
///   model.channels = 16
///   model.residual = true
///   odm.switch = true
///   odm.use_pam = false
///   eval.range = 1.0
///   eval.psnr_cap = 60
///   si.institution = 1
///   data.train_count = 200
///   data.test_count = 50
///   data.characteristic_count = 50
///   data.image_size = 64
///   institution.2.gain = 0.004  # per-field overrides of the default table
///   institution.2.sigma = 0.025
///   institution.2.window_lo = 0.08
///   institution.2.window_hi = 0.92
///   institution.2.family = 2
///
/// Unknown keys, duplicate keys, malformed values, and out-of-range values
/// are rejected with the offending line number and key name.
struct ExperimentConfig {
    RunConfig run;
    TransportKind transport = TransportKind::InProc;
    std::vector<uint64_t> seeds{1};
    std::string output_dir = "out";
    DatasetSpec data;
    std::vector<ProtocolParams> protocols = default_protocols(3);

    /// Throws ConfigError/ShapeError on any cross-field inconsistency
    /// (empty seed list, patch larger than the image, duplicate acquisition
    /// parameters, ring methods with fewer than two institutions, ...).
    void check() const;

    /// The default acquisition table for ids 1..count: gain 0.002*id,
    /// sigma 0.010 + 0.015*(id-1), window [0.08, 0.92], family id.
    /// Pairwise distinct by construction.
    static std::vector<ProtocolParams> default_protocols(int count);
};

/// Parse the text form. Every setting is optional; defaults are the struct
/// initializers above. Throws ConfigError with a line number on bad input.
ExperimentConfig parse_config_text(const std::string& text);

/// Read and parse a file; throws ConfigError (line 0) if unreadable.
ExperimentConfig parse_config_file(const std::string& path);

/// Apply one "key = value" pair on top of an existing config (the CLI uses
/// this to let flags override file values). Throws ConfigError (line 0) on
/// unknown key or bad value. Setting `institutions` re-derives the default
/// table, discarding earlier per-institution overrides.
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Canonical full listing of every setting, one key per line, suitable for
/// parse_config_text (round-trips exactly) and for run metadata.
std::string config_to_text(const ExperimentConfig& cfg);

} // namespace icp2p
