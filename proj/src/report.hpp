#pragma once

#include <string>
#include <vector>

#include "orchestrator.hpp"

namespace icp2p {

/// Canonical JSON for one run. Deterministic byte-for-byte for equal runs:
/// ordered keys, shortest round-trip number formatting, NaN scores emitted
/// as null, and no wall-clock or host-dependent fields.
std::string report_to_json(const RunReport& r);

/// Per-run CSV, one row per (cycle, institution, split) with
/// split in {test, characteristic}:
///   method,seed,cycle,institution,split,psnr,ssim,mse,rho
/// rho is empty for rows where no score exists (baseline methods).
std::string report_to_csv(const RunReport& r);

/// Joint CSV across runs for side-by-side comparison, one row per
/// (method, seed, cycle, institution) carrying test-split metrics:
///   method,seed,cycle,institution,psnr,ssim,mse,rho
std::string compare_to_csv(const std::vector<RunReport>& rs);

/// Fixed-width text table of final test PSNR/SSIM as mean +/- std (sample
/// std over seeds) per institution per method, plus the noisy-input
/// baseline row per institution.
std::string summary_table(const std::vector<RunReport>& rs);

/// Write a whole file, creating parent directories; throws ConfigError on
/// any I/O failure.
void write_text_file(const std::string& path, const std::string& content);

} // namespace icp2p
