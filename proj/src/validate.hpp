#pragma once

#include <string>
#include <vector>

namespace icp2p {

/// One invariant check: name, verdict, detail on failure (or a one-line
/// measurement on success).
struct ValidationResult {
    std::string name;
    bool ok = false;
    std::string detail;
};

/// Fast end-to-end self-check of the build: wire framing and checksums,
/// projection solver, metric identities, deterministic init and data
/// synthesis, identity behavior of a fresh model, gradient consistency
/// against finite differences, controller decision properties, and a tiny
/// two-node ring run with transcript reproducibility. Runs in seconds.
std::vector<ValidationResult> run_validation();

bool all_ok(const std::vector<ValidationResult>& results);

/// "ok <name>" / "FAIL <name>: <detail>" lines plus a final summary line.
std::string format_validation(const std::vector<ValidationResult>& results);

} // namespace icp2p
