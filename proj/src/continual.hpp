#pragma once

#include <utility>

#include "nn.hpp"
#include "synth.hpp"

namespace icp2p {

/// Up to three constraint rows for the gradient correction: the previous
/// institution's reference gradient, the current institution's running
/// reference gradient, and the parameter drift since the last handoff.
/// Correction happens in full parameter-gradient space, and in 64-bit
/// arithmetic end to end (the mean gradient is already accumulated there).
struct GradientConstraintSet {
    std::vector<std::vector<double>> rows;

    void add_row(std::vector<double> row) { rows.push_back(std::move(row)); }
    void add_row(const ParamVector& row) { rows.emplace_back(row.begin(), row.end()); }
};

/// Nearest point to g (Euclidean) with a non-negative inner product against
/// every retained row. Solved exactly in the dual by enumerating all active
/// subsets (<= 3 rows, so <= 8 candidates). All-zero rows are dropped and
/// counted into *dropped_rows when given; a singular dual subset is skipped.
/// If g already satisfies every constraint it is returned bit-unchanged.
std::vector<double> qp_project(const std::vector<double>& g, const GradientConstraintSet& G,
                               int* dropped_rows = nullptr);

/// ghat = g + eps * (proj(g) - g), plus the L1 distance between g and its
/// projection as a drift diagnostic. eps = 1 is pure projection, eps = 0
/// reproduces g.
std::pair<std::vector<double>, double> corrected_gradient(const std::vector<double>& g,
                                                          const GradientConstraintSet& G,
                                                          double eps);

/// w <- w - lr * ghat, computed in double then rounded once to float.
void update_params(ParamVector& w, const std::vector<double>& ghat, double lr);

/// Mean data-term gradient of the model over the given pairs (noisy input,
/// clean target), in parameter space.
std::vector<double> reference_gradient(const DenoiserModel& model,
                                       const std::vector<ImagePair>& pairs);

/// Per-institution training loop knobs (shared by every method runner).
struct TrainConfig {
    double lr = 1e-4;          // update step size
    int batch = 64;
    double eps = 1.0;          // correction strength; 0 disables correction
    int transmissions = 10;    // outer rounds around the ring
    int site_rounds = 5;       // local rounds per institution per cycle
    double threshold = 1.4759; // controller determination threshold
    int64_t patch = 64;
    int64_t stride = 64;
    uint64_t seed = 1;

    void check() const;
};

} // namespace icp2p
