#pragma once

#include <cstdint>
#include <map>

#include "continual.hpp"
#include "metrics.hpp"

namespace icp2p {

/// Four-layer MLP scoring a normalized [psnr, ssim, mse] triple with a
/// single scalar; widths 3 -> 16 -> 16 -> 8 -> 1, tanh hidden layers,
/// linear output. All arithmetic is double precision.
struct PamMlp {
    // Flat row-major weight matrices (out x in) and bias vectors per layer.
    std::vector<double> w1, b1; // 16 x 3
    std::vector<double> w2, b2; // 16 x 16
    std::vector<double> w3, b3; // 8 x 16
    std::vector<double> w4, b4; // 1 x 8

    void check() const;
};

/// Deterministic seeded initialization (uniform, fan-in scaled, zero biases).
PamMlp pam_init(uint64_t seed);

/// Inputs are normalized before the MLP: psnr capped at 60 dB then /60,
/// ssim taken as-is, mse scaled by 1/0.01 and clamped to [0, 1].
std::array<double, 3> pam_normalize(const MetricVector& mv);

/// Closed-form default scorer: 0.5 * (min(psnr, 60) / 30) + 0.5 * ssim.
/// Serves as the calibration target for pretraining and as the scoring
/// path when no fitted PAM is supplied.
double fallback_score(const MetricVector& mv);

double pam_score(const PamMlp& pam, const MetricVector& mv);

/// Full-batch gradient-descent fit against the calibration targets, run to
/// mean squared error <= 1e-3 or 5000 steps. Deterministic in the seed.
/// Requires at least 32 calibration points.
PamMlp pam_pretrain(const std::vector<std::pair<MetricVector, double>>& calibration,
                    uint64_t seed);

/// PAM weights flattened to the float vector shipped on the wire
/// (layer order w1, b1, ..., w4, b4).
ParamVector pam_to_params(const PamMlp& pam);
PamMlp pam_from_params(const ParamVector& params);

/// The controller's standing instruction: institution order for the next
/// cycle, per-institution site-round counts (parallel to `sequence`),
/// remaining transmission budget, and the convergence handshake state.
struct ControlDirective {
    std::vector<int32_t> sequence;
    std::vector<int32_t> site_rounds;
    int32_t trans_rounds = 10;
    bool converged = false;
    int32_t streak = 0;    // consecutive cycles with every score at/above threshold
    int32_t origin_id = -1; // deciding node of a converged broadcast

    void check() const;
    int32_t rounds_for(int32_t id) const;
    int32_t successor_of(int32_t id) const;
};

/// Build the initial directive: ascending ids, S site-rounds everywhere.
ControlDirective initial_directive(const std::vector<int32_t>& ids, const TrainConfig& cfg);

/// Cycle-end decision rule. If any score sits at/above the threshold the
/// sequence is reordered ascending by score (worst first, ties by id) and
/// the minimum-score institution is granted min(S+2, 2S) site-rounds; two
/// consecutive cycles with every score at/above the threshold set the
/// converged flag. With every score below the threshold the directive is
/// unchanged except that the streak resets.
ControlDirective odm_decide(const std::map<int32_t, double>& scores, const TrainConfig& cfg,
                            const ControlDirective& current);

} // namespace icp2p
