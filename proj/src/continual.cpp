#include "continual.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace icp2p {

void TrainConfig::check() const {
    if (!(lr > 0.0)) throw ShapeError("train: learning rate must be positive");
    if (batch < 1) throw ShapeError("train: batch size must be >= 1");
    if (eps < 0.0) throw ShapeError("train: correction strength must be >= 0");
    if (transmissions < 1 || site_rounds < 1)
        throw ShapeError("train: transmissions and site-rounds must be >= 1");
    if (patch < 1 || stride < 1) throw ShapeError("train: patch and stride must be >= 1");
    if (!(threshold > 0.0) || !std::isfinite(threshold))
        throw ShapeError("train: threshold must be positive and finite");
}

namespace {

// Solve the s x s system M x = b by Gaussian elimination with partial
// pivoting; returns false if a pivot collapses (singular subset).
bool solve_small(int s, std::array<std::array<double, 3>, 3>& M, std::array<double, 3>& b,
                 std::array<double, 3>& x) {
    std::array<int, 3> perm{0, 1, 2};
    for (int col = 0; col < s; ++col) {
        int best = col;
        for (int r = col + 1; r < s; ++r)
            if (std::abs(M[static_cast<size_t>(perm[static_cast<size_t>(r)])][static_cast<size_t>(col)]) >
                std::abs(M[static_cast<size_t>(perm[static_cast<size_t>(best)])][static_cast<size_t>(col)]))
                best = r;
        std::swap(perm[static_cast<size_t>(col)], perm[static_cast<size_t>(best)]);
        const double pivot = M[static_cast<size_t>(perm[static_cast<size_t>(col)])][static_cast<size_t>(col)];
        if (std::abs(pivot) < 1e-300) return false;
        for (int r = col + 1; r < s; ++r) {
            auto& row = M[static_cast<size_t>(perm[static_cast<size_t>(r)])];
            const double f = row[static_cast<size_t>(col)] / pivot;
            if (f == 0.0) continue;
            for (int k = col; k < s; ++k)
                row[static_cast<size_t>(k)] -= f * M[static_cast<size_t>(perm[static_cast<size_t>(col)])][static_cast<size_t>(k)];
            b[static_cast<size_t>(perm[static_cast<size_t>(r)])] -= f * b[static_cast<size_t>(perm[static_cast<size_t>(col)])];
        }
    }
    for (int r = s - 1; r >= 0; --r) {
        double acc = b[static_cast<size_t>(perm[static_cast<size_t>(r)])];
        for (int k = r + 1; k < s; ++k)
            acc -= M[static_cast<size_t>(perm[static_cast<size_t>(r)])][static_cast<size_t>(k)] * x[static_cast<size_t>(k)];
        x[static_cast<size_t>(r)] = acc / M[static_cast<size_t>(perm[static_cast<size_t>(r)])][static_cast<size_t>(r)];
    }
    return true;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

} // namespace

std::vector<double> qp_project(const std::vector<double>& g, const GradientConstraintSet& G,
                               int* dropped_rows) {
    if (G.rows.empty()) throw ShapeError("qp_project: no constraint rows");
    if (!all_finite(g)) throw NumericError("qp_project: non-finite gradient");

    const size_t n = g.size();
    std::vector<const std::vector<double>*> rows;
    int dropped = 0;
    for (const auto& row : G.rows) {
        if (row.size() != n) throw ShapeError("qp_project: constraint row length mismatch");
        if (!all_finite(row)) throw NumericError("qp_project: non-finite constraint row");
        bool zero = true;
        for (double v : row)
            if (v != 0.0) {
                zero = false;
                break;
            }
        if (zero)
            ++dropped; // degenerate row carries no constraint
        else
            rows.push_back(&row);
    }
    if (dropped_rows) *dropped_rows = dropped;
    if (rows.empty()) return g; // everything dropped: unconstrained

    const int r = static_cast<int>(rows.size());

    // Precompute the Gram matrix and the constraint values at g.
    std::array<std::array<double, 3>, 3> gram{};
    std::array<double, 3> ag{};
    std::array<double, 3> row_norm{};
    for (int i = 0; i < r; ++i) {
        ag[static_cast<size_t>(i)] = dot(*rows[static_cast<size_t>(i)], g);
        row_norm[static_cast<size_t>(i)] = std::sqrt(dot(*rows[static_cast<size_t>(i)], *rows[static_cast<size_t>(i)]));
        for (int j = 0; j < r; ++j)
            gram[static_cast<size_t>(i)][static_cast<size_t>(j)] =
                dot(*rows[static_cast<size_t>(i)], *rows[static_cast<size_t>(j)]);
    }

    // Subset {} first: a feasible g goes back untouched, bit for bit.
    {
        bool ok = true;
        for (int i = 0; i < r; ++i)
            if (ag[static_cast<size_t>(i)] < 0.0) {
                ok = false;
                break;
            }
        if (ok) return g;
    }

    // The projection is z = g + A_S^T lambda_S for the active set S, with
    // (A_S A_S^T) lambda_S = -A_S g, lambda_S >= 0, and A z >= 0. Enumerate
    // subsets smallest-first; accept the first one passing both checks with
    // a scale-aware tolerance, keeping the best near-miss as a fallback for
    // marginally degenerate numerics.
    double best_score = -1e300;
    std::array<double, 3> best_lambda{};
    std::vector<int> best_subset;

    std::vector<std::vector<int>> subsets;
    for (int mask = 1; mask < (1 << r); ++mask) {
        std::vector<int> s;
        for (int i = 0; i < r; ++i)
            if (mask & (1 << i)) s.push_back(i);
        subsets.push_back(std::move(s));
    }
    std::stable_sort(subsets.begin(), subsets.end(),
                     [](const auto& a, const auto& b) { return a.size() < b.size(); });

    auto evaluate = [&](const std::vector<int>& subset, std::array<double, 3>& lambda) {
        const int s = static_cast<int>(subset.size());
        std::array<std::array<double, 3>, 3> M{};
        std::array<double, 3> b{};
        for (int i = 0; i < s; ++i) {
            b[static_cast<size_t>(i)] = -ag[static_cast<size_t>(subset[static_cast<size_t>(i)])];
            for (int j = 0; j < s; ++j)
                M[static_cast<size_t>(i)][static_cast<size_t>(j)] =
                    gram[static_cast<size_t>(subset[static_cast<size_t>(i)])]
                        [static_cast<size_t>(subset[static_cast<size_t>(j)])];
        }
        std::array<double, 3> x{};
        if (!solve_small(s, M, b, x)) return false; // singular: skip
        lambda = x;
        return true;
    };

    auto min_normalized_slack = [&](const std::vector<int>& subset, const std::array<double, 3>& lambda) {
        // slack_i = a_i . z = a_i . g + sum_j gram[i][subset_j] * lambda_j
        double worst = 1e300;
        for (int i = 0; i < r; ++i) {
            double slack = ag[static_cast<size_t>(i)];
            for (size_t j = 0; j < subset.size(); ++j)
                slack += gram[static_cast<size_t>(i)][static_cast<size_t>(subset[j])] * lambda[j];
            const double scale = std::max(1.0, row_norm[static_cast<size_t>(i)]);
            worst = std::min(worst, slack / scale);
        }
        // Fold dual feasibility into the same score: negative lambda is a
        // violation on the same footing.
        for (size_t j = 0; j < subset.size(); ++j) worst = std::min(worst, lambda[j]);
        return worst;
    };

    const double tol = -1e-9;
    for (const auto& subset : subsets) {
        std::array<double, 3> lambda{};
        if (!evaluate(subset, lambda)) continue;
        const double score = min_normalized_slack(subset, lambda);
        if (score > best_score) {
            best_score = score;
            best_lambda = lambda;
            best_subset = subset;
        }
        if (score >= tol) break; // first (smallest) subset passing the KKT checks
    }
    if (best_subset.empty()) throw NumericError("qp_project: all dual subsets singular");

    std::vector<double> z = g;
    for (size_t j = 0; j < best_subset.size(); ++j) {
        const double lam = best_lambda[j];
        const auto& row = *rows[static_cast<size_t>(best_subset[j])];
        for (size_t i = 0; i < n; ++i) z[i] += lam * row[i];
    }
    if (!all_finite(z)) throw NumericError("qp_project: non-finite projection");
    return z;
}

std::pair<std::vector<double>, double> corrected_gradient(const std::vector<double>& g,
                                                          const GradientConstraintSet& G,
                                                          double eps) {
    if (eps < 0.0) throw ShapeError("corrected_gradient: eps must be >= 0");
    const std::vector<double> proj = qp_project(g, G);
    double l1 = 0.0;
    std::vector<double> ghat(g.size());
    for (size_t i = 0; i < g.size(); ++i) {
        const double d = proj[i] - g[i];
        l1 += std::abs(d);
        ghat[i] = g[i] + eps * d;
    }
    return {std::move(ghat), l1};
}

void update_params(ParamVector& w, const std::vector<double>& ghat, double lr) {
    if (!(lr > 0.0)) throw ShapeError("update_params: learning rate must be positive");
    if (w.size() != ghat.size()) throw ShapeError("update_params: length mismatch");
    for (size_t i = 0; i < w.size(); ++i) {
        const double next = static_cast<double>(w[i]) - lr * ghat[i];
        if (!std::isfinite(next)) throw NumericError("update_params: non-finite parameter");
        w[i] = static_cast<float>(next);
    }
}

std::vector<double> reference_gradient(const DenoiserModel& model,
                                       const std::vector<ImagePair>& pairs) {
    if (pairs.empty()) throw ShapeError("reference_gradient: empty pair list");
    std::vector<std::pair<const Tensor*, const Tensor*>> xy;
    xy.reserve(pairs.size());
    for (const auto& p : pairs) xy.emplace_back(&p.noisy, &p.clean);
    std::vector<double> grad;
    mean_gradient(model, xy, grad);
    return grad;
}

} // namespace icp2p
