#include <doctest.h>

#include <cmath>
#include <vector>

#include "continual.hpp"

using namespace icp2p;

namespace {

// ---- Independent projection oracle -------------------------------------
// Dykstra's alternating projection onto the intersection of halfspaces
// {z : <a_j, z> >= 0}. Converges to the Euclidean projection; shares no
// machinery with the active-set solver.
std::vector<double> dykstra_project(const std::vector<double>& g,
                                    const std::vector<std::vector<double>>& rows,
                                    int max_cycles = 200000) {
    const size_t n = g.size();
    std::vector<double> z = g;
    std::vector<std::vector<double>> corr(rows.size(), std::vector<double>(n, 0.0));
    std::vector<double> norms(rows.size());
    for (size_t j = 0; j < rows.size(); ++j) {
        double s = 0.0;
        for (double v : rows[j]) s += v * v;
        norms[j] = s;
    }
    for (int it = 0; it < max_cycles; ++it) {
        double moved = 0.0;
        for (size_t j = 0; j < rows.size(); ++j) {
            std::vector<double> w(n);
            for (size_t i = 0; i < n; ++i) w[i] = z[i] + corr[j][i];
            double d = 0.0;
            for (size_t i = 0; i < n; ++i) d += rows[j][i] * w[i];
            std::vector<double> y = w;
            if (d < 0.0) {
                const double f = d / norms[j];
                for (size_t i = 0; i < n; ++i) y[i] -= f * rows[j][i];
            }
            for (size_t i = 0; i < n; ++i) {
                corr[j][i] = w[i] - y[i];
                moved += std::abs(y[i] - z[i]);
            }
            z = std::move(y);
        }
        if (moved < 1e-14) break;
    }
    return z;
}

std::vector<double> random_vec(Rng& rng, size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = scale * rng.uniform(-1.0, 1.0);
    return v;
}

double l2_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

} // namespace

TEST_CASE("projection leaves feasible gradients untouched, bit for bit") {
    GradientConstraintSet G;
    G.add_row(std::vector<double>{0.0, 1.0});
    const std::vector<double> g{1.0, 0.0};
    const std::vector<double> out = qp_project(g, G);
    CHECK(out == g);

    // Boundary case: slack exactly zero is feasible.
    GradientConstraintSet G2;
    G2.add_row(std::vector<double>{-1.0, 1.0});
    const std::vector<double> g2{0.5, 0.5};
    CHECK(qp_project(g2, G2) == g2);
}

TEST_CASE("single-constraint projection closed form") {
    GradientConstraintSet G;
    G.add_row(std::vector<double>{-1.0, 1.0});
    const std::vector<double> g{1.0, 0.0};
    const std::vector<double> out = qp_project(g, G);
    REQUIRE(out.size() == 2);
    CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(out[1] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(-out[0] + out[1] == 0.0); // active constraint sits on its boundary
}

TEST_CASE("active-set solution matches the Dykstra oracle") {
    Rng rng(2024);
    int projected = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const size_t n = 2 + rng.below(49); // dim in [2, 50]
        const int r = 1 + static_cast<int>(rng.below(3));
        const std::vector<double> g = random_vec(rng, n);
        GradientConstraintSet G;
        std::vector<std::vector<double>> rows;
        for (int j = 0; j < r; ++j) {
            rows.push_back(random_vec(rng, n));
            G.add_row(rows.back());
        }

        const std::vector<double> mine = qp_project(g, G);
        const std::vector<double> oracle = dykstra_project(g, rows);

        for (size_t i = 0; i < n; ++i) CHECK(std::abs(mine[i] - oracle[i]) < 1e-8);

        bool feasible_input = true;
        for (const auto& row : rows) {
            double s = 0.0, slack = 0.0;
            for (size_t i = 0; i < n; ++i) {
                s += row[i] * g[i];
                slack += row[i] * mine[i];
            }
            if (s < 0.0) feasible_input = false;
            CHECK(slack >= -1e-8);
        }
        if (feasible_input)
            CHECK(mine == g); // untouched
        else
            ++projected;
    }
    CHECK(projected > 50); // the sweep must actually exercise the solver
}

TEST_CASE("projection is idempotent") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        const size_t n = 2 + rng.below(20);
        const std::vector<double> g = random_vec(rng, n);
        GradientConstraintSet G;
        for (int j = 0; j < 3; ++j) G.add_row(random_vec(rng, n));
        const std::vector<double> once = qp_project(g, G);
        const std::vector<double> twice = qp_project(once, G);
        for (size_t i = 0; i < n; ++i) CHECK(std::abs(once[i] - twice[i]) < 1e-10);
    }
}

TEST_CASE("projection is closer to g than any feasible point") {
    Rng rng(31337);
    for (int trial = 0; trial < 20; ++trial) {
        const size_t n = 4 + rng.below(8);
        const std::vector<double> g = random_vec(rng, n);
        GradientConstraintSet G;
        std::vector<std::vector<double>> rows;
        for (int j = 0; j < 2; ++j) {
            rows.push_back(random_vec(rng, n));
            G.add_row(rows.back());
        }
        const std::vector<double> proj = qp_project(g, G);
        // Rejection-sample feasible competitors.
        int found = 0;
        while (found < 5) {
            const std::vector<double> h = random_vec(rng, n, 2.0);
            bool ok = true;
            for (const auto& row : rows) {
                double s = 0.0;
                for (size_t i = 0; i < n; ++i) s += row[i] * h[i];
                if (s < 0.0) {
                    ok = false;
                    break;
                }
            }
            if (!ok) continue;
            ++found;
            CHECK(l2_dist(proj, g) <= l2_dist(h, g) + 1e-12);
        }
    }
}

TEST_CASE("all-zero constraint rows are dropped") {
    const std::vector<double> g{1.0, 0.0};
    GradientConstraintSet with_zero;
    with_zero.add_row(std::vector<double>{0.0, 0.0});
    with_zero.add_row(std::vector<double>{-1.0, 1.0});
    GradientConstraintSet without;
    without.add_row(std::vector<double>{-1.0, 1.0});

    int dropped = -1;
    const std::vector<double> a = qp_project(g, with_zero, &dropped);
    CHECK(dropped == 1);
    CHECK(a == qp_project(g, without));

    // Every row degenerate: nothing constrains, g comes back unchanged.
    GradientConstraintSet all_zero;
    all_zero.add_row(std::vector<double>{0.0, 0.0});
    dropped = -1;
    CHECK(qp_project(g, all_zero, &dropped) == g);
    CHECK(dropped == 1);
}

TEST_CASE("projection input validation") {
    const std::vector<double> g{1.0, 0.0};
    GradientConstraintSet empty;
    CHECK_THROWS_AS(qp_project(g, empty), ShapeError);

    GradientConstraintSet wrong_len;
    wrong_len.add_row(std::vector<double>{1.0, 2.0, 3.0});
    CHECK_THROWS_AS(qp_project(g, wrong_len), ShapeError);

    GradientConstraintSet with_nan;
    with_nan.add_row(std::vector<double>{std::nan(""), 1.0});
    CHECK_THROWS_AS(qp_project(g, with_nan), NumericError);

    GradientConstraintSet fine;
    fine.add_row(std::vector<double>{0.0, 1.0});
    const std::vector<double> bad_g{std::nan(""), 0.0};
    CHECK_THROWS_AS(qp_project(bad_g, fine), NumericError);
}

TEST_CASE("corrected gradient blending") {
    GradientConstraintSet G;
    G.add_row(std::vector<double>{-1.0, 1.0});
    const std::vector<double> g{1.0, 0.0};

    auto [half, gap_half] = corrected_gradient(g, G, 0.5);
    CHECK(half[0] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(half[1] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(gap_half == doctest::Approx(1.0).epsilon(1e-15));

    auto [full, gap_full] = corrected_gradient(g, G, 1.0);
    const std::vector<double> proj = qp_project(g, G);
    CHECK(full == proj);
    CHECK(gap_full == gap_half); // the gap reports the projection, not the blend

    auto [off, gap_off] = corrected_gradient(g, G, 0.0);
    CHECK(off == g);
    CHECK(gap_off == gap_half);

    CHECK_THROWS_AS(corrected_gradient(g, G, -0.5), ShapeError);
}

TEST_CASE("parameter update arithmetic") {
    ParamVector w{1.0f, 1.0f};
    update_params(w, {2.0, -2.0}, 0.1);
    CHECK(w[0] == doctest::Approx(0.8).epsilon(1e-7));
    CHECK(w[1] == doctest::Approx(1.2).epsilon(1e-7));

    ParamVector w2{0.5f, -0.25f};
    const ParamVector before = w2;
    update_params(w2, {0.0, 0.0}, 0.1);
    CHECK(w2 == before);

    CHECK_THROWS_AS(update_params(w2, {1.0}, 0.1), ShapeError);
    CHECK_THROWS_AS(update_params(w2, {1.0, 1.0}, 0.0), ShapeError);
    ParamVector w3{1.0f};
    CHECK_THROWS_AS(update_params(w3, {1e308}, 1e10), NumericError);
}

TEST_CASE("repeated updates descend a convex quadratic") {
    // One-parameter toy: loss(w) = (w - 3)^2, gradient 2(w - 3).
    ParamVector w{0.0f};
    double prev = 9.0;
    for (int step = 0; step < 50; ++step) {
        const double grad = 2.0 * (static_cast<double>(w[0]) - 3.0);
        update_params(w, {grad}, 0.05);
        const double loss = (static_cast<double>(w[0]) - 3.0) * (static_cast<double>(w[0]) - 3.0);
        CHECK(loss <= prev + 1e-12);
        prev = loss;
    }
    CHECK(prev < 1e-3);
}

TEST_CASE("reference gradient equals the mean of per-pair gradients") {
    ModelArch arch;
    arch.blocks = 1;
    arch.channels = 2;
    DenoiserModel model{arch, init_params(arch, 3)};

    auto make_pair = [&](uint64_t seed) {
        Rng rng(seed);
        ImagePair p;
        p.clean = Tensor(12, 12);
        for (float& v : p.clean.data) v = static_cast<float>(rng.uniform(0.0, 1.0));
        p.noisy = p.clean;
        for (float& v : p.noisy.data) v += static_cast<float>(0.05 * rng.gauss());
        return p;
    };

    const ImagePair p1 = make_pair(10), p2 = make_pair(11);

    // Single pair: identical to backward() on it.
    std::vector<float> g32(static_cast<size_t>(arch.param_count()));
    backward(model, p1.noisy, p1.clean, g32);
    const std::vector<double> ref1 = reference_gradient(model, {p1});
    REQUIRE(ref1.size() == g32.size());
    for (size_t i = 0; i < g32.size(); ++i) CHECK(ref1[i] == static_cast<double>(g32[i]));

    // Two pairs: arithmetic mean.
    std::vector<float> h32(g32.size());
    backward(model, p2.noisy, p2.clean, h32);
    const std::vector<double> ref2 = reference_gradient(model, {p1, p2});
    for (size_t i = 0; i < g32.size(); ++i) {
        const double want = 0.5 * (static_cast<double>(g32[i]) + static_cast<double>(h32[i]));
        CHECK(ref2[i] == doctest::Approx(want).epsilon(1e-6));
    }

    // Targets equal to outputs: the quadratic sits at its minimum.
    ImagePair fixed;
    fixed.noisy = p1.noisy;
    fixed.clean = forward(model, p1.noisy);
    const std::vector<double> zero = reference_gradient(model, {fixed});
    for (double v : zero) CHECK(v == 0.0);

    CHECK_THROWS_AS(reference_gradient(model, {}), ShapeError);
}

TEST_CASE("train config validation") {
    TrainConfig ok;
    CHECK_NOTHROW(ok.check());
    TrainConfig bad = ok;
    bad.lr = 0.0;
    CHECK_THROWS_AS(bad.check(), ShapeError);
    bad = ok;
    bad.eps = -1.0;
    CHECK_THROWS_AS(bad.check(), ShapeError);
    bad = ok;
    bad.transmissions = 0;
    CHECK_THROWS_AS(bad.check(), ShapeError);
    bad = ok;
    bad.site_rounds = 0;
    CHECK_THROWS_AS(bad.check(), ShapeError);
    bad = ok;
    bad.batch = 0;
    CHECK_THROWS_AS(bad.check(), ShapeError);
}
