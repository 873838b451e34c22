#include <doctest.h>

#include <cmath>
#include <set>

#include "controller.hpp"

using namespace icp2p;

namespace {

MetricVector mv(double p, double s, double m) {
    MetricVector v;
    v.p = p;
    v.s = s;
    v.m = m;
    return v;
}

TrainConfig cfg_with(double threshold, int site_rounds) {
    TrainConfig c;
    c.threshold = threshold;
    c.site_rounds = site_rounds;
    return c;
}

} // namespace

TEST_CASE("fallback scorer closed form") {
    const double rho = fallback_score(mv(40.0, 0.98, 0.0001));
    CHECK(rho == doctest::Approx(0.5 * (40.0 / 30.0) + 0.5 * 0.98).epsilon(1e-15));
    CHECK(std::abs(rho - 1.15667) < 1e-5);

    // PSNR clamp at the 60 dB cap.
    CHECK(fallback_score(mv(100.0, 0.5, 0.0)) == fallback_score(mv(60.0, 0.5, 0.0)));
    CHECK(fallback_score(mv(59.0, 0.5, 0.0)) < fallback_score(mv(60.0, 0.5, 0.0)));
}

TEST_CASE("fallback scorer is monotone in psnr and ssim") {
    double prev = -1e9;
    for (int p = 0; p <= 70; p += 5) {
        const double rho = fallback_score(mv(p, 0.5, 0.001));
        CHECK(rho >= prev);
        prev = rho;
    }
    prev = -1e9;
    for (int i = 0; i <= 10; ++i) {
        const double rho = fallback_score(mv(35.0, i / 10.0, 0.001));
        CHECK(rho >= prev);
        prev = rho;
    }
    // mse enters only through psnr; scores are constant in m directly
    CHECK(fallback_score(mv(35.0, 0.5, 0.0)) == fallback_score(mv(35.0, 0.5, 0.01)));
}

TEST_CASE("metric normalization for the mlp") {
    const auto x = pam_normalize(mv(30.0, 0.7, 0.005));
    CHECK(x[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(x[1] == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(x[2] == doctest::Approx(0.5).epsilon(1e-15));

    const auto capped = pam_normalize(mv(90.0, 1.0, 1.0));
    CHECK(capped[0] == 1.0);
    CHECK(capped[2] == 1.0); // mse clamped
    CHECK(pam_normalize(mv(30.0, 0.7, -0.1))[2] == 0.0);
}

TEST_CASE("pam forward pass is deterministic with a frozen regression value") {
    const PamMlp pam = pam_init(42);
    const double rho = pam_score(pam, mv(40.0, 0.98, 0.0001));
    CHECK(rho == pam_score(pam_init(42), mv(40.0, 0.98, 0.0001)));
    // Pinned at implementation time; guards weight layout, normalization,
    // and the activation chain against silent drift.
    CHECK(rho == doctest::Approx(-0.017817301713654699).epsilon(1e-12));

    CHECK(pam_init(42).w1 == pam.w1);
    CHECK(pam_init(43).w1 != pam.w1);
}

TEST_CASE("pam rejects non-finite inputs and malformed weights") {
    const PamMlp pam = pam_init(1);
    CHECK_THROWS_AS(pam_score(pam, mv(std::nan(""), 0.5, 0.0)), NumericError);
    CHECK_THROWS_AS(pam_score(pam, mv(40.0, std::numeric_limits<double>::infinity(), 0.0)),
                    NumericError);

    PamMlp bad = pam;
    bad.w2.pop_back();
    CHECK_THROWS_AS(pam_score(bad, mv(40.0, 0.5, 0.0)), ShapeError);
    PamMlp nan_pam = pam;
    nan_pam.w3[0] = std::nan("");
    CHECK_THROWS_AS(pam_score(nan_pam, mv(40.0, 0.5, 0.0)), NumericError);
}

TEST_CASE("pretraining fits the fallback scorer") {
    Rng rng(555);
    std::vector<std::pair<MetricVector, double>> calib;
    for (int i = 0; i < 64; ++i) {
        const MetricVector v = mv(rng.uniform(10.0, 60.0), rng.uniform(0.3, 1.0),
                                  rng.uniform(0.0, 0.01));
        calib.emplace_back(v, fallback_score(v));
    }
    const PamMlp pam = pam_pretrain(calib, 7);

    // Training points: the fit contract itself.
    double mse_acc = 0.0;
    for (const auto& [v, target] : calib) {
        const double d = pam_score(pam, v) - target;
        mse_acc += d * d;
    }
    CHECK(mse_acc / static_cast<double>(calib.size()) <= 1e-3);

    // Held-out points from the same ranges.
    for (int i = 0; i < 20; ++i) {
        const MetricVector v = mv(rng.uniform(10.0, 60.0), rng.uniform(0.3, 1.0),
                                  rng.uniform(0.0, 0.01));
        CHECK(std::abs(pam_score(pam, v) - fallback_score(v)) < 0.02);
    }
}

TEST_CASE("pretraining degenerate and deterministic cases") {
    Rng rng(556);
    std::vector<std::pair<MetricVector, double>> calib;
    for (int i = 0; i < 40; ++i)
        calib.emplace_back(mv(rng.uniform(10.0, 60.0), rng.uniform(0.0, 1.0), 0.001), 0.75);
    const PamMlp pam = pam_pretrain(calib, 3);
    for (int i = 0; i < 10; ++i)
        CHECK(std::abs(pam_score(pam, mv(rng.uniform(10.0, 60.0), rng.uniform(0.0, 1.0), 0.001)) -
                       0.75) < 1e-2);

    const PamMlp again = pam_pretrain(calib, 3);
    CHECK(pam.w1 == again.w1);
    CHECK(pam.w4 == again.w4);
    CHECK(pam.b4 == again.b4);

    calib.resize(31);
    CHECK_THROWS_AS(pam_pretrain(calib, 3), ShapeError);
}

TEST_CASE("pam weights round-trip through the wire parameter encoding") {
    const PamMlp pam = pam_init(9);
    const ParamVector flat = pam_to_params(pam);
    CHECK(flat.size() == 16 * 3 + 16 + 16 * 16 + 16 + 8 * 16 + 8 + 8 + 1);
    const PamMlp back = pam_from_params(flat);
    for (int i = 0; i < 20; ++i) {
        const MetricVector v = mv(20.0 + i, 0.5 + 0.02 * i, 0.0005 * i);
        CHECK(pam_score(back, v) == doctest::Approx(pam_score(pam, v)).epsilon(1e-6));
    }

    ParamVector short_vec(flat.begin(), flat.end() - 1);
    CHECK_THROWS_AS(pam_from_params(short_vec), ShapeError);
    ParamVector long_vec = flat;
    long_vec.push_back(0.0f);
    CHECK_THROWS_AS(pam_from_params(long_vec), ShapeError);
}

TEST_CASE("odm reorders worst-first and boosts the weakest institution") {
    const TrainConfig cfg = cfg_with(1.4759, 5);
    ControlDirective cur = initial_directive({1, 2, 3}, cfg);

    const ControlDirective next = odm_decide({{1, 1.50}, {2, 1.20}, {3, 1.60}}, cfg, cur);
    CHECK(next.sequence == std::vector<int32_t>{2, 1, 3});
    CHECK(next.site_rounds == std::vector<int32_t>{7, 5, 5}); // min(S+2, 2S) for S=5
    CHECK(next.rounds_for(2) == 7);
    CHECK(next.rounds_for(1) == 5);
    CHECK_FALSE(next.converged);
    CHECK(next.streak == 0); // institution 2 sat below threshold
    CHECK(next.trans_rounds == cur.trans_rounds);
}

TEST_CASE("odm boost cap at twice the site-rounds") {
    const TrainConfig cfg = cfg_with(1.0, 1);
    ControlDirective cur = initial_directive({1, 2}, cfg);
    const ControlDirective next = odm_decide({{1, 1.5}, {2, 2.0}}, cfg, cur);
    CHECK(next.site_rounds == std::vector<int32_t>{2, 1}); // min(1+2, 2) = 2

    const TrainConfig cfg2 = cfg_with(1.0, 2);
    ControlDirective cur2 = initial_directive({1, 2}, cfg2);
    const ControlDirective next2 = odm_decide({{1, 1.5}, {2, 2.0}}, cfg2, cur2);
    CHECK(next2.site_rounds == std::vector<int32_t>{4, 2}); // min(2+2, 4) = 4
}

TEST_CASE("odm leaves the directive unchanged below threshold") {
    const TrainConfig cfg = cfg_with(1.4759, 5);
    ControlDirective cur = initial_directive({1, 2, 3}, cfg);
    cur.sequence = {3, 1, 2};
    cur.site_rounds = {7, 5, 5};
    cur.streak = 1;

    const ControlDirective next = odm_decide({{1, 1.0}, {2, 1.1}, {3, 0.9}}, cfg, cur);
    CHECK(next.sequence == cur.sequence);
    CHECK(next.site_rounds == cur.site_rounds);
    CHECK_FALSE(next.converged);
    CHECK(next.streak == 0); // the convergence run is broken
}

TEST_CASE("odm declares convergence after two consecutive clean cycles") {
    const TrainConfig cfg = cfg_with(1.4759, 5);
    ControlDirective d = initial_directive({1, 2, 3}, cfg);

    d = odm_decide({{1, 1.5}, {2, 1.6}, {3, 1.7}}, cfg, d);
    CHECK(d.streak == 1);
    CHECK_FALSE(d.converged);

    d = odm_decide({{1, 1.8}, {2, 1.5}, {3, 1.6}}, cfg, d);
    CHECK(d.streak == 2);
    CHECK(d.converged);

    // An interrupted run starts over.
    ControlDirective e = initial_directive({1, 2, 3}, cfg);
    e = odm_decide({{1, 1.5}, {2, 1.6}, {3, 1.7}}, cfg, e);
    e = odm_decide({{1, 1.2}, {2, 1.6}, {3, 1.7}}, cfg, e); // 1 dips below
    CHECK(e.streak == 0);
    e = odm_decide({{1, 1.5}, {2, 1.6}, {3, 1.7}}, cfg, e);
    CHECK(e.streak == 1);
    CHECK_FALSE(e.converged);
}

TEST_CASE("odm breaks score ties by ascending id") {
    const TrainConfig cfg = cfg_with(1.0, 5);
    ControlDirective cur = initial_directive({3, 1, 2}, cfg);
    const ControlDirective next = odm_decide({{1, 1.5}, {2, 1.5}, {3, 1.5}}, cfg, cur);
    CHECK(next.sequence == std::vector<int32_t>{1, 2, 3});
    CHECK(next.site_rounds == std::vector<int32_t>{7, 5, 5});
}

TEST_CASE("odm randomized sweep: permutation, trigger rule, reproducibility") {
    const TrainConfig cfg = cfg_with(1.4759, 5);
    const std::vector<int32_t> ids{1, 2, 3, 4};
    ControlDirective cur = initial_directive(ids, cfg);

    Rng rng(8080);
    for (int trial = 0; trial < 300; ++trial) {
        std::map<int32_t, double> scores;
        for (int32_t id : ids) scores[id] = rng.uniform(0.5, 2.0);

        const ControlDirective a = odm_decide(scores, cfg, cur);
        const ControlDirective b = odm_decide(scores, cfg, cur);
        CHECK(a.sequence == b.sequence);
        CHECK(a.site_rounds == b.site_rounds);
        CHECK(a.streak == b.streak);

        const std::set<int32_t> seen(a.sequence.begin(), a.sequence.end());
        CHECK(seen == std::set<int32_t>(ids.begin(), ids.end()));

        bool any = false;
        for (const auto& [id, rho] : scores) any |= rho >= cfg.threshold;
        if (any) {
            // triggered: worst first
            double worst = 1e300;
            int32_t worst_id = -1;
            for (const auto& [id, rho] : scores)
                if (rho < worst) {
                    worst = rho;
                    worst_id = id;
                }
            CHECK(a.sequence.front() == worst_id);
            CHECK(a.site_rounds.front() == 7);
        } else {
            CHECK(a.sequence == cur.sequence);
        }
        cur = a;
        cur.converged = false; // keep the sweep going
        cur.streak = 0;
    }
}

TEST_CASE("odm input validation") {
    const TrainConfig cfg = cfg_with(1.4759, 5);
    ControlDirective cur = initial_directive({1, 2, 3}, cfg);

    CHECK_THROWS_AS(odm_decide({{1, 1.0}, {2, 1.0}}, cfg, cur), ShapeError);
    CHECK_THROWS_AS(odm_decide({{1, 1.0}, {2, 1.0}, {4, 1.0}}, cfg, cur), ShapeError);
    CHECK_THROWS_AS(odm_decide({{1, 1.0}, {2, std::nan("")}, {3, 1.0}}, cfg, cur), NumericError);
}

TEST_CASE("directive integrity checks and ring successor") {
    const TrainConfig cfg = cfg_with(1.4759, 5);
    const ControlDirective d = initial_directive({3, 1, 2}, cfg);
    CHECK(d.sequence == std::vector<int32_t>{1, 2, 3}); // initial order is ascending
    CHECK(d.successor_of(1) == 2);
    CHECK(d.successor_of(2) == 3);
    CHECK(d.successor_of(3) == 1); // wraps
    CHECK_THROWS_AS(d.successor_of(9), ShapeError);
    CHECK_THROWS_AS(d.rounds_for(9), ShapeError);

    ControlDirective bad = d;
    bad.sequence = {1, 1, 3};
    CHECK_THROWS_AS(bad.check(), ShapeError);
    bad = d;
    bad.site_rounds = {5, 5};
    CHECK_THROWS_AS(bad.check(), ShapeError);
    bad = d;
    bad.site_rounds[0] = 0;
    CHECK_THROWS_AS(bad.check(), ShapeError);
    bad = d;
    bad.trans_rounds = 0;
    CHECK_THROWS_AS(bad.check(), ShapeError);
}
