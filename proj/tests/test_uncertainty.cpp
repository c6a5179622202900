#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "scalefit/synth.hpp"
#include "scalefit/uncertainty.hpp"

using namespace scalefit;
using namespace scalefit::uncertainty;

namespace {

fit::FitConfig identity_config() {
    fit::FitConfig cfg;
    cfg.rescale = fit::Rescale::identity();
    return cfg;
}

std::vector<fit::CurvePoint> noisy_power(double sigma, std::uint64_t seed, std::size_t n = 30) {
    synth::CurveGenerator g;
    g.form = synth::CurveForm::power;
    g.true_params = {0.52, 0.55, 0.16};
    g.x_grid = synth::log_spaced(1e-3, 1e3, n);
    g.noise_sigma_log = sigma;
    g.seed = seed;
    return synth::gen_curve_points(g);
}

BootstrapConfig small_config(std::uint64_t seed, std::size_t resamples = 40) {
    BootstrapConfig bs;
    bs.resamples = resamples;
    bs.seed = seed;
    for (double x : {1e2, 1e-2, 1.0, 10.0}) bs.curve_grid.push_back({x, 0.0});
    return bs;
}

void expect_identical(const BootstrapResult& a, const BootstrapResult& b) {
    ASSERT_EQ(a.param_ci.size(), b.param_ci.size());
    for (const auto& [k, v] : a.param_ci) {
        EXPECT_EQ(v.lo, b.param_ci.at(k).lo) << k;
        EXPECT_EQ(v.hi, b.param_ci.at(k).hi) << k;
    }
    ASSERT_EQ(a.curve_ci.size(), b.curve_ci.size());
    for (std::size_t i = 0; i < a.curve_ci.size(); ++i) {
        EXPECT_EQ(a.curve_ci[i].lo, b.curve_ci[i].lo);
        EXPECT_EQ(a.curve_ci[i].hi, b.curve_ci[i].hi);
    }
    EXPECT_EQ(a.n_failed_resamples, b.n_failed_resamples);
}

}  // namespace

TEST(Bootstrap, DeterministicUnderSeed) {
    const auto pts = noisy_power(0.05, 1);
    const auto a = bootstrap_fit(pts, FitKind::power, fit::XKind::flops, identity_config(), small_config(7));
    const auto b = bootstrap_fit(pts, FitKind::power, fit::XKind::flops, identity_config(), small_config(7));
    expect_identical(a, b);
    const auto c = bootstrap_fit(pts, FitKind::power, fit::XKind::flops, identity_config(), small_config(8));
    EXPECT_NE(a.param_ci.at("alpha").lo, c.param_ci.at("alpha").lo);
}

TEST(Bootstrap, ThreadCountDoesNotChangeResult) {
    const auto pts = noisy_power(0.05, 2);
    auto bs = small_config(3);
    const auto serial = bootstrap_fit(pts, FitKind::power, fit::XKind::flops, identity_config(), bs);
    bs.threads = 4;
    const auto par = bootstrap_fit(pts, FitKind::power, fit::XKind::flops, identity_config(), bs);
    expect_identical(serial, par);
}

TEST(Bootstrap, NoiseFreeWidthsVanish) {
    const auto pts = noisy_power(0.0, 0);
    const auto r = bootstrap_fit(pts, FitKind::power, fit::XKind::flops, identity_config(), small_config(5));
    for (const auto& [k, v] : r.param_ci) EXPECT_LT(v.width(), 1e-6) << k;
    for (const auto& band : r.curve_ci) {
        EXPECT_LT(band.hi - band.lo, 1e-6);
        EXPECT_LE(band.lo, band.estimate + 1e-12);
        EXPECT_GE(band.hi, band.estimate - 1e-12);
    }
}

TEST(Bootstrap, IntervalsOrderedAndCurveSorted) {
    const auto pts = noisy_power(0.1, 3);
    const auto r = bootstrap_fit(pts, FitKind::power, fit::XKind::flops, identity_config(), small_config(9));
    for (const auto& [k, v] : r.param_ci) EXPECT_LE(v.lo, v.hi) << k;
    for (std::size_t i = 0; i < r.curve_ci.size(); ++i) {
        EXPECT_LE(r.curve_ci[i].lo, r.curve_ci[i].hi);
        if (i) EXPECT_LT(r.curve_ci[i - 1].at.x, r.curve_ci[i].at.x);
    }
    EXPECT_EQ(r.resamples, 40u);
    EXPECT_EQ(r.seed, 9u);
}

TEST(Bootstrap, NeedsTwoResamples) {
    const auto pts = noisy_power(0.0, 0);
    auto bs = small_config(1, 1);
    EXPECT_THROW(bootstrap_fit(pts, FitKind::power, fit::XKind::flops, identity_config(), bs), Error);
}

TEST(Bootstrap, WarmStartMatchesFullGridOnCleanData) {
    const auto pts = noisy_power(0.0, 0);
    auto bs = small_config(4);
    const auto full = bootstrap_fit(pts, FitKind::power, fit::XKind::flops, identity_config(), bs);
    bs.warm_start = true;
    const auto warm = bootstrap_fit(pts, FitKind::power, fit::XKind::flops, identity_config(), bs);
    for (const auto& [k, v] : full.param_ci) {
        EXPECT_NEAR(v.lo, warm.param_ci.at(k).lo, 1e-6) << k;
        EXPECT_NEAR(v.hi, warm.param_ci.at(k).hi, 1e-6) << k;
    }
}

TEST(Bootstrap, ShiftedAndJointWarmStart) {
    synth::CurveGenerator g;
    g.form = synth::CurveForm::shifted;
    g.true_params = {0.5, 2.0, 0.5, 1.0};
    g.x_grid = synth::log_spaced(1.0, 1e5, 20);
    auto bs = small_config(6, 10);
    bs.warm_start = true;
    const auto s = bootstrap_fit(synth::gen_curve_points(g), FitKind::shifted, fit::XKind::params, identity_config(), bs);
    EXPECT_EQ(s.param_ci.count("lambda"), 1u);

    g.form = synth::CurveForm::joint;
    g.true_params = {0.3, 1.0, 0.34, 2.0, 0.28};
    g.n_grid = synth::log_spaced(0.1, 100.0, 6);
    g.d_grid = synth::log_spaced(0.1, 100.0, 6);
    auto cfg = identity_config();
    cfg.grid_e = {0.0};
    cfg.grid_a = {0.0};
    cfg.grid_alpha = {0.5};
    BootstrapConfig jb;
    jb.resamples = 10;
    jb.seed = 1;
    jb.warm_start = true;
    jb.curve_grid = {{1.0, 1.0}, {10.0, 10.0}};
    const auto j = bootstrap_fit(synth::gen_joint_points(g), cfg, jb);
    EXPECT_EQ(j.param_ci.size(), 5u);
    EXPECT_LT(j.param_ci.at("beta").width(), 1e-6);
    EXPECT_EQ(j.curve_ci.size(), 2u);
}

TEST(Bootstrap, JointKindNeedsJointPoints) {
    const auto pts = noisy_power(0.0, 0);
    EXPECT_THROW(bootstrap_fit(pts, FitKind::joint, fit::XKind::flops, identity_config(), small_config(1)), Error);
}

TEST(Resampling, StreamsDifferByIndexAndSeed) {
    auto a = resample_rng(1, 0), b = resample_rng(1, 1), c = resample_rng(2, 0), a2 = resample_rng(1, 0);
    const auto va = a();
    EXPECT_NE(va, b());
    EXPECT_NE(va, c());
    EXPECT_EQ(va, a2());
}

TEST(Resampling, ClusterDrawsWholeGroups) {
    std::vector<std::size_t> clusters{0, 0, 0, 1, 1, 2, 2, 2, 2};
    auto rng = resample_rng(3, 0);
    for (int k = 0; k < 20; ++k) {
        const auto idx = draw_indices(clusters.size(), clusters, rng);
        std::map<std::size_t, int> rows_per_cluster;
        for (auto i : idx) rows_per_cluster[clusters[i]]++;
        for (const auto& [c, count] : rows_per_cluster) {
            const int size = static_cast<int>(std::count(clusters.begin(), clusters.end(), c));
            EXPECT_EQ(count % size, 0);
        }
    }
    auto r2 = resample_rng(3, 1);
    const auto rows = draw_indices(9, {}, r2);
    EXPECT_EQ(rows.size(), 9u);
    for (auto i : rows) EXPECT_LT(i, 9u);
}

TEST(Resampling, ClusterBootstrapRuns) {
    const auto pts = noisy_power(0.05, 4, 30);
    std::vector<std::size_t> clusters;
    for (std::size_t i = 0; i < pts.size(); ++i) clusters.push_back(i / 3);
    const auto r = bootstrap_fit(pts, FitKind::power, fit::XKind::flops, identity_config(), small_config(2, 20), clusters);
    EXPECT_EQ(r.resamples, 20u);
    std::vector<std::size_t> wrong(3, 0);
    EXPECT_THROW(bootstrap_fit(pts, FitKind::power, fit::XKind::flops, identity_config(), small_config(2, 20), wrong), Error);
}
