#pragma once

// Row (or cluster) bootstrap with percentile intervals for fitted parameters
// and for predictions along a curve grid.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <type_traits>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "scalefit/error.hpp"
#include "scalefit/numerics.hpp"
#include "scalefit/parallel.hpp"
#include "scalefit/scaling_fit.hpp"

namespace scalefit::uncertainty {

enum class FitKind { power, shifted, joint };

inline std::string_view fit_kind_name(FitKind k) {
    switch (k) {
        case FitKind::power: return "power";
        case FitKind::shifted: return "shifted";
        case FitKind::joint: return "joint";
    }
    return "?";
}

inline FitKind parse_fit_kind(std::string_view s) {
    if (s == "power") return FitKind::power;
    if (s == "shifted") return FitKind::shifted;
    if (s == "joint") return FitKind::joint;
    fail(ErrorKind::usage, "unknown fit form '" + std::string(s) + "' (expected power, shifted or joint)");
}

/// Evaluation point in raw units: `x` for one-variable forms; (`x` = N, `d` = D) for joint.
struct CurveQuery {
    double x = 0.0;
    double d = 0.0;
};

struct BootstrapConfig {
    std::size_t resamples = 1000;
    double ci_level = 0.95;
    std::uint64_t seed = 0;
    std::vector<CurveQuery> curve_grid;
    /// Refit each resample from the point estimate only instead of the full grid.
    bool warm_start = false;
    unsigned threads = 1;
    double max_failed_fraction = 0.2;

    void validate() const {
        if (resamples < 2) fail(ErrorKind::usage, "bootstrap: at least 2 resamples required");
        if (!(ci_level > 0.0 && ci_level < 1.0)) fail(ErrorKind::usage, "bootstrap: ci level must lie in (0, 1)");
    }
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double width() const { return hi - lo; }
};

struct CurveBand {
    CurveQuery at;
    double estimate = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

using AnyFit = std::variant<fit::PowerLawFit, fit::ShiftedPowerLawFit, fit::JointFit>;

struct BootstrapResult {
    FitKind kind = FitKind::power;
    AnyFit point_fit;
    std::map<std::string, double> point_estimate;
    std::map<std::string, Interval> param_ci;
    std::vector<CurveBand> curve_ci;
    std::size_t resamples = 0;
    std::uint64_t seed = 0;
    double ci_level = 0.95;
    std::size_t n_failed_resamples = 0;
};

inline std::map<std::string, double> parameters(const AnyFit& f) {
    return std::visit(
        [](const auto& v) -> std::map<std::string, double> {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, fit::PowerLawFit>)
                return {{"E", v.E}, {"A", v.A}, {"alpha", v.alpha}};
            else if constexpr (std::is_same_v<T, fit::ShiftedPowerLawFit>)
                return {{"E", v.E}, {"A", v.A}, {"alpha", v.alpha}, {"lambda", v.lambda}};
            else
                return {{"E", v.E}, {"A", v.A}, {"alpha", v.alpha}, {"B", v.B}, {"beta", v.beta}};
        },
        f);
}

inline double predict_at(const AnyFit& f, const CurveQuery& q) {
    return std::visit(
        [&](const auto& v) -> double {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, fit::JointFit>)
                return fit::predict_raw(v, q.x, q.d).L;
            else
                return fit::predict_raw(v, q.x).L;
        },
        f);
}

/// Independent stream per resample index.
inline std::mt19937_64 resample_rng(std::uint64_t seed, std::size_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(index) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return std::mt19937_64(z ^ (z >> 31));
}

/// Row indices for one resample. With cluster ids, whole clusters are drawn.
inline std::vector<std::size_t> draw_indices(std::size_t n, std::span<const std::size_t> clusters, std::mt19937_64& rng) {
    std::vector<std::size_t> out;
    if (clusters.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) out.push_back(pick(rng));
        return out;
    }
    std::map<std::size_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) members[clusters[i]].push_back(i);
    std::vector<const std::vector<std::size_t>*> groups;
    for (const auto& [id, rows] : members) groups.push_back(&rows);
    std::uniform_int_distribution<std::size_t> pick(0, groups.size() - 1);
    for (std::size_t k = 0; k < groups.size(); ++k) {
        const auto& g = *groups[pick(rng)];
        out.insert(out.end(), g.begin(), g.end());
    }
    return out;
}

namespace detail {

inline std::vector<double> warm_axis(double log_value) {
    return {std::isfinite(log_value) ? log_value : -20.0};
}

inline fit::FitConfig warm_config(fit::FitConfig cfg, const AnyFit& estimate) {
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            cfg.grid_e = warm_axis(std::log(v.E));
            cfg.grid_a = warm_axis(std::log(v.A));
            cfg.grid_alpha = {v.alpha};
            if constexpr (std::is_same_v<T, fit::ShiftedPowerLawFit>) cfg.grid_lambda = {v.lambda};
        },
        estimate);
    return cfg;
}

template <class Point, class FitFn>
BootstrapResult run(std::span<const Point> pts, FitKind kind, const fit::FitConfig& fit_cfg,
                    const BootstrapConfig& bs, std::span<const std::size_t> clusters, FitFn&& fit_fn) {
    bs.validate();
    if (!clusters.empty() && clusters.size() != pts.size())
        fail(ErrorKind::usage, "bootstrap: one cluster id per point required");

    BootstrapResult out;
    out.kind = kind;
    out.resamples = bs.resamples;
    out.seed = bs.seed;
    out.ci_level = bs.ci_level;
    out.point_fit = fit_fn(pts, fit_cfg);
    out.point_estimate = parameters(out.point_fit);

    fit::FitConfig resample_cfg = bs.warm_start ? warm_config(fit_cfg, out.point_fit) : fit_cfg;
    resample_cfg.threads = 1;
    resample_cfg.record_inits = false;

    std::vector<std::optional<AnyFit>> fits(bs.resamples);
    parallel_for(bs.resamples, bs.threads, [&](std::size_t k) {
        auto rng = resample_rng(bs.seed, k);
        const auto idx = draw_indices(pts.size(), clusters, rng);
        std::vector<Point> sample;
        sample.reserve(idx.size());
        for (auto i : idx) sample.push_back(pts[i]);
        try {
            fits[k] = fit_fn(std::span<const Point>(sample), resample_cfg);
        } catch (const Error&) {
            fits[k].reset();
        }
    });

    std::map<std::string, std::vector<double>> draws;
    std::vector<std::vector<double>> curve_draws(bs.curve_grid.size());
    for (const auto& f : fits) {
        if (!f) {
            ++out.n_failed_resamples;
            continue;
        }
        for (const auto& [name, value] : parameters(*f)) draws[name].push_back(value);
        for (std::size_t q = 0; q < bs.curve_grid.size(); ++q) curve_draws[q].push_back(predict_at(*f, bs.curve_grid[q]));
    }
    if (static_cast<double>(out.n_failed_resamples) > bs.max_failed_fraction * static_cast<double>(bs.resamples))
        fail(ErrorKind::numerical, "bootstrap: " + std::to_string(out.n_failed_resamples) + " of " +
                                       std::to_string(bs.resamples) + " resample fits failed");

    const double q_lo = (1.0 - bs.ci_level) / 2.0;
    const double q_hi = 1.0 - q_lo;
    for (auto& [name, values] : draws)
        out.param_ci[name] = {numerics::quantile(values, q_lo), numerics::quantile(values, q_hi)};

    std::vector<std::size_t> order(bs.curve_grid.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return bs.curve_grid[a].x < bs.curve_grid[b].x ||
               (bs.curve_grid[a].x == bs.curve_grid[b].x && bs.curve_grid[a].d < bs.curve_grid[b].d);
    });
    for (auto q : order) {
        CurveBand band;
        band.at = bs.curve_grid[q];
        band.estimate = predict_at(out.point_fit, band.at);
        band.lo = numerics::quantile(curve_draws[q], q_lo);
        band.hi = numerics::quantile(curve_draws[q], q_hi);
        out.curve_ci.push_back(band);
    }
    return out;
}

}  // namespace detail

/// Bootstrap of a power or shifted power-law fit.
inline BootstrapResult bootstrap_fit(std::span<const fit::CurvePoint> pts, FitKind kind, fit::XKind x_kind,
                                     const fit::FitConfig& fit_cfg, const BootstrapConfig& bs,
                                     std::span<const std::size_t> clusters = {}) {
    if (kind == FitKind::joint) fail(ErrorKind::usage, "bootstrap: joint fits take (N, D, L) points");
    return detail::run(pts, kind, fit_cfg, bs, clusters,
                       [&](std::span<const fit::CurvePoint> p, const fit::FitConfig& c) -> AnyFit {
                           if (kind == FitKind::power) return fit::fit_power_law(p, c, x_kind);
                           return fit::fit_shifted_power_law(p, c, x_kind);
                       });
}

/// Bootstrap of the joint (N, D) fit.
inline BootstrapResult bootstrap_fit(std::span<const fit::JointPoint> pts, const fit::FitConfig& fit_cfg,
                                     const BootstrapConfig& bs, std::span<const std::size_t> clusters = {}) {
    return detail::run(pts, FitKind::joint, fit_cfg, bs, clusters,
                       [](std::span<const fit::JointPoint> p, const fit::FitConfig& c) -> AnyFit {
                           return fit::fit_joint(p, c);
                       });
}

}  // namespace scalefit::uncertainty
