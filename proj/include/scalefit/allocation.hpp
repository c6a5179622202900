#pragma once

// Compute model C = m (N D)^n and compute-optimal (N*, D*) for a joint fit.
// Everything here works in rescaled units (C/c_scale, N/n_scale, D/d_scale).

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scalefit/error.hpp"
#include "scalefit/numerics.hpp"
#include "scalefit/records.hpp"
#include "scalefit/scaling_fit.hpp"

namespace scalefit::alloc {

struct ComputeModel {
    double m = 6.0;
    double n = 1.0;
    double r2 = 1.0;
    std::size_t n_points = 0;

    double flops(double params, double samples) const { return m * std::pow(params * samples, n); }
};

struct AllocationCoefficients {
    double a_prime = 0.5;
    double b_prime = 0.5;
    double G = 1.0;
};

enum class Method { closed_form, brute_force };

inline std::string_view method_name(Method m) { return m == Method::closed_form ? "closed_form" : "brute_force"; }

struct AllocationResult {
    double budget_C = 0.0;
    double n_star = 0.0;
    double d_star = 0.0;
    double predicted_L = 0.0;
    Method method = Method::closed_form;
    /// Spacing of the search grid in log10(N); zero for the closed form.
    double grid_step_log10 = 0.0;
};

/// Regress log C on log(N D).
inline ComputeModel fit_compute_model(std::span<const double> params, std::span<const double> samples,
                                      std::span<const double> flops) {
    if (params.size() != samples.size() || params.size() != flops.size())
        fail(ErrorKind::usage, "compute model: length mismatch");
    std::vector<double> nd(params.size());
    for (std::size_t i = 0; i < nd.size(); ++i) nd[i] = params[i] * samples[i];
    numerics::LinearFit lf;
    try {
        lf = numerics::loglog_linreg(nd, flops);
    } catch (const Error& e) {
        fail(ErrorKind::input, std::string("compute model: ") + e.what());
    }
    ComputeModel cm;
    cm.m = std::exp(lf.intercept);
    cm.n = lf.slope;
    cm.r2 = lf.r2;
    cm.n_points = nd.size();
    if (!(cm.n > 0.0)) fail(ErrorKind::degenerate, "compute model: fitted exponent n must be positive");
    return cm;
}

inline ComputeModel fit_compute_model(const records::RunTable& runs, const fit::Rescale& scale = {}) {
    std::vector<double> n, d, c;
    for (const auto& r : runs.rows) {
        n.push_back(static_cast<double>(r.n_params) / scale.n_scale);
        d.push_back(static_cast<double>(r.samples_seen) / scale.d_scale);
        c.push_back(r.flops / scale.c_scale);
    }
    return fit_compute_model(n, d, c);
}

/// a' = beta/(alpha+beta), b' = 1 - a', G = (alpha A / (beta B))^(1/(alpha+beta)).
inline AllocationCoefficients allocation_coefficients(double A, double alpha, double B, double beta) {
    if (alpha + beta == 0.0) fail(ErrorKind::degenerate, "allocation: alpha + beta is zero");
    if (B == 0.0 || beta == 0.0) fail(ErrorKind::degenerate, "allocation: G undefined for B = 0 or beta = 0");
    if (!(A > 0.0 && alpha > 0.0 && B > 0.0 && beta > 0.0))
        fail(ErrorKind::degenerate, "allocation: A, alpha, B, beta must all be positive");
    AllocationCoefficients c;
    c.a_prime = beta / (alpha + beta);
    c.b_prime = 1.0 - c.a_prime;
    c.G = std::pow(alpha * A / (beta * B), 1.0 / (alpha + beta));
    return c;
}

inline AllocationCoefficients allocation_coefficients(const fit::JointFit& f) {
    return allocation_coefficients(f.A, f.alpha, f.B, f.beta);
}

/// N* = G (C/m)^(a'/n), D* = G^-1 (C/m)^(b'/n).
inline AllocationResult optimal_allocation(const fit::JointFit& f, const ComputeModel& cm, double budget_C) {
    if (!(budget_C > 0.0) || !std::isfinite(budget_C)) fail(ErrorKind::usage, "allocation: budget must be positive");
    const auto c = allocation_coefficients(f);
    const double base = budget_C / cm.m;
    AllocationResult r;
    r.budget_C = budget_C;
    r.n_star = c.G * std::pow(base, c.a_prime / cm.n);
    r.d_star = std::pow(base, c.b_prime / cm.n) / c.G;
    r.predicted_L = fit::predict(f, r.n_star, r.d_star).L;
    r.method = Method::closed_form;
    return r;
}

/// The fixed C = 6ND allocation: N* = G (C/6)^a', D* = G^-1 (C/6)^b'.
inline AllocationResult six_nd_allocation(const fit::JointFit& f, double budget_C) {
    if (!(budget_C > 0.0) || !std::isfinite(budget_C)) fail(ErrorKind::usage, "allocation: budget must be positive");
    const auto c = allocation_coefficients(f);
    const double base = budget_C / 6.0;
    AllocationResult r;
    r.budget_C = budget_C;
    r.n_star = c.G * std::pow(base, c.a_prime);
    r.d_star = std::pow(base, c.b_prime) / c.G;
    r.predicted_L = fit::predict(f, r.n_star, r.d_star).L;
    return r;
}

struct BruteForceOptions {
    std::size_t grid_points = 10000;
    double span_decades = 12.0;
};

/// Scans N on a log grid along the constraint D = (C/m)^(1/n) / N and returns
/// the grid argmin (ties to smaller N). The grid is centered on the closed-form
/// N* when that exists, otherwise on sqrt of the constraint product.
inline AllocationResult brute_force_allocation(const fit::JointFit& f, const ComputeModel& cm, double budget_C,
                                               BruteForceOptions opt = {}) {
    if (opt.grid_points < 100) fail(ErrorKind::usage, "brute force: need at least 100 grid points");
    if (!(budget_C > 0.0)) fail(ErrorKind::usage, "allocation: budget must be positive");
    const double product = std::pow(budget_C / cm.m, 1.0 / cm.n);
    double center = 0.5 * std::log10(product);
    try {
        center = std::log10(optimal_allocation(f, cm, budget_C).n_star);
    } catch (const Error&) {
    }
    const double lo = center - 0.5 * opt.span_decades;
    const double step = opt.span_decades / static_cast<double>(opt.grid_points - 1);

    AllocationResult best;
    best.budget_C = budget_C;
    best.method = Method::brute_force;
    best.grid_step_log10 = step;
    best.predicted_L = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < opt.grid_points; ++k) {
        const double n = std::pow(10.0, lo + step * static_cast<double>(k));
        const double d = product / n;
        const double L = fit::predict(f, n, d).L;
        if (L < best.predicted_L) {
            best.predicted_L = L;
            best.n_star = n;
            best.d_star = d;
        }
    }
    return best;
}

}  // namespace scalefit::alloc
