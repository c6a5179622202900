#pragma once

// Robust-loss primitives, log-sum-exp, log-log regression and a BFGS minimizer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "scalefit/error.hpp"

namespace scalefit::numerics {

struct HuberParams {
    double delta = 1e-3;
};

/// 0.5 r^2 inside the knee, delta (|r| - delta/2) outside.
inline double huber(double r, HuberParams p = {}) {
    const double a = std::abs(r);
    if (a <= p.delta) return 0.5 * r * r;
    return p.delta * (a - 0.5 * p.delta);
}

/// d huber / d r
inline double huber_derivative(double r, HuberParams p = {}) {
    if (std::abs(r) <= p.delta) return r;
    return r > 0 ? p.delta : -p.delta;
}

/// log(sum(exp(t))) with max-shift.
inline double lse(std::span<const double> terms) {
    if (terms.empty()) fail(ErrorKind::usage, "lse: empty input");
    const double mx = *std::max_element(terms.begin(), terms.end());
    if (std::isinf(mx)) return mx;
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - mx);
    return mx + std::log(acc);
}

inline double lse(std::initializer_list<double> terms) {
    return lse(std::span<const double>(terms.begin(), terms.size()));
}

/// Softmax weights of `terms` written into `weights`; returns lse(terms).
inline double lse_with_weights(std::span<const double> terms, std::span<double> weights) {
    const double mx = *std::max_element(terms.begin(), terms.end());
    double acc = 0.0;
    for (std::size_t k = 0; k < terms.size(); ++k) {
        weights[k] = std::exp(terms[k] - mx);
        acc += weights[k];
    }
    for (double& w : weights) w /= acc;
    return mx + std::log(acc);
}

struct LinearFit {
    double intercept = 0.0;
    double slope = 0.0;
    double r2 = 0.0;
};

/// Ordinary least squares of log(y) on log(x).
inline LinearFit loglog_linreg(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) fail(ErrorKind::usage, "loglog_linreg: length mismatch");
    if (x.size() < 2) fail(ErrorKind::input, "loglog_linreg: need at least 2 points");
    const std::size_t n = x.size();
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0) || !std::isfinite(x[i]) || !std::isfinite(y[i]))
            fail(ErrorKind::input, "loglog_linreg: values must be positive and finite (index " +
                                       std::to_string(i) + ")");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = lx[i] - mx, dy = ly[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx <= 1e-300) fail(ErrorKind::input, "loglog_linreg: degenerate x (all values identical)");
    LinearFit out;
    out.slope = sxy / sxx;
    out.intercept = my - out.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = ly[i] - (out.intercept + out.slope * lx[i]);
        ss_res += e * e;
    }
    out.r2 = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
    return out;
}

enum class GradientMode { analytic, finite_difference };

struct OptimizerConfig {
    int max_iters = 500;
    double grad_tol = 1e-8;
    double armijo_c = 1e-4;
    double backtrack = 0.5;
    GradientMode gradient_mode = GradientMode::analytic;
    double fd_step = 1e-6;

    void validate() const {
        if (max_iters <= 0) fail(ErrorKind::usage, "optimizer: max_iters must be positive");
        if (!(grad_tol > 0.0)) fail(ErrorKind::usage, "optimizer: grad_tol must be positive");
        if (!(armijo_c > 0.0 && armijo_c < 1.0)) fail(ErrorKind::usage, "optimizer: armijo c must lie in (0,1)");
        if (!(backtrack > 0.0 && backtrack < 1.0))
            fail(ErrorKind::usage, "optimizer: backtrack factor must lie in (0,1)");
        if (!(fd_step > 0.0)) fail(ErrorKind::usage, "optimizer: fd_step must be positive");
    }
};

struct MinimizeResult {
    std::vector<double> x_star;
    double f_star = 0.0;
    int iterations = 0;
    bool converged = false;
    double grad_norm = 0.0;
};

/// Objective concept: `double f(std::span<const double> x, std::span<double> grad)`.
/// An empty `grad` span asks for the value only.
template <class F>
double evaluate(F& f, std::span<const double> x, std::span<double> grad, const OptimizerConfig& cfg) {
    if (grad.empty() || cfg.gradient_mode == GradientMode::analytic) return f(x, grad);
    const double fx = f(x, std::span<double>{});
    std::vector<double> xp(x.begin(), x.end());
    for (std::size_t k = 0; k < xp.size(); ++k) {
        const double h = cfg.fd_step * std::max(1.0, std::abs(x[k]));
        xp[k] = x[k] + h;
        const double fp = f(xp, std::span<double>{});
        xp[k] = x[k] - h;
        const double fm = f(xp, std::span<double>{});
        xp[k] = x[k];
        grad[k] = (fp - fm) / (2.0 * h);
    }
    return fx;
}

inline double inf_norm(std::span<const double> v) {
    double m = 0.0;
    for (double e : v) m = std::max(m, std::abs(e));
    return m;
}

/// BFGS with an inverse-Hessian update and Armijo backtracking.
///
/// Accepted steps never increase the objective. A trial point whose value is
/// not finite counts as a rejected step. When backtracking fails the inverse
/// Hessian is reset to the identity once before giving up; the best point
/// reached is returned with `converged = false`.
template <class F>
MinimizeResult minimize(F&& f, std::vector<double> x0, const OptimizerConfig& cfg = {}) {
    cfg.validate();
    const std::size_t n = x0.size();
    std::vector<double> x = std::move(x0), g(n), x_new(n), g_new(n), p(n), s(n), y(n), hy(n);
    std::vector<double> h(n * n, 0.0);
    auto reset_h = [&] {
        std::fill(h.begin(), h.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) h[i * n + i] = 1.0;
    };
    reset_h();
    bool h_is_identity = true;
    bool first_update = true;

    double fx = evaluate(f, x, g, cfg);
    if (!std::isfinite(fx)) fail(ErrorKind::numerical, "minimize: objective is not finite at the starting point");

    MinimizeResult out;
    int it = 0;
    for (; it < cfg.max_iters; ++it) {
        if (inf_norm(g) <= cfg.grad_tol) break;

        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc -= h[i * n + j] * g[j];
            p[i] = acc;
        }
        double slope = std::inner_product(g.begin(), g.end(), p.begin(), 0.0);
        if (!(slope < 0.0)) {
            reset_h();
            h_is_identity = true;
            for (std::size_t i = 0; i < n; ++i) p[i] = -g[i];
            slope = -std::inner_product(g.begin(), g.end(), g.begin(), 0.0);
        }

        bool accepted = false;
        double f_new = fx;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            double t = 1.0;
            for (int ls = 0; ls < 80; ++ls) {
                for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + t * p[i];
                f_new = evaluate(f, x_new, std::span<double>{}, cfg);
                if (std::isfinite(f_new) && f_new <= fx + cfg.armijo_c * t * slope) {
                    accepted = true;
                    break;
                }
                t *= cfg.backtrack;
            }
            if (!accepted) {
                if (h_is_identity) break;
                reset_h();
                h_is_identity = true;
                first_update = true;
                for (std::size_t i = 0; i < n; ++i) p[i] = -g[i];
                slope = -std::inner_product(g.begin(), g.end(), g.begin(), 0.0);
            }
        }
        if (!accepted) break;

        f_new = evaluate(f, x_new, g_new, cfg);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
        }
        x.swap(x_new);
        g.swap(g_new);
        fx = f_new;

        const double sy = std::inner_product(s.begin(), s.end(), y.begin(), 0.0);
        const double yy = std::inner_product(y.begin(), y.end(), y.begin(), 0.0);
        if (sy > 1e-14 * std::sqrt(yy * std::inner_product(s.begin(), s.end(), s.begin(), 0.0)) && yy > 0.0) {
            if (first_update) {
                const double scale = sy / yy;
                std::fill(h.begin(), h.end(), 0.0);
                for (std::size_t i = 0; i < n; ++i) h[i * n + i] = scale;
                first_update = false;
            }
            // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
            const double rho = 1.0 / sy;
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += h[i * n + j] * y[j];
                hy[i] = acc;
            }
            const double yhy = std::inner_product(y.begin(), y.end(), hy.begin(), 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
            h_is_identity = false;
        }
    }

    out.grad_norm = inf_norm(g);
    out.converged = out.grad_norm <= cfg.grad_tol;
    out.iterations = it;
    out.f_star = fx;
    out.x_star = std::move(x);
    return out;
}

/// Max over coordinates of |analytic - central difference| / max(|analytic|, |fd|, |analytic|_inf).
/// The last term keeps near-zero coordinates from comparing roundoff against roundoff.
template <class F>
double check_gradient(F&& f, std::span<const double> x, double fd_step = 1e-6) {
    const std::size_t n = x.size();
    std::vector<double> g(n);
    f(x, std::span<double>(g));
    std::vector<double> xp(x.begin(), x.end());
    const double scale = std::max(inf_norm(g), 1e-10);
    double worst = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        xp[k] = x[k] + fd_step;
        const double fp = f(std::span<const double>(xp), std::span<double>{});
        xp[k] = x[k] - fd_step;
        const double fm = f(std::span<const double>(xp), std::span<double>{});
        xp[k] = x[k];
        const double fd = (fp - fm) / (2.0 * fd_step);
        const double denom = std::max({std::abs(g[k]), std::abs(fd), scale});
        worst = std::max(worst, std::abs(g[k] - fd) / denom);
    }
    return worst;
}

/// Linear-interpolated sample quantile (type 7); `values` is sorted in place.
inline double quantile(std::vector<double>& values, double q) {
    if (values.empty()) fail(ErrorKind::usage, "quantile: empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

inline double median(std::vector<double> values) { return quantile(values, 0.5); }

/// Pearson correlation; NaN when either side has zero variance.
inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) fail(ErrorKind::usage, "pearson: need two equal-length samples");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace scalefit::numerics
