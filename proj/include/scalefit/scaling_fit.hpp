#pragma once

// Parametric misalignment curves fit with a Huber loss on log residuals:
//
//   power:    L = E + A X^-alpha
//   shifted:  L = E + A (X + 10^lambda)^-alpha
//   joint:    L = E + A N^-alpha + B D^-beta
//
// Every form is optimized in (e, a, alpha[, lambda | b, beta]) with E = exp(e),
// A = exp(a), B = exp(b), starting BFGS from each point of a fixed grid and
// keeping the lowest final objective.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scalefit/error.hpp"
#include "scalefit/numerics.hpp"
#include "scalefit/parallel.hpp"

namespace scalefit::fit {

enum class XKind { flops, params, samples };

inline std::string_view x_kind_name(XKind k) {
    switch (k) {
        case XKind::flops: return "flops";
        case XKind::params: return "params";
        case XKind::samples: return "samples";
    }
    return "?";
}

inline XKind parse_x_kind(std::string_view s) {
    if (s == "flops") return XKind::flops;
    if (s == "params") return XKind::params;
    if (s == "samples") return XKind::samples;
    fail(ErrorKind::usage, "unknown x kind '" + std::string(s) + "' (expected flops, params or samples)");
}

/// Fits run on C/c_scale, N/n_scale, D/d_scale.
struct Rescale {
    double c_scale = 1e13;
    double n_scale = 1e5;
    double d_scale = 1e4;

    static Rescale identity() { return {1.0, 1.0, 1.0}; }

    double for_kind(XKind k) const {
        switch (k) {
            case XKind::flops: return c_scale;
            case XKind::params: return n_scale;
            case XKind::samples: return d_scale;
        }
        return 1.0;
    }

    void validate() const {
        if (!(c_scale > 0.0 && n_scale > 0.0 && d_scale > 0.0)) fail(ErrorKind::usage, "rescale factors must be positive");
    }
};

struct FitConfig {
    numerics::HuberParams huber{1e-3};
    std::vector<double> grid_e{-1.0, -0.5, 0.0, 0.5, 1.0};
    std::vector<double> grid_a{0.0, 5.0, 10.0, 15.0, 20.0, 25.0};
    std::vector<double> grid_alpha{0.0, 0.5, 1.0, 1.5, 2.0};
    std::vector<double> grid_lambda{0.0, 0.5, 1.0, 1.5, 2.0};
    Rescale rescale{};
    numerics::OptimizerConfig optimizer{};
    bool freeze_lambda = false;
    unsigned threads = 1;
    /// Keep the final objective of every grid start in the fit result.
    bool record_inits = false;
    /// Final objectives closer than this are treated as tied.
    double tie_tolerance = 1e-14;

    void validate() const {
        if (!(huber.delta > 0.0)) fail(ErrorKind::usage, "huber delta must be positive");
        if (grid_e.empty() || grid_a.empty() || grid_alpha.empty() || grid_lambda.empty())
            fail(ErrorKind::usage, "initialization grids must be nonempty");
        rescale.validate();
        optimizer.validate();
    }
};

struct CurvePoint {
    double x = 0.0;
    double loss = 0.0;
};

struct JointPoint {
    double n = 0.0;
    double d = 0.0;
    double loss = 0.0;
};

struct Prediction {
    double L = 0.0;
    double S = 1.0;
};

inline constexpr double kMinLoss = 1e-6;
inline constexpr double kDegenerateThreshold = 1e-4;

struct FitDiagnostics {
    double objective = 0.0;
    std::vector<double> init_used;
    bool converged = false;
    std::size_t n_points = 0;
    std::vector<double> init_objectives;
    std::vector<std::string> warnings;
};

struct PowerLawFit : FitDiagnostics {
    double E = 0.0;
    double A = 0.0;
    double alpha = 0.0;
    bool degenerate = false;
    XKind x_kind = XKind::flops;
    double x_scale = 1.0;
};

struct ShiftedPowerLawFit : FitDiagnostics {
    double E = 0.0;
    double A = 0.0;
    double alpha = 0.0;
    double lambda = 0.0;
    bool degenerate = false;
    bool lambda_frozen = false;
    XKind x_kind = XKind::flops;
    double x_scale = 1.0;
};

struct JointFit : FitDiagnostics {
    double E = 0.0;
    double A = 0.0;
    double alpha = 0.0;
    double B = 0.0;
    double beta = 0.0;
    bool degenerate = false;
    double n_scale = 1.0;
    double d_scale = 1.0;
};

// ---------------------------------------------------------------------------
// Objectives. Each is callable as f(params, grad) per numerics::minimize.

namespace detail {

/// Two-term lse and the softmax weight of the first term.
inline double lse2(double t1, double t2, double& w1) {
    const double diff = t1 - t2;
    if (diff >= 0.0) {
        const double z = std::exp(-diff);
        w1 = 1.0 / (1.0 + z);
        return t1 + std::log1p(z);
    }
    const double z = std::exp(diff);
    w1 = z / (1.0 + z);
    return t2 + std::log1p(z);
}

}  // namespace detail

/// sum_i Huber(LSE(a - alpha log X_i, e) - log L_i); params (e, a, alpha).
class PowerLawObjective {
public:
    PowerLawObjective(std::span<const double> x, std::span<const double> loss, numerics::HuberParams h)
        : huber_(h) {
        log_x_.reserve(x.size());
        log_l_.reserve(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            log_x_.push_back(std::log(x[i]));
            log_l_.push_back(std::log(loss[i]));
        }
    }

    double operator()(std::span<const double> p, std::span<double> g) const {
        const double e = p[0], a = p[1], alpha = p[2];
        double f = 0.0, ge = 0.0, ga = 0.0, gal = 0.0;
        for (std::size_t i = 0; i < log_x_.size(); ++i) {
            double w = 0.0;
            const double r = detail::lse2(a - alpha * log_x_[i], e, w) - log_l_[i];
            f += numerics::huber(r, huber_);
            if (!g.empty()) {
                const double psi = numerics::huber_derivative(r, huber_);
                ge += psi * (1.0 - w);
                ga += psi * w;
                gal -= psi * w * log_x_[i];
            }
        }
        if (!g.empty()) {
            g[0] = ge;
            g[1] = ga;
            g[2] = gal;
        }
        return f;
    }

private:
    std::vector<double> log_x_, log_l_;
    numerics::HuberParams huber_;
};

/// sum_i Huber(LSE(a - alpha log(X_i + 10^lambda), e) - log L_i); params (e, a, alpha, lambda).
class ShiftedPowerLawObjective {
public:
    ShiftedPowerLawObjective(std::span<const double> x, std::span<const double> loss, numerics::HuberParams h)
        : x_(x.begin(), x.end()), huber_(h) {
        log_l_.reserve(loss.size());
        for (double l : loss) log_l_.push_back(std::log(l));
    }

    double operator()(std::span<const double> p, std::span<double> g) const {
        const double e = p[0], a = p[1], alpha = p[2], lambda = p[3];
        const double shift = std::pow(10.0, lambda);
        if (!std::isfinite(shift)) return std::numeric_limits<double>::infinity();
        double f = 0.0, ge = 0.0, ga = 0.0, gal = 0.0, gla = 0.0;
        for (std::size_t i = 0; i < x_.size(); ++i) {
            const double u = std::log(x_[i] + shift);
            double w = 0.0;
            const double r = detail::lse2(a - alpha * u, e, w) - log_l_[i];
            f += numerics::huber(r, huber_);
            if (!g.empty()) {
                const double psi = numerics::huber_derivative(r, huber_);
                ge += psi * (1.0 - w);
                ga += psi * w;
                gal -= psi * w * u;
                gla -= psi * w * alpha * shift * std::numbers::ln10 / (x_[i] + shift);
            }
        }
        if (!g.empty()) {
            g[0] = ge;
            g[1] = ga;
            g[2] = gal;
            g[3] = gla;
        }
        return f;
    }

private:
    std::vector<double> x_, log_l_;
    numerics::HuberParams huber_;
};

/// The shifted objective with lambda held at a fixed value; params (e, a, alpha).
class FrozenLambdaObjective {
public:
    FrozenLambdaObjective(const ShiftedPowerLawObjective& inner, double lambda) : inner_(inner), lambda_(lambda) {}

    double operator()(std::span<const double> p, std::span<double> g) const {
        const std::array<double, 4> full{p[0], p[1], p[2], lambda_};
        std::array<double, 4> gfull{};
        const double f = inner_(full, g.empty() ? std::span<double>{} : std::span<double>(gfull));
        if (!g.empty()) std::copy_n(gfull.begin(), 3, g.begin());
        return f;
    }

private:
    const ShiftedPowerLawObjective& inner_;
    double lambda_;
};

/// sum_i Huber(LSE(a - alpha log N_i, b - beta log D_i, e) - log L_i); params (e, a, alpha, b, beta).
class JointObjective {
public:
    JointObjective(std::span<const JointPoint> pts, numerics::HuberParams h) : huber_(h) {
        for (const auto& p : pts) {
            log_n_.push_back(std::log(p.n));
            log_d_.push_back(std::log(p.d));
            log_l_.push_back(std::log(p.loss));
        }
    }

    double operator()(std::span<const double> p, std::span<double> g) const {
        const double e = p[0], a = p[1], alpha = p[2], b = p[3], beta = p[4];
        double f = 0.0;
        std::array<double, 5> acc{};
        for (std::size_t i = 0; i < log_n_.size(); ++i) {
            const double ta = a - alpha * log_n_[i];
            const double tb = b - beta * log_d_[i];
            const double mx = std::max({ta, tb, e});
            const double za = std::exp(ta - mx), zb = std::exp(tb - mx), ze = std::exp(e - mx);
            const double sum = za + zb + ze;
            const double r = mx + std::log(sum) - log_l_[i];
            f += numerics::huber(r, huber_);
            if (!g.empty()) {
                const double psi = numerics::huber_derivative(r, huber_) / sum;
                acc[0] += psi * ze;
                acc[1] += psi * za;
                acc[2] -= psi * za * log_n_[i];
                acc[3] += psi * zb;
                acc[4] -= psi * zb * log_d_[i];
            }
        }
        if (!g.empty()) std::copy(acc.begin(), acc.end(), g.begin());
        return f;
    }

private:
    std::vector<double> log_n_, log_d_, log_l_;
    numerics::HuberParams huber_;
};

// ---------------------------------------------------------------------------
// Grid search.

struct GridOutcome {
    std::vector<double> x;
    double objective = std::numeric_limits<double>::infinity();
    std::vector<double> init;
    bool converged = false;
    std::vector<double> all_objectives;
};

/// Minimizes from every start; keeps the lowest objective. Objectives within
/// `tie_tolerance` of the best count as tied, and ties go to the smaller value
/// of parameter `alpha_index`, then to the earlier start.
template <class Obj>
GridOutcome grid_minimize(const Obj& objective, const std::vector<std::vector<double>>& starts,
                          const numerics::OptimizerConfig& opt, unsigned threads, double tie_tolerance,
                          std::size_t alpha_index) {
    std::vector<numerics::MinimizeResult> results(starts.size());
    std::vector<char> ok(starts.size(), 0);
    parallel_for(starts.size(), threads, [&](std::size_t k) {
        try {
            results[k] = numerics::minimize(objective, starts[k], opt);
            ok[k] = std::isfinite(results[k].f_star) ? 1 : 0;
        } catch (const Error&) {
            ok[k] = 0;
        }
    });

    GridOutcome out;
    out.all_objectives.resize(starts.size(), std::numeric_limits<double>::infinity());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < starts.size(); ++k) {
        if (!ok[k]) continue;
        out.all_objectives[k] = results[k].f_star;
        best = std::min(best, results[k].f_star);
    }
    if (!std::isfinite(best)) fail(ErrorKind::numerical, "fit: every grid start diverged");

    std::size_t chosen = starts.size();
    for (std::size_t k = 0; k < starts.size(); ++k) {
        if (!ok[k] || results[k].f_star > best + tie_tolerance) continue;
        if (chosen == starts.size() || results[k].x_star[alpha_index] < results[chosen].x_star[alpha_index]) chosen = k;
    }
    out.x = results[chosen].x_star;
    out.objective = results[chosen].f_star;
    out.init = starts[chosen];
    out.converged = results[chosen].converged;
    return out;
}

namespace detail {

inline std::size_t count_distinct(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

inline double clamp_loss(double l, std::size_t i, std::vector<std::string>& warnings) {
    if (!std::isfinite(l)) fail(ErrorKind::input, "fit: loss at point " + std::to_string(i) + " is not finite");
    if (l <= kMinLoss) {
        warnings.push_back("point " + std::to_string(i) + ": loss " + std::to_string(l) + " clamped to 1e-6");
        return kMinLoss;
    }
    return l;
}

/// Rescaled x and clamped loss for the one-variable forms.
inline void prepare_curve(std::span<const CurvePoint> pts, double scale, bool allow_zero_x, std::vector<double>& x,
                          std::vector<double>& loss, std::vector<std::string>& warnings) {
    if (pts.size() < 3) fail(ErrorKind::input, "fit: need at least 3 points, got " + std::to_string(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double xi = pts[i].x / scale;
        if (!std::isfinite(xi) || xi < 0.0 || (!allow_zero_x && xi == 0.0))
            fail(ErrorKind::input, "fit: x at point " + std::to_string(i) + " must be positive");
        x.push_back(xi);
        loss.push_back(clamp_loss(pts[i].loss, i, warnings));
    }
    if (count_distinct(x) < 3) fail(ErrorKind::input, "fit: need at least 3 distinct x values");
}

template <class Fn>
void for_grid(const std::vector<std::vector<double>>& axes, Fn&& fn) {
    std::vector<std::size_t> idx(axes.size(), 0);
    std::vector<double> point(axes.size());
    while (true) {
        for (std::size_t k = 0; k < axes.size(); ++k) point[k] = axes[k][idx[k]];
        fn(point);
        std::size_t k = axes.size();
        while (k > 0) {
            --k;
            if (++idx[k] < axes[k].size()) break;
            idx[k] = 0;
            if (k == 0) return;
        }
    }
}

inline std::vector<std::vector<double>> cartesian(const std::vector<std::vector<double>>& axes) {
    std::vector<std::vector<double>> out;
    for_grid(axes, [&](const std::vector<double>& p) { out.push_back(p); });
    return out;
}

template <class Fit>
void copy_diagnostics(Fit& fit, const GridOutcome& g, std::size_t n, bool record) {
    fit.objective = g.objective;
    fit.init_used = g.init;
    fit.converged = g.converged;
    fit.n_points = n;
    if (record) fit.init_objectives = g.all_objectives;
}

/// A vanishing exponent makes the power term a constant; report it inside E.
template <class Fit>
void settle_degenerate(Fit& fit) {
    if (fit.alpha < kDegenerateThreshold) {
        fit.E += fit.A;
        fit.A = 0.0;
        fit.alpha = 0.0;
    }
    fit.degenerate = fit.A < kDegenerateThreshold || fit.alpha < kDegenerateThreshold;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fits.

inline PowerLawFit fit_power_law(std::span<const CurvePoint> pts, const FitConfig& cfg, XKind kind) {
    cfg.validate();
    PowerLawFit fit;
    fit.x_kind = kind;
    fit.x_scale = cfg.rescale.for_kind(kind);
    std::vector<double> x, loss;
    detail::prepare_curve(pts, fit.x_scale, false, x, loss, fit.warnings);

    const PowerLawObjective obj(x, loss, cfg.huber);
    const auto starts = detail::cartesian({cfg.grid_e, cfg.grid_a, cfg.grid_alpha});
    const auto g = grid_minimize(obj, starts, cfg.optimizer, cfg.threads, cfg.tie_tolerance, 2);
    fit.E = std::exp(g.x[0]);
    fit.A = std::exp(g.x[1]);
    fit.alpha = g.x[2];
    detail::copy_diagnostics(fit, g, pts.size(), cfg.record_inits);
    detail::settle_degenerate(fit);
    return fit;
}

inline ShiftedPowerLawFit fit_shifted_power_law(std::span<const CurvePoint> pts, const FitConfig& cfg, XKind kind) {
    cfg.validate();
    ShiftedPowerLawFit fit;
    fit.x_kind = kind;
    fit.x_scale = cfg.rescale.for_kind(kind);
    fit.lambda_frozen = cfg.freeze_lambda;
    std::vector<double> x, loss;
    detail::prepare_curve(pts, fit.x_scale, true, x, loss, fit.warnings);

    const ShiftedPowerLawObjective obj(x, loss, cfg.huber);
    GridOutcome g;
    if (!cfg.freeze_lambda) {
        const auto starts = detail::cartesian({cfg.grid_e, cfg.grid_a, cfg.grid_alpha, cfg.grid_lambda});
        g = grid_minimize(obj, starts, cfg.optimizer, cfg.threads, cfg.tie_tolerance, 2);
    } else {
        // lambda stays at its grid value; best over the lambda grid, ties to the earlier lambda
        const auto starts = detail::cartesian({cfg.grid_e, cfg.grid_a, cfg.grid_alpha});
        bool have = false;
        for (double lambda : cfg.grid_lambda) {
            const FrozenLambdaObjective frozen(obj, lambda);
            GridOutcome gl;
            try {
                gl = grid_minimize(frozen, starts, cfg.optimizer, cfg.threads, cfg.tie_tolerance, 2);
            } catch (const Error&) {
                continue;
            }
            gl.x.push_back(lambda);
            gl.init.push_back(lambda);
            if (!have || gl.objective < g.objective - cfg.tie_tolerance) {
                auto all = std::move(g.all_objectives);
                g = std::move(gl);
                all.insert(all.end(), g.all_objectives.begin(), g.all_objectives.end());
                g.all_objectives = std::move(all);
                have = true;
            } else {
                g.all_objectives.insert(g.all_objectives.end(), gl.all_objectives.begin(), gl.all_objectives.end());
            }
        }
        if (!have) fail(ErrorKind::numerical, "fit: every grid start diverged");
    }
    fit.E = std::exp(g.x[0]);
    fit.A = std::exp(g.x[1]);
    fit.alpha = g.x[2];
    fit.lambda = g.x[3];
    detail::copy_diagnostics(fit, g, pts.size(), cfg.record_inits);
    detail::settle_degenerate(fit);
    return fit;
}

inline JointFit fit_joint(std::span<const JointPoint> pts, const FitConfig& cfg) {
    cfg.validate();
    JointFit fit;
    fit.n_scale = cfg.rescale.n_scale;
    fit.d_scale = cfg.rescale.d_scale;
    if (pts.size() < 5) fail(ErrorKind::input, "joint fit: need at least 5 points, got " + std::to_string(pts.size()));
    std::vector<JointPoint> scaled;
    std::vector<double> ns, ds;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        JointPoint p{pts[i].n / fit.n_scale, pts[i].d / fit.d_scale, detail::clamp_loss(pts[i].loss, i, fit.warnings)};
        if (!(p.n > 0.0) || !(p.d > 0.0) || !std::isfinite(p.n) || !std::isfinite(p.d))
            fail(ErrorKind::input, "joint fit: N and D must be positive (point " + std::to_string(i) + ")");
        ns.push_back(p.n);
        ds.push_back(p.d);
        scaled.push_back(p);
    }
    if (detail::count_distinct(ns) < 2 || detail::count_distinct(ds) < 2)
        fail(ErrorKind::input, "joint fit: need at least 2 distinct N and 2 distinct D values");

    const JointObjective obj(scaled, cfg.huber);
    const auto starts = detail::cartesian({cfg.grid_e, cfg.grid_a, cfg.grid_alpha, cfg.grid_a, cfg.grid_alpha});
    const auto g = grid_minimize(obj, starts, cfg.optimizer, cfg.threads, cfg.tie_tolerance, 2);
    fit.E = std::exp(g.x[0]);
    fit.A = std::exp(g.x[1]);
    fit.alpha = g.x[2];
    fit.B = std::exp(g.x[3]);
    fit.beta = g.x[4];
    detail::copy_diagnostics(fit, g, pts.size(), cfg.record_inits);
    if (fit.alpha < kDegenerateThreshold) {
        fit.E += fit.A;
        fit.A = 0.0;
        fit.alpha = 0.0;
    }
    if (fit.beta < kDegenerateThreshold) {
        fit.E += fit.B;
        fit.B = 0.0;
        fit.beta = 0.0;
    }
    fit.degenerate = fit.A < kDegenerateThreshold || fit.alpha < kDegenerateThreshold ||
                     fit.B < kDegenerateThreshold || fit.beta < kDegenerateThreshold;
    return fit;
}

// ---------------------------------------------------------------------------
// Prediction. `x`, `n`, `d` are in the fit's rescaled units; the *_raw
// overloads divide by the stored scale first.

inline Prediction make_prediction(double L) { return {L, 1.0 - L}; }

inline Prediction predict(const PowerLawFit& f, double x) {
    if (!(x > 0.0)) fail(ErrorKind::usage, "predict: x must be positive");
    return make_prediction(f.E + f.A * std::pow(x, -f.alpha));
}

inline Prediction predict(const ShiftedPowerLawFit& f, double x) {
    if (!(x >= 0.0)) fail(ErrorKind::usage, "predict: x must be non-negative");
    return make_prediction(f.E + f.A * std::pow(x + std::pow(10.0, f.lambda), -f.alpha));
}

inline Prediction predict(const JointFit& f, double n, double d) {
    if (!(n > 0.0) || !(d > 0.0)) fail(ErrorKind::usage, "predict: N and D must be positive");
    return make_prediction(f.E + f.A * std::pow(n, -f.alpha) + f.B * std::pow(d, -f.beta));
}

inline Prediction predict_raw(const PowerLawFit& f, double x) { return predict(f, x / f.x_scale); }
inline Prediction predict_raw(const ShiftedPowerLawFit& f, double x) { return predict(f, x / f.x_scale); }
inline Prediction predict_raw(const JointFit& f, double n, double d) {
    return predict(f, n / f.n_scale, d / f.d_scale);
}

/// Amplitude for raw units: A (X/s)^-alpha == (A s^alpha) X^-alpha.
inline double amplitude_in_raw_units(double A, double alpha, double scale) { return A * std::pow(scale, alpha); }
inline double amplitude_in_scaled_units(double A_raw, double alpha, double scale) {
    return A_raw * std::pow(scale, -alpha);
}

struct Gain {
    double value = 0.0;
    bool degenerate = false;
};

/// Alignment gain A * 10^alpha.
inline double region_gain(double A, double alpha) { return A * std::pow(10.0, alpha); }

/// Gain of a fitted curve; zero and flagged when the fit is degenerate.
inline Gain region_gain(const PowerLawFit& f) {
    if (f.degenerate || f.A < kDegenerateThreshold || f.alpha < kDegenerateThreshold) return {0.0, true};
    return {region_gain(f.A, f.alpha), false};
}

}  // namespace scalefit::fit
