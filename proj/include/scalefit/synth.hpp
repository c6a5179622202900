#pragma once

// Seeded synthetic generators used as oracles for the fitting and scoring code.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scalefit/alignment.hpp"
#include "scalefit/error.hpp"
#include "scalefit/records.hpp"
#include "scalefit/scaling_fit.hpp"

namespace scalefit::synth {

inline std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
    if (!(lo > 0.0 && hi > lo) || count < 2) fail(ErrorKind::usage, "log_spaced: need 0 < lo < hi and count >= 2");
    std::vector<double> out(count);
    const double a = std::log10(lo), b = std::log10(hi);
    for (std::size_t i = 0; i < count; ++i)
        out[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
    return out;
}

/// Samples-per-class values used when subsampling a classification dataset.
inline const std::vector<std::int64_t>& subsampling_levels() {
    static const std::vector<std::int64_t> levels{1, 3, 10, 30, 100, 300};
    return levels;
}

/// Samples seen for each subsampling level: d * classes * epochs.
inline std::vector<double> subsampled_samples_seen(std::int64_t classes, double epochs = 1.0) {
    std::vector<double> out;
    for (auto d : subsampling_levels()) out.push_back(static_cast<double>(d * classes) * epochs);
    return out;
}

enum class CurveForm { power, shifted, joint };

struct CurveParams {
    double E = 0.0;
    double A = 1.0;
    double alpha = 0.5;
    double lambda = 0.0;
    double B = 0.0;
    double beta = 0.0;
};

struct CurveGenerator {
    CurveForm form = CurveForm::power;
    CurveParams true_params;
    std::vector<double> x_grid;                  // power / shifted
    std::vector<double> n_grid, d_grid;          // joint: full cross product
    double noise_sigma_log = 0.0;
    std::uint64_t seed = 0;
};

inline double true_loss(const CurveGenerator& g, double x, double d = 0.0) {
    const auto& p = g.true_params;
    switch (g.form) {
        case CurveForm::power: return p.E + p.A * std::pow(x, -p.alpha);
        case CurveForm::shifted: return p.E + p.A * std::pow(x + std::pow(10.0, p.lambda), -p.alpha);
        case CurveForm::joint: return p.E + p.A * std::pow(x, -p.alpha) + p.B * std::pow(d, -p.beta);
    }
    return 0.0;
}

/// Noise is multiplicative in log space: L_obs = L_true * exp(eps), eps ~ N(0, sigma^2).
inline std::vector<fit::CurvePoint> gen_curve_points(const CurveGenerator& g) {
    if (g.form == CurveForm::joint) fail(ErrorKind::usage, "gen_curve_points: use gen_joint_points for the joint form");
    std::mt19937_64 rng(g.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<fit::CurvePoint> out;
    for (double x : g.x_grid) {
        if (!(x > 0.0)) fail(ErrorKind::usage, "generator: grid values must be positive");
        const double eps = g.noise_sigma_log > 0.0 ? g.noise_sigma_log * noise(rng) : 0.0;
        out.push_back({x, true_loss(g, x) * std::exp(eps)});
    }
    return out;
}

inline std::vector<fit::JointPoint> gen_joint_points(const CurveGenerator& g) {
    if (g.form != CurveForm::joint) fail(ErrorKind::usage, "gen_joint_points: generator is not joint");
    std::mt19937_64 rng(g.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<fit::JointPoint> out;
    for (double n : g.n_grid)
        for (double d : g.d_grid) {
            if (!(n > 0.0 && d > 0.0)) fail(ErrorKind::usage, "generator: grid values must be positive");
            const double eps = g.noise_sigma_log > 0.0 ? g.noise_sigma_log * noise(rng) : 0.0;
            out.push_back({n, d, true_loss(g, n, d) * std::exp(eps)});
        }
    return out;
}

// ---------------------------------------------------------------------------
// Neural benchmark.

struct BenchmarkGenerator {
    int n_stimuli = 500;
    int n_features = 20;
    int n_neuroids = 50;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    records::Region region = records::Region::IT;
    double ceiling = 1.0;
};

struct GeneratedBenchmark {
    alignment::BenchmarkData data;
    Eigen::MatrixXd map;  // features x neuroids, unit-norm columns
    /// Population Pearson r between the linear signal and the recording, per neuroid.
    std::vector<double> theoretical_r;
};

/// Noise SD that yields signal/total SD ratio `rho` for unit-variance signals.
inline double noise_for_ratio(double rho) {
    if (!(rho > 0.0 && rho <= 1.0)) fail(ErrorKind::usage, "noise_for_ratio: rho must lie in (0, 1]");
    return std::sqrt(1.0 / (rho * rho) - 1.0);
}

/// Activations are i.i.d. N(0, 1); recordings = activations * map + N(0, sigma^2).
/// Map columns have unit norm, so every neuroid's signal has unit variance and
/// r = 1 / sqrt(1 + sigma^2).
inline GeneratedBenchmark gen_benchmark(const BenchmarkGenerator& g) {
    if (g.n_stimuli < 20) fail(ErrorKind::usage, "gen_benchmark: need at least 20 stimuli");
    if (g.n_features < 1 || g.n_neuroids < 1) fail(ErrorKind::usage, "gen_benchmark: dimensions must be positive");
    if (g.noise_sigma < 0.0) fail(ErrorKind::usage, "gen_benchmark: noise must be non-negative");
    std::mt19937_64 rng(g.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    GeneratedBenchmark out;
    auto& d = out.data;
    d.region = g.region;
    d.ceiling = g.ceiling;
    d.activations.resize(g.n_stimuli, g.n_features);
    for (Eigen::Index i = 0; i < d.activations.size(); ++i) d.activations.data()[i] = normal(rng);
    out.map.resize(g.n_features, g.n_neuroids);
    for (Eigen::Index i = 0; i < out.map.size(); ++i) out.map.data()[i] = normal(rng);
    out.map.colwise().normalize();
    d.recordings = d.activations * out.map;
    if (g.noise_sigma > 0.0)
        for (Eigen::Index i = 0; i < d.recordings.size(); ++i) d.recordings.data()[i] += g.noise_sigma * normal(rng);
    for (int i = 0; i < g.n_stimuli; ++i) d.stimulus_ids.push_back("s" + std::to_string(i));
    out.theoretical_r.assign(static_cast<std::size_t>(g.n_neuroids), 1.0 / std::sqrt(1.0 + g.noise_sigma * g.noise_sigma));
    return out;
}

// ---------------------------------------------------------------------------
// Behavioral task: isotropic Gaussian blobs with equal priors.

struct BehaviorGenerator {
    int n_classes = 4;
    int n_features = 8;
    int n_train = 2160;
    int n_test = 240;
    double separation = 1.0;  // SD of class-mean coordinates
    std::uint64_t seed = 0;
    double ceiling = 1.0;
};

struct GeneratedBehavior {
    alignment::BehaviorData data;
    Eigen::MatrixXd class_means;  // classes x features
};

/// Bayes posterior p(k | x) for unit-variance isotropic blobs with equal priors.
inline Eigen::MatrixXd bayes_posterior(const Eigen::MatrixXd& means, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd logits = x * means.transpose();
    for (Eigen::Index k = 0; k < means.rows(); ++k) logits.col(k).array() -= 0.5 * means.row(k).squaredNorm();
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        logits.row(i) = (logits.row(i).array() - mx).exp();
        logits.row(i) /= logits.row(i).sum();
    }
    return logits;
}

/// Train/test blobs; the reference pattern is the Bayes-optimal confusion pattern.
inline GeneratedBehavior gen_behavior(const BehaviorGenerator& g) {
    if (g.n_classes < 2 || g.n_features < 1 || g.n_train < g.n_classes || g.n_test < 1)
        fail(ErrorKind::usage, "gen_behavior: invalid dimensions");
    std::mt19937_64 rng(g.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    GeneratedBehavior out;
    out.class_means.resize(g.n_classes, g.n_features);
    for (Eigen::Index i = 0; i < out.class_means.size(); ++i) out.class_means.data()[i] = g.separation * normal(rng);
    auto sample = [&](int count, Eigen::MatrixXd& x, std::vector<int>& labels) {
        x.resize(count, g.n_features);
        labels.resize(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) {
            const int k = i % g.n_classes;
            labels[static_cast<std::size_t>(i)] = k;
            for (int f = 0; f < g.n_features; ++f) x(i, f) = out.class_means(k, f) + normal(rng);
        }
    };
    auto& d = out.data;
    sample(g.n_train, d.train_features, d.train_labels);
    sample(g.n_test, d.test_features, d.test_labels);
    d.primate_pattern = alignment::confusion_pattern(bayes_posterior(out.class_means, d.test_features), d.test_labels);
    d.ceiling = g.ceiling;
    return out;
}

// ---------------------------------------------------------------------------
// Run tables for the CLI: every region score is set to S = 1 - L.

inline records::RunRecord synthetic_run(std::size_t index, double n_params, double samples_seen, double flops, double loss) {
    records::RunRecord r;
    r.run_id = "sim" + std::to_string(index);
    r.family = "Synthetic";
    r.arch = "synthetic";
    r.dataset = "synthetic";
    r.samples_per_class = records::SamplesPerClass::full();
    r.n_params = std::max<std::int64_t>(1, std::llround(n_params));
    r.samples_seen = std::max<std::int64_t>(1, std::llround(samples_seen));
    r.flops = flops;
    const double s = 1.0 - loss;
    if (!(s >= 0.0 && s <= 1.0))
        fail(ErrorKind::usage, "simulate: score " + std::to_string(s) + " at point " + std::to_string(index) +
                                   " leaves [0, 1]; choose a grid where the curve stays in range");
    for (auto reg : records::kAllRegions) r.set_score(reg, s);
    return r;
}

}  // namespace scalefit::synth
