#pragma once

// Benchmark scoring: cross-validated linear readout for neural recordings,
// confusion-pattern correlation for behavior, and ceiling normalization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "scalefit/error.hpp"
#include "scalefit/numerics.hpp"
#include "scalefit/records.hpp"
#include "scalefit/uncertainty.hpp"

namespace scalefit::alignment {

using Matrix = Eigen::MatrixXd;

struct BenchmarkData {
    std::vector<std::string> stimulus_ids;
    Matrix activations;  // stimuli x features
    Matrix recordings;   // stimuli x neuroids
    double ceiling = 1.0;
    records::Region region = records::Region::IT;

    void validate() const {
        if (activations.rows() != recordings.rows())
            fail(ErrorKind::input, "benchmark: activations have " + std::to_string(activations.rows()) +
                                       " stimuli, recordings have " + std::to_string(recordings.rows()));
        if (!stimulus_ids.empty() && static_cast<Eigen::Index>(stimulus_ids.size()) != activations.rows())
            fail(ErrorKind::input, "benchmark: stimulus id count does not match matrix rows");
        if (!activations.allFinite() || !recordings.allFinite())
            fail(ErrorKind::input, "benchmark: matrices contain NaN or infinite entries");
        if (!(ceiling > 0.0)) fail(ErrorKind::usage, "benchmark: ceiling must be positive");
        if (region == records::Region::behavior) fail(ErrorKind::usage, "benchmark: neural data needs a neural region");
    }
};

struct BehaviorData {
    Matrix train_features;
    std::vector<int> train_labels;
    Matrix test_features;
    std::vector<int> test_labels;
    /// Image-major, class-ascending probabilities of the incorrect classes.
    std::vector<double> primate_pattern;
    double ceiling = 1.0;
};

enum class Aggregate { median, mean };

struct ScoreReport {
    records::Region region = records::Region::IT;
    double raw = 0.0;
    double ceiled = 0.0;
    double ceiling = 1.0;
    std::vector<double> per_neuroid;
    int n_repeats = 0;
    std::uint64_t seed = 0;
    Aggregate aggregate = Aggregate::median;
    std::vector<std::string> warnings;
};

/// raw / ceiling; values above 1 are kept and reported as a warning.
inline double ceiling_normalize(double raw, double ceiling, std::vector<std::string>* warnings = nullptr) {
    if (!(ceiling > 0.0)) fail(ErrorKind::usage, "ceiling must be positive");
    if (ceiling > 1.0 && warnings) warnings->push_back("ceiling " + std::to_string(ceiling) + " exceeds 1");
    const double v = raw / ceiling;
    if (v > 1.0 && warnings)
        warnings->push_back("score " + std::to_string(raw) + " exceeds its ceiling " + std::to_string(ceiling));
    return v;
}

struct NeuralScoreOptions {
    int repeats = 10;
    double train_fraction = 0.9;
    std::uint64_t seed = 0;
    double ridge = 0.0;
    Aggregate aggregate = Aggregate::median;
};

/// Linear map from centered features to centered responses. Minimum-norm
/// least squares when ridge is zero.
inline Matrix fit_readout(const Matrix& x, const Matrix& y, double ridge) {
    if (ridge > 0.0) {
        Matrix gram = x.transpose() * x;
        gram.diagonal().array() += ridge;
        return gram.ldlt().solve(x.transpose() * y);
    }
    return x.completeOrthogonalDecomposition().solve(y);
}

inline ScoreReport neural_score(const BenchmarkData& data, const NeuralScoreOptions& opt = {}) {
    data.validate();
    const Eigen::Index n = data.activations.rows();
    const Eigen::Index k = data.recordings.cols();
    if (n < 20) fail(ErrorKind::input, "neural score: need at least 20 stimuli, got " + std::to_string(n));
    if (!(opt.train_fraction > 0.5 && opt.train_fraction <= 0.95))
        fail(ErrorKind::usage, "neural score: train fraction must lie in (0.5, 0.95]");
    if (opt.repeats < 1) fail(ErrorKind::usage, "neural score: repeats must be positive");
    if (opt.ridge < 0.0) fail(ErrorKind::usage, "neural score: ridge must be non-negative");
    const auto n_train = static_cast<Eigen::Index>(std::llround(opt.train_fraction * static_cast<double>(n)));
    const Eigen::Index n_test = n - n_train;
    if (n_test < 3) fail(ErrorKind::input, "neural score: fewer than 3 held-out stimuli");

    ScoreReport rep;
    rep.region = data.region;
    rep.ceiling = data.ceiling;
    rep.n_repeats = opt.repeats;
    rep.seed = opt.seed;
    rep.aggregate = opt.aggregate;

    std::vector<double> r_sum(static_cast<std::size_t>(k), 0.0);
    std::vector<int> r_count(static_cast<std::size_t>(k), 0);
    std::vector<double> repeat_scores;
    for (int rep_i = 0; rep_i < opt.repeats; ++rep_i) {
        auto rng = uncertainty::resample_rng(opt.seed, static_cast<std::size_t>(rep_i));
        std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), Eigen::Index{0});
        std::shuffle(perm.begin(), perm.end(), rng);

        Matrix xtr(n_train, data.activations.cols()), ytr(n_train, k);
        Matrix xte(n_test, data.activations.cols()), yte(n_test, k);
        for (Eigen::Index i = 0; i < n_train; ++i) {
            xtr.row(i) = data.activations.row(perm[static_cast<std::size_t>(i)]);
            ytr.row(i) = data.recordings.row(perm[static_cast<std::size_t>(i)]);
        }
        for (Eigen::Index i = 0; i < n_test; ++i) {
            xte.row(i) = data.activations.row(perm[static_cast<std::size_t>(n_train + i)]);
            yte.row(i) = data.recordings.row(perm[static_cast<std::size_t>(n_train + i)]);
        }
        const Eigen::RowVectorXd mx = xtr.colwise().mean();
        const Eigen::RowVectorXd my = ytr.colwise().mean();
        const Matrix w = fit_readout(xtr.rowwise() - mx, ytr.rowwise() - my, opt.ridge);
        const Matrix pred = ((xte.rowwise() - mx) * w).rowwise() + my;

        std::vector<double> rs;
        for (Eigen::Index j = 0; j < k; ++j) {
            std::vector<double> a(pred.col(j).data(), pred.col(j).data() + n_test);
            std::vector<double> b(yte.col(j).data(), yte.col(j).data() + n_test);
            const double r = numerics::pearson(a, b);
            if (std::isnan(r)) {
                rep.warnings.push_back("repeat " + std::to_string(rep_i) + ": neuroid " + std::to_string(j) +
                                       " has zero variance on the held-out split; excluded");
                continue;
            }
            rs.push_back(r);
            r_sum[static_cast<std::size_t>(j)] += r;
            ++r_count[static_cast<std::size_t>(j)];
        }
        if (rs.empty()) fail(ErrorKind::input, "neural score: no neuroid has a defined correlation");
        repeat_scores.push_back(opt.aggregate == Aggregate::median
                                    ? numerics::median(rs)
                                    : std::accumulate(rs.begin(), rs.end(), 0.0) / static_cast<double>(rs.size()));
    }
    for (std::size_t j = 0; j < r_sum.size(); ++j)
        rep.per_neuroid.push_back(r_count[j] ? r_sum[j] / r_count[j] : std::numeric_limits<double>::quiet_NaN());
    rep.raw = std::accumulate(repeat_scores.begin(), repeat_scores.end(), 0.0) / static_cast<double>(repeat_scores.size());
    rep.ceiled = ceiling_normalize(rep.raw, rep.ceiling, &rep.warnings);
    return rep;
}

// ---------------------------------------------------------------------------
// Behavior.

struct LogisticOptions {
    double l2 = 1e-4;
    double grad_tol = 1e-6;
    int max_iters = 5000;
};

/// Multinomial logistic regression; classes are 0..n_classes-1.
class LogisticClassifier {
public:
    LogisticClassifier() = default;

    void fit(const Matrix& x, const std::vector<int>& labels, int n_classes, const LogisticOptions& opt = {}) {
        const Eigen::Index n = x.rows(), f = x.cols();
        if (static_cast<Eigen::Index>(labels.size()) != n) fail(ErrorKind::input, "classifier: label count mismatch");
        std::vector<int> seen(static_cast<std::size_t>(n_classes), 0);
        for (int l : labels) {
            if (l < 0 || l >= n_classes) fail(ErrorKind::input, "classifier: label out of range");
            seen[static_cast<std::size_t>(l)] = 1;
        }
        if (std::find(seen.begin(), seen.end(), 0) != seen.end())
            fail(ErrorKind::input, "classifier: a class is absent from the training set");
        n_classes_ = n_classes;
        features_ = f;
        const Eigen::Index k = n_classes;
        auto objective = [&](std::span<const double> p, std::span<double> g) {
            Eigen::Map<const Matrix> w(p.data(), f, k);
            Eigen::Map<const Eigen::RowVectorXd> b(p.data() + f * k, k);
            Matrix logits = (x * w).rowwise() + b;
            double loss = 0.0;
            Matrix resid(n, k);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double mx = logits.row(i).maxCoeff();
                const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
                const double s = e.sum();
                loss += mx + std::log(s) - logits(i, labels[static_cast<std::size_t>(i)]);
                resid.row(i) = e / s;
                resid(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
            }
            const double inv_n = 1.0 / static_cast<double>(n);
            loss = loss * inv_n + 0.5 * opt.l2 * w.squaredNorm();
            if (!g.empty()) {
                Eigen::Map<Matrix> gw(g.data(), f, k);
                Eigen::Map<Eigen::RowVectorXd> gb(g.data() + f * k, k);
                gw = x.transpose() * resid * inv_n + opt.l2 * w;
                gb = resid.colwise().sum() * inv_n;
            }
            return loss;
        };
        numerics::OptimizerConfig cfg;
        cfg.grad_tol = opt.grad_tol;
        cfg.max_iters = opt.max_iters;
        auto res = numerics::minimize(objective, std::vector<double>(static_cast<std::size_t>((f + 1) * k), 0.0), cfg);
        params_ = std::move(res.x_star);
        converged_ = res.converged;
    }

    /// Class probabilities, rows = samples.
    Matrix predict_proba(const Matrix& x) const {
        if (x.cols() != features_) fail(ErrorKind::input, "classifier: feature count mismatch");
        const Eigen::Index k = n_classes_;
        Eigen::Map<const Matrix> w(params_.data(), features_, k);
        Eigen::Map<const Eigen::RowVectorXd> b(params_.data() + features_ * k, k);
        Matrix logits = (x * w).rowwise() + b;
        for (Eigen::Index i = 0; i < logits.rows(); ++i) {
            const double mx = logits.row(i).maxCoeff();
            logits.row(i) = (logits.row(i).array() - mx).exp();
            logits.row(i) /= logits.row(i).sum();
        }
        return logits;
    }

    bool converged() const { return converged_; }

private:
    std::vector<double> params_;
    Eigen::Index features_ = 0;
    int n_classes_ = 0;
    bool converged_ = false;
};

/// Probabilities of the incorrect classes, image-major, class ascending.
inline std::vector<double> confusion_pattern(const Matrix& proba, const std::vector<int>& true_labels) {
    if (static_cast<Eigen::Index>(true_labels.size()) != proba.rows())
        fail(ErrorKind::input, "pattern: label count does not match probability rows");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(proba.rows() * (proba.cols() - 1)));
    for (Eigen::Index i = 0; i < proba.rows(); ++i)
        for (Eigen::Index c = 0; c < proba.cols(); ++c)
            if (c != true_labels[static_cast<std::size_t>(i)]) out.push_back(proba(i, c));
    return out;
}

inline int count_classes(const std::vector<int>& labels) {
    if (labels.empty()) fail(ErrorKind::input, "behavior: no training labels");
    return *std::max_element(labels.begin(), labels.end()) + 1;
}

/// Model confusion pattern on the test images.
inline std::vector<double> model_pattern(const BehaviorData& data, const LogisticOptions& opt = {}) {
    if (data.train_features.cols() != data.test_features.cols())
        fail(ErrorKind::input, "behavior: train and test feature counts differ");
    if (static_cast<Eigen::Index>(data.test_labels.size()) != data.test_features.rows())
        fail(ErrorKind::input, "behavior: test label count mismatch");
    const int k = count_classes(data.train_labels);
    for (int l : data.test_labels)
        if (l < 0 || l >= k) fail(ErrorKind::input, "behavior: test label outside the training label set");
    LogisticClassifier clf;
    clf.fit(data.train_features, data.train_labels, k, opt);
    return confusion_pattern(clf.predict_proba(data.test_features), data.test_labels);
}

/// Pearson correlation between model and primate confusion patterns.
/// The fit is deterministic; `seed` is recorded for provenance only.
inline ScoreReport behavior_score(const BehaviorData& data, std::uint64_t seed = 0, const LogisticOptions& opt = {}) {
    const auto pattern = model_pattern(data, opt);
    if (pattern.size() != data.primate_pattern.size())
        fail(ErrorKind::input, "behavior: pattern length " + std::to_string(data.primate_pattern.size()) +
                                   " does not match model pattern length " + std::to_string(pattern.size()));
    ScoreReport rep;
    rep.region = records::Region::behavior;
    rep.ceiling = data.ceiling;
    rep.seed = seed;
    rep.n_repeats = 1;
    const double r = numerics::pearson(pattern, data.primate_pattern);
    if (std::isnan(r)) fail(ErrorKind::input, "behavior: a pattern has zero variance");
    rep.raw = r;
    rep.ceiled = ceiling_normalize(r, data.ceiling, &rep.warnings);
    return rep;
}

}  // namespace scalefit::alignment
