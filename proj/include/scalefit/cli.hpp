#pragma once

// Command-line front end: ingest, fit, allocate, bootstrap, score, simulate, report.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "scalefit/alignment.hpp"
#include "scalefit/allocation.hpp"
#include "scalefit/csv.hpp"
#include "scalefit/error.hpp"
#include "scalefit/records.hpp"
#include "scalefit/report.hpp"
#include "scalefit/scaling_fit.hpp"
#include "scalefit/synth.hpp"
#include "scalefit/uncertainty.hpp"

namespace scalefit::cli {

using nlohmann::json;

inline std::uint64_t default_seed() {
    if (const char* env = std::getenv("SCALEFIT_SEED")) {
        if (auto v = csv::to_int(env); v && *v >= 0) return static_cast<std::uint64_t>(*v);
        fail(ErrorKind::usage, "SCALEFIT_SEED must be a non-negative integer");
    }
    return 0;
}

/// Timestamp and command line go to `<output>.log`, never into the output itself.
inline void write_sidecar(const std::string& output, const std::vector<std::string>& argv) {
    std::ofstream log(output + ".log");
    if (!log) return;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[64];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    log << "written: " << buf << "\ncommand:";
    for (const auto& a : argv) log << ' ' << a;
    log << '\n';
}

inline std::string stem(const std::string& path) {
    const auto slash = path.find_last_of('/');
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path;
    return path.substr(0, dot);
}

// ---------------------------------------------------------------------------
// Shared fit options.

struct FitOptions {
    std::string input;
    std::string form = "power";
    std::string x;
    std::string target = "mean";
    std::string filter;
    std::vector<std::string> families;
    std::string group;
    bool average_seeds = false;
    double delta = 1e-3;
    double c_scale = 1e13, n_scale = 1e5, d_scale = 1e4;
    bool freeze_lambda = false;
    unsigned threads = 1;
    int max_iters = 500;

    void add_to(CLI::App* app) {
        app->add_option("-i,--input", input, "Run table (CSV or JSON)")->required();
        app->add_option("--form", form, "Curve form")->check(CLI::IsMember({"power", "shifted", "joint"}))
            ->capture_default_str();
        app->add_option("--x", x, "Independent variable for power/shifted fits")
            ->check(CLI::IsMember({"flops", "params", "samples"}));
        app->add_option("--target", target, "Score to model: v1|v2|v4|it|behavior|brain|mean")
            ->check(CLI::IsMember({"v1", "v2", "v4", "it", "behavior", "brain", "mean"}))
            ->capture_default_str();
        app->add_option("--filter", filter, "Row filter rule (convnext_vit_restricted)");
        app->add_option("--families", families, "Keep only these families")->delimiter(',');
        app->add_option("--group", group, "Group label recorded in the report");
        app->add_flag("--average-seeds", average_seeds, "Average seed replicates before fitting");
        app->add_option("--delta", delta, "Huber delta")->capture_default_str();
        app->add_option("--c-scale", c_scale, "FLOPs rescale divisor")->capture_default_str();
        app->add_option("--n-scale", n_scale, "Parameter-count rescale divisor")->capture_default_str();
        app->add_option("--d-scale", d_scale, "Samples-seen rescale divisor")->capture_default_str();
        app->add_flag("--freeze-lambda", freeze_lambda, "Hold lambda at each grid value (shifted form)");
        app->add_option("--threads", threads, "Worker threads (0 = all cores)")->capture_default_str();
        app->add_option("--max-iters", max_iters, "BFGS iteration cap")->capture_default_str();
    }

    fit::FitConfig config() const {
        fit::FitConfig cfg;
        cfg.huber.delta = delta;
        cfg.rescale = {c_scale, n_scale, d_scale};
        cfg.freeze_lambda = freeze_lambda;
        cfg.threads = threads;
        cfg.optimizer.max_iters = max_iters;
        cfg.validate();
        return cfg;
    }

    uncertainty::FitKind kind() const { return uncertainty::parse_fit_kind(form); }

    void check() const {
        if (kind() != uncertainty::FitKind::joint && x.empty())
            fail(ErrorKind::usage, "--x is required for the " + form + " form");
    }
};

/// S of one run for a target: a region, `brain` (V1/V2/V4/IT) or `mean` (all five).
inline std::optional<double> target_score(const records::RunRecord& r, const std::string& target) {
    if (target == "mean" || target == "brain") {
        std::vector<records::Region> regions(records::kNeuralRegions.begin(), records::kNeuralRegions.end());
        if (target == "mean") regions.push_back(records::Region::behavior);
        for (auto reg : regions)
            if (!r.score(reg)) return std::nullopt;
        return records::aggregate_score(r, regions).S;
    }
    auto reg = records::parse_region(target);
    if (!reg) fail(ErrorKind::usage, "unknown target '" + target + "'");
    return r.score(*reg);
}

struct FitInput {
    records::RunTable table;
    std::vector<fit::CurvePoint> curve;
    std::vector<fit::JointPoint> joint;
    std::vector<std::size_t> clusters;
    std::vector<std::string> warnings;
};

inline FitInput load_fit_input(const FitOptions& o) {
    FitInput in;
    in.table = records::ingest(o.input);
    if (o.average_seeds) in.table = records::average_seeds(in.table);
    if (!o.filter.empty()) in.table = records::filter_for_fit(in.table, records::builtin_rule(o.filter));
    in.table = records::select_families(in.table, o.families);
    in.warnings = in.table.warnings;
    const auto kind = o.kind();
    const auto xk = kind == uncertainty::FitKind::joint ? fit::XKind::flops : fit::parse_x_kind(o.x);
    std::map<std::string, std::size_t> cluster_ids;
    for (const auto& r : in.table.rows) {
        const auto s = target_score(r, o.target);
        if (!s) {
            in.warnings.push_back("run " + r.run_id + ": no score for target '" + o.target + "', skipped");
            continue;
        }
        const double loss = 1.0 - *s;
        if (kind == uncertainty::FitKind::joint) {
            in.joint.push_back({static_cast<double>(r.n_params), static_cast<double>(r.samples_seen), loss});
        } else {
            const double x = xk == fit::XKind::flops    ? r.flops
                             : xk == fit::XKind::params ? static_cast<double>(r.n_params)
                                                        : static_cast<double>(r.samples_seen);
            in.curve.push_back({x, loss});
        }
        const auto key = r.arch + "\x1f" + r.dataset;
        in.clusters.push_back(cluster_ids.emplace(key, cluster_ids.size()).first->second);
    }
    return in;
}

inline uncertainty::AnyFit run_fit(const FitOptions& o, const FitInput& in, const fit::FitConfig& cfg) {
    switch (o.kind()) {
        case uncertainty::FitKind::power: return fit::fit_power_law(in.curve, cfg, fit::parse_x_kind(o.x));
        case uncertainty::FitKind::shifted: return fit::fit_shifted_power_law(in.curve, cfg, fit::parse_x_kind(o.x));
        case uncertainty::FitKind::joint: return fit::fit_joint(in.joint, cfg);
    }
    fail(ErrorKind::usage, "unknown form");
}

inline void append_warnings(json& j, const std::vector<std::string>& extra) {
    auto& w = j["warnings"];
    for (const auto& s : extra) w.push_back(s);
}

/// Curve samples across the observed range of the one-variable data.
inline std::vector<double> curve_grid(const std::vector<fit::CurvePoint>& pts, std::size_t count) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& p : pts) {
        if (p.x > 0.0) lo = std::min(lo, p.x);
        hi = std::max(hi, p.x);
    }
    if (!(hi > lo)) return {lo};
    return synth::log_spaced(lo, hi, count);
}

inline void emit_curve(const std::string& path, const uncertainty::AnyFit& f, const FitInput& in, std::size_t count,
                       const std::string& x_label, const uncertainty::BootstrapResult* bs = nullptr) {
    if (std::holds_alternative<fit::JointFit>(f)) {
        const auto& jf = std::get<fit::JointFit>(f);
        std::vector<double> ns, ds;
        for (const auto& p : in.joint) {
            ns.push_back(p.n);
            ds.push_back(p.d);
        }
        const auto [nlo, nhi] = std::minmax_element(ns.begin(), ns.end());
        const auto [dlo, dhi] = std::minmax_element(ds.begin(), ds.end());
        std::ostringstream out;
        out << "n,d,L,S\n";
        for (double n : synth::log_spaced(*nlo, std::max(*nhi, *nlo * 1.0001), 10))
            for (double d : synth::log_spaced(*dlo, std::max(*dhi, *dlo * 1.0001), 10)) {
                const auto p = fit::predict_raw(jf, n, d);
                out << csv::format_double(n) << ',' << csv::format_double(d) << ',' << csv::format_double(p.L) << ','
                    << csv::format_double(p.S) << '\n';
            }
        report::write_text(path, out.str());
        return;
    }
    std::vector<report::CurveSample> samples;
    if (bs) {
        for (const auto& b : bs->curve_ci) samples.push_back({b.at.x, b.estimate, b.lo, b.hi});
    } else {
        for (double x : curve_grid(in.curve, count))
            samples.push_back({x, uncertainty::predict_at(f, {x, 0.0})});
    }
    report::write_text(path, report::curve_csv(samples));
    if (samples.size() >= 2) report::write_text(stem(path) + ".svg", report::curve_svg(samples, x_label));
}

// ---------------------------------------------------------------------------
// Matrix CSVs for scoring.

struct LabeledMatrix {
    std::vector<std::string> ids;
    std::vector<std::string> labels;
    Eigen::MatrixXd values;
};

inline LabeledMatrix read_matrix(const std::string& path, bool with_label) {
    const auto t = csv::read_file(path);
    const std::size_t first = with_label ? 2 : 1;
    if (t.header.size() <= first) fail(ErrorKind::input, path + ": no value columns");
    if (with_label && t.header[1] != "label") fail(ErrorKind::input, path + ": second column must be 'label'");
    LabeledMatrix m;
    m.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size() - first));
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        m.ids.push_back(t.rows[i][0]);
        if (with_label) m.labels.push_back(t.rows[i][1]);
        for (std::size_t c = first; c < t.header.size(); ++c) {
            auto v = csv::to_double(t.rows[i][c]);
            if (!v || !std::isfinite(*v))
                fail(ErrorKind::input, path + ": row " + std::to_string(i + 1) + ", column " + t.header[c] +
                                           ": expected a finite number");
            m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c - first)) = *v;
        }
    }
    return m;
}

inline void write_matrix(const std::string& path, const std::vector<std::string>& ids,
                         const std::vector<std::string>* labels, const Eigen::MatrixXd& values, char prefix) {
    std::ostringstream out;
    out << "stim_id" << (labels ? ",label" : "");
    for (Eigen::Index c = 0; c < values.cols(); ++c) out << ',' << prefix << c;
    out << '\n';
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        out << ids[static_cast<std::size_t>(i)];
        if (labels) out << ',' << (*labels)[static_cast<std::size_t>(i)];
        for (Eigen::Index c = 0; c < values.cols(); ++c) out << ',' << csv::format_double(values(i, c));
        out << '\n';
    }
    report::write_text(path, out.str());
}

/// Class order: numeric when every label is an integer, otherwise lexicographic.
inline std::vector<std::string> class_order(const std::vector<std::string>& labels) {
    std::set<std::string> uniq(labels.begin(), labels.end());
    std::vector<std::string> out(uniq.begin(), uniq.end());
    const bool numeric = std::all_of(out.begin(), out.end(), [](const std::string& s) { return csv::to_int(s).has_value(); });
    if (numeric)
        std::sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) { return *csv::to_int(a) < *csv::to_int(b); });
    return out;
}

// ---------------------------------------------------------------------------
// Subcommands.

inline int cmd_ingest(const std::string& input, const std::string& format, bool average, const std::string& filter,
                      const std::string& output, std::ostream& out) {
    auto t = format.empty() ? records::ingest(input)
                            : records::ingest(input, format == "json" ? records::Format::json : records::Format::csv);
    if (average) t = records::average_seeds(t);
    if (!filter.empty()) t = records::filter_for_fit(t, records::builtin_rule(filter));
    out << "rows: " << t.rows.size() << "\n";
    for (const auto& w : t.warnings) out << "warning: " << w << "\n";
    if (!output.empty()) records::export_table(t, output, records::format_from_path(output));
    return 0;
}

struct AllocateOptions {
    std::string fit_path;
    std::string compute_model_path;
    std::string compute_runs;
    std::string compute_model_out;
    std::optional<double> m, n;
    std::optional<double> budget, budget_flops;
    bool verify = false;
    std::size_t grid_points = 10000;
    std::string output;
};

inline int cmd_allocate(const AllocateOptions& o, std::ostream& out) {
    const auto loaded = report::fit_from_json(report::read_json_file(o.fit_path), o.fit_path);
    const auto* jf = std::get_if<fit::JointFit>(&loaded.fit);
    if (!jf) fail(ErrorKind::usage, "allocate: needs a joint fit report");
    alloc::ComputeModel cm;
    const int sources = int(!o.compute_model_path.empty()) + int(!o.compute_runs.empty()) + int(o.m.has_value() || o.n.has_value());
    if (sources != 1)
        fail(ErrorKind::usage, "allocate: give exactly one of --compute-model, --fit-compute-model or --m/--n");
    if (!o.compute_model_path.empty()) {
        cm = report::compute_model_from_json(report::read_json_file(o.compute_model_path), o.compute_model_path);
    } else if (!o.compute_runs.empty()) {
        cm = alloc::fit_compute_model(records::ingest(o.compute_runs), loaded.rescale);
        if (!o.compute_model_out.empty())
            report::write_json_file(o.compute_model_out, report::compute_model_json(cm, loaded.rescale));
    } else {
        if (!o.m || !o.n) fail(ErrorKind::usage, "allocate: --m and --n go together");
        if (!(*o.m > 0.0 && *o.n > 0.0)) fail(ErrorKind::usage, "allocate: --m and --n must be positive");
        cm.m = *o.m;
        cm.n = *o.n;
    }
    if (o.budget.has_value() == o.budget_flops.has_value())
        fail(ErrorKind::usage, "allocate: give exactly one of --budget or --budget-flops");
    const double budget = o.budget ? *o.budget : *o.budget_flops / loaded.rescale.c_scale;
    if (!(budget > 0.0)) fail(ErrorKind::usage, "allocate: budget must be positive");

    const auto coeff = alloc::allocation_coefficients(*jf);
    const auto res = alloc::optimal_allocation(*jf, cm, budget);
    auto j = report::allocation_json(res, coeff, cm, loaded.rescale);
    if (o.verify) {
        const auto bf = alloc::brute_force_allocation(*jf, cm, budget, {o.grid_points, 12.0});
        const double disc = std::abs(std::log10(bf.n_star) - std::log10(res.n_star));
        j["verify"] = {{"n_star", bf.n_star},
                       {"d_star", bf.d_star},
                       {"predicted_L", bf.predicted_L},
                       {"grid_points", o.grid_points},
                       {"grid_step_log10", bf.grid_step_log10},
                       {"log10_discrepancy", disc},
                       {"within_one_cell", disc <= bf.grid_step_log10}};
    }
    out << "N* = " << res.n_star << "  D* = " << res.d_star << "  (rescaled units)  L = " << res.predicted_L << "\n";
    if (!o.output.empty()) report::write_json_file(o.output, j);
    else out << j.dump(2) << "\n";
    return 0;
}

struct ScoreOptions {
    std::string region;
    double ceiling = 1.0;
    std::string activations, recordings;
    std::string train, test, pattern;
    int repeats = 10;
    double train_fraction = 0.9;
    double ridge = 0.0;
    std::string aggregate = "median";
    std::uint64_t seed = 0;
    std::string output;
    std::string append_to;
    std::string run_id;
};

inline alignment::ScoreReport score_behavior(const ScoreOptions& o) {
    if (o.train.empty() || o.test.empty() || o.pattern.empty())
        fail(ErrorKind::usage, "score: behavior needs --train, --test and --pattern");
    const auto tr = read_matrix(o.train, true);
    const auto te = read_matrix(o.test, true);
    if (tr.values.cols() != te.values.cols()) fail(ErrorKind::input, "score: train and test feature counts differ");
    const auto classes = class_order(tr.labels);
    std::map<std::string, int> index;
    for (std::size_t k = 0; k < classes.size(); ++k) index[classes[k]] = static_cast<int>(k);
    alignment::BehaviorData d;
    d.train_features = tr.values;
    d.test_features = te.values;
    d.ceiling = o.ceiling;
    for (const auto& l : tr.labels) d.train_labels.push_back(index.at(l));
    for (const auto& l : te.labels) {
        auto it = index.find(l);
        if (it == index.end()) fail(ErrorKind::input, "score: test label '" + l + "' absent from training labels");
        d.test_labels.push_back(it->second);
    }
    const auto pt = csv::read_file(o.pattern);
    if (pt.header != std::vector<std::string>{"image_id", "class", "probability"})
        fail(ErrorKind::input, o.pattern + ": header must be image_id,class,probability");
    std::map<std::pair<std::string, std::string>, double> cells;
    for (const auto& row : pt.rows) {
        auto v = csv::to_double(row[2]);
        if (!v) fail(ErrorKind::input, o.pattern + ": probability must be numeric");
        cells[{row[0], row[1]}] = *v;
    }
    for (std::size_t i = 0; i < te.ids.size(); ++i)
        for (const auto& c : classes) {
            if (c == te.labels[i]) continue;
            auto it = cells.find({te.ids[i], c});
            if (it == cells.end())
                fail(ErrorKind::input, o.pattern + ": no entry for image " + te.ids[i] + ", class " + c);
            d.primate_pattern.push_back(it->second);
        }
    if (d.primate_pattern.size() != cells.size())
        fail(ErrorKind::input, o.pattern + ": pattern has " + std::to_string(cells.size()) + " entries, expected " +
                                   std::to_string(d.primate_pattern.size()));
    return alignment::behavior_score(d, o.seed);
}

inline int cmd_score(const ScoreOptions& o, std::ostream& out) {
    const auto region = records::parse_region(o.region);
    if (!region) fail(ErrorKind::usage, "score: unknown region '" + o.region + "'");
    alignment::ScoreReport rep;
    if (*region == records::Region::behavior) {
        rep = score_behavior(o);
    } else {
        if (o.activations.empty() || o.recordings.empty())
            fail(ErrorKind::usage, "score: neural regions need --activations and --recordings");
        const auto a = read_matrix(o.activations, false);
        const auto r = read_matrix(o.recordings, false);
        if (a.values.rows() != r.values.rows())
            fail(ErrorKind::input, "score: shape mismatch, " + std::to_string(a.values.rows()) + " activation rows vs " +
                                       std::to_string(r.values.rows()) + " recording rows");
        if (a.ids != r.ids) fail(ErrorKind::input, "score: stimulus ids differ between activations and recordings");
        alignment::BenchmarkData d{a.ids, a.values, r.values, o.ceiling, *region};
        alignment::NeuralScoreOptions opt;
        opt.repeats = o.repeats;
        opt.train_fraction = o.train_fraction;
        opt.seed = o.seed;
        opt.ridge = o.ridge;
        opt.aggregate = o.aggregate == "mean" ? alignment::Aggregate::mean : alignment::Aggregate::median;
        rep = alignment::neural_score(d, opt);
    }
    const auto j = report::score_json(rep);
    out << records::region_name(rep.region) << ": raw = " << rep.raw << ", ceiled = " << rep.ceiled << "\n";
    for (const auto& w : rep.warnings) out << "warning: " << w << "\n";
    if (!o.output.empty()) report::write_json_file(o.output, j);
    if (!o.append_to.empty()) {
        if (o.run_id.empty()) fail(ErrorKind::usage, "score: --append-to needs --run-id");
        auto table = records::ingest(o.append_to);
        bool found = false;
        for (auto& row : table.rows)
            if (row.run_id == o.run_id) {
                row.set_score(rep.region, std::clamp(rep.ceiled, 0.0, 1.0));
                found = true;
            }
        if (!found) fail(ErrorKind::input, "score: run '" + o.run_id + "' not found in " + o.append_to);
        records::export_table(table, o.append_to, records::format_from_path(o.append_to));
    }
    return 0;
}

inline int cmd_report(const std::vector<std::string>& paths, const std::vector<std::string>& expect,
                      const std::string& output, std::ostream& out) {
    std::vector<report::LoadedFit> fits;
    for (const auto& p : paths) fits.push_back(report::fit_from_json(report::read_json_file(p), p));
    std::set<std::string> have;
    for (const auto& f : fits) have.insert(records::to_lower(f.labels.target));
    for (const auto& e : expect)
        if (!have.count(records::to_lower(e))) fail(ErrorKind::input, "report: missing region report for '" + e + "'");
    const auto rows = report::gain_table(fits);
    out << report::gain_table_text(rows);
    if (!output.empty()) report::write_json_file(output, report::gain_table_json(rows));
    return 0;
}

// ---------------------------------------------------------------------------

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"scalefit: scaling-law fits, compute-optimal allocation and alignment scoring", "scalefit"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    bool seed_given = false;
    auto seed_opt = [&](CLI::App* sub) {
        sub->add_option_function<std::uint64_t>(
            "--seed", [&](const std::uint64_t& v) { seed = v; seed_given = true; }, "Random seed (env SCALEFIT_SEED)");
    };

    // ingest
    std::string ing_input, ing_format, ing_filter, ing_output;
    bool ing_average = false;
    auto* ingest = app.add_subcommand("ingest", "Validate a run table and optionally convert it");
    ingest->add_option("-i,--input", ing_input, "Run table")->required();
    ingest->add_option("--format", ing_format, "csv or json (default: from extension)")->check(CLI::IsMember({"csv", "json"}));
    ingest->add_flag("--average-seeds", ing_average, "Average seed replicates");
    ingest->add_option("--filter", ing_filter, "Row filter rule");
    ingest->add_option("-o,--output", ing_output, "Normalized table (.csv or .json)");

    // fit
    FitOptions fo;
    std::string fit_output, fit_curve;
    std::size_t fit_curve_points = 100;
    auto* fitc = app.add_subcommand("fit", "Fit a misalignment curve");
    fo.add_to(fitc);
    fitc->add_option("-o,--output", fit_output, "Fit report JSON")->required();
    fitc->add_option("--emit-curve", fit_curve, "Curve CSV (an SVG is written next to it)");
    fitc->add_option("--curve-points", fit_curve_points, "Samples on the emitted curve")->capture_default_str();

    // allocate
    AllocateOptions ao;
    double a_m = 0, a_n = 0, a_budget = 0, a_budget_flops = 0;
    auto* allocate = app.add_subcommand("allocate", "Compute-optimal N and D for a budget");
    allocate->add_option("--fit", ao.fit_path, "Joint fit report")->required();
    allocate->add_option("--compute-model", ao.compute_model_path, "Compute model JSON");
    allocate->add_option("--fit-compute-model", ao.compute_runs, "Run table to fit C = m (N D)^n from");
    allocate->add_option("--compute-model-out", ao.compute_model_out, "Write the fitted compute model here");
    auto* m_opt = allocate->add_option("--m", a_m, "Compute model coefficient (rescaled units)");
    auto* n_opt = allocate->add_option("--n", a_n, "Compute model exponent");
    auto* b_opt = allocate->add_option("--budget", a_budget, "Budget in rescaled units (C / c_scale)");
    auto* bf_opt = allocate->add_option("--budget-flops", a_budget_flops, "Budget in raw FLOPs");
    allocate->add_flag("--verify", ao.verify, "Check against the brute-force grid search");
    allocate->add_option("--grid-points", ao.grid_points, "Brute-force grid size")->capture_default_str();
    allocate->add_option("-o,--output", ao.output, "Allocation report JSON");

    // bootstrap
    FitOptions bo;
    std::string bs_output, bs_curve;
    std::size_t bs_resamples = 1000, bs_curve_points = 50;
    double bs_ci = 0.95;
    bool bs_warm = false, bs_cluster = false;
    auto* boot = app.add_subcommand("bootstrap", "Bootstrap confidence intervals for a fit");
    bo.add_to(boot);
    seed_opt(boot);
    boot->add_option("--resamples", bs_resamples, "Number of resamples")->capture_default_str();
    boot->add_option("--ci", bs_ci, "Confidence level")->capture_default_str();
    boot->add_flag("--warm-start", bs_warm, "Refit resamples from the point estimate only");
    boot->add_flag("--cluster", bs_cluster, "Resample (arch, dataset) clusters instead of rows");
    boot->add_option("--curve-points", bs_curve_points, "Curve grid size")->capture_default_str();
    boot->add_option("-o,--output", bs_output, "Bootstrap report JSON")->required();
    boot->add_option("--emit-curve", bs_curve, "Curve CSV with CI band (an SVG is written next to it)");

    // score
    ScoreOptions so;
    auto* score = app.add_subcommand("score", "Score activations against neural or behavioral data");
    score->add_option("--region", so.region, "V1, V2, V4, IT or behavior")->required();
    score->add_option("--ceiling", so.ceiling, "Benchmark ceiling")->required();
    score->add_option("--activations", so.activations, "stim_id,f0,... CSV");
    score->add_option("--recordings", so.recordings, "stim_id,n0,... CSV");
    score->add_option("--train", so.train, "stim_id,label,f0,... CSV");
    score->add_option("--test", so.test, "stim_id,label,f0,... CSV");
    score->add_option("--pattern", so.pattern, "image_id,class,probability CSV");
    score->add_option("--repeats", so.repeats, "Cross-validation repeats")->capture_default_str();
    score->add_option("--train-fraction", so.train_fraction, "Training fraction")->capture_default_str();
    score->add_option("--ridge", so.ridge, "Ridge penalty (0 = minimum-norm least squares)")->capture_default_str();
    score->add_option("--aggregate", so.aggregate, "Neuroid aggregate")->check(CLI::IsMember({"median", "mean"}))
        ->capture_default_str();
    seed_opt(score);
    score->add_option("-o,--output", so.output, "Score report JSON");
    score->add_option("--append-to", so.append_to, "Run table to update with the ceiled score");
    score->add_option("--run-id", so.run_id, "Row of --append-to to update");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Write synthetic data in the ingestion and scoring formats");
    sim->require_subcommand(1);
    std::string sc_form = "power", sc_x = "flops", sc_output;
    synth::CurveParams sc_params;
    std::size_t sc_points = 30, sc_grid = 10;
    double sc_xmin = 1e2, sc_xmax = 1e6, sc_nmin = 1.0, sc_nmax = 1e3, sc_dmin = 1.0, sc_dmax = 1e3, sc_noise = 0.0;
    double sc_cm = 6.0, sc_cn = 1.0;
    std::int64_t sc_classes = 0;
    FitOptions scale_only;
    auto* sim_curve = sim->add_subcommand("curve", "Run table sampled from a curve (all region scores = 1 - L)");
    sim_curve->add_option("--form", sc_form)->check(CLI::IsMember({"power", "shifted", "joint"}))->capture_default_str();
    sim_curve->add_option("--x", sc_x, "Column the curve variable maps to")
        ->check(CLI::IsMember({"flops", "params", "samples"}))->capture_default_str();
    sim_curve->add_option("--E", sc_params.E)->capture_default_str();
    sim_curve->add_option("--A", sc_params.A)->capture_default_str();
    sim_curve->add_option("--alpha", sc_params.alpha)->capture_default_str();
    sim_curve->add_option("--lambda", sc_params.lambda)->capture_default_str();
    sim_curve->add_option("--B", sc_params.B)->capture_default_str();
    sim_curve->add_option("--beta", sc_params.beta)->capture_default_str();
    sim_curve->add_option("--points", sc_points)->capture_default_str();
    sim_curve->add_option("--x-min", sc_xmin, "Smallest x (rescaled units)")->capture_default_str();
    sim_curve->add_option("--x-max", sc_xmax, "Largest x (rescaled units)")->capture_default_str();
    sim_curve->add_option("--grid", sc_grid, "Joint form: points per axis")->capture_default_str();
    sim_curve->add_option("--n-min", sc_nmin)->capture_default_str();
    sim_curve->add_option("--n-max", sc_nmax)->capture_default_str();
    sim_curve->add_option("--d-min", sc_dmin)->capture_default_str();
    sim_curve->add_option("--d-max", sc_dmax)->capture_default_str();
    sim_curve->add_option("--subsampling-classes", sc_classes,
                          "Joint form: D grid = {1,3,10,30,100,300} samples/class x classes (raw)");
    sim_curve->add_option("--compute-m", sc_cm, "Raw-unit compute model C = m (N D)^n")->capture_default_str();
    sim_curve->add_option("--compute-n", sc_cn)->capture_default_str();
    sim_curve->add_option("--noise", sc_noise, "Log-space noise SD")->capture_default_str();
    sim_curve->add_option("--c-scale", scale_only.c_scale)->capture_default_str();
    sim_curve->add_option("--n-scale", scale_only.n_scale)->capture_default_str();
    sim_curve->add_option("--d-scale", scale_only.d_scale)->capture_default_str();
    seed_opt(sim_curve);
    sim_curve->add_option("-o,--output", sc_output, "Run table CSV")->required();

    synth::BenchmarkGenerator bg;
    std::optional<double> bg_rho;
    double bg_rho_v = 0.0;
    bool bg_identity = false;
    std::string bg_act, bg_rec;
    auto* sim_bench = sim->add_subcommand("benchmark", "Activations and recordings with a known readout");
    sim_bench->add_option("--stimuli", bg.n_stimuli)->capture_default_str();
    sim_bench->add_option("--features", bg.n_features)->capture_default_str();
    sim_bench->add_option("--neuroids", bg.n_neuroids)->capture_default_str();
    auto* noise_opt = sim_bench->add_option("--noise", bg.noise_sigma, "Recording noise SD")->capture_default_str();
    sim_bench->add_option("--rho", bg_rho_v, "Target signal/total SD ratio")->excludes(noise_opt);
    sim_bench->add_flag("--identity", bg_identity, "Recordings equal activations");
    seed_opt(sim_bench);
    sim_bench->add_option("--activations", bg_act)->required();
    sim_bench->add_option("--recordings", bg_rec)->required();

    synth::BehaviorGenerator hg;
    std::string hg_train, hg_test, hg_pattern;
    auto* sim_beh = sim->add_subcommand("behavior", "Gaussian-blob classification task with a Bayes reference pattern");
    sim_beh->add_option("--classes", hg.n_classes)->capture_default_str();
    sim_beh->add_option("--features", hg.n_features)->capture_default_str();
    sim_beh->add_option("--train-size", hg.n_train)->capture_default_str();
    sim_beh->add_option("--test-size", hg.n_test)->capture_default_str();
    sim_beh->add_option("--separation", hg.separation)->capture_default_str();
    seed_opt(sim_beh);
    sim_beh->add_option("--train-out", hg_train)->required();
    sim_beh->add_option("--test-out", hg_test)->required();
    sim_beh->add_option("--pattern-out", hg_pattern)->required();

    // report
    std::vector<std::string> rp_fits, rp_expect;
    std::string rp_output;
    auto* rep = app.add_subcommand("report", "Region-gain table from per-region power-law fits");
    rep->add_option("--fit", rp_fits, "Fit reports")->required();
    rep->add_option("--expect", rp_expect, "Regions that must be present")->delimiter(',');
    rep->add_option("-o,--output", rp_output, "Table JSON");

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        argv_rev.pop_back();  // program name
        app.parse(argv_rev);
    } catch (const CLI::CallForHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << "run with --help for usage\n";
        return static_cast<int>(ErrorKind::usage);
    }

    try {
        if (!seed_given) seed = default_seed();
        std::string sidecar;
        int rc = 0;
        if (*ingest) {
            rc = cmd_ingest(ing_input, ing_format, ing_average, ing_filter, ing_output, out);
            sidecar = ing_output;
        } else if (*fitc) {
            fo.check();
            const auto in = load_fit_input(fo);
            const auto cfg = fo.config();
            const auto f = run_fit(fo, in, cfg);
            auto j = report::fit_json(f, cfg.rescale, {fo.target, fo.group});
            append_warnings(j, in.warnings);
            report::write_json_file(fit_output, j);
            if (!fit_curve.empty()) emit_curve(fit_curve, f, in, fit_curve_points, fo.x);
            out << "fit " << fo.form << ": " << j["params"].dump() << " objective " << j["objective"].dump() << "\n";
            sidecar = fit_output;
        } else if (*allocate) {
            if (*m_opt) ao.m = a_m;
            if (*n_opt) ao.n = a_n;
            if (*b_opt) ao.budget = a_budget;
            if (*bf_opt) ao.budget_flops = a_budget_flops;
            rc = cmd_allocate(ao, out);
            sidecar = ao.output;
        } else if (*boot) {
            bo.check();
            const auto in = load_fit_input(bo);
            const auto cfg = bo.config();
            uncertainty::BootstrapConfig bs;
            bs.resamples = bs_resamples;
            bs.ci_level = bs_ci;
            bs.seed = seed;
            bs.warm_start = bs_warm;
            bs.threads = bo.threads;
            bs.validate();
            uncertainty::BootstrapResult res;
            std::span<const std::size_t> clusters;
            if (bs_cluster) clusters = in.clusters;
            if (bo.kind() == uncertainty::FitKind::joint) {
                // curve along the diagonal of the observed (N, D) box
                double nlo = 1e300, nhi = 0, dlo = 1e300, dhi = 0;
                for (const auto& p : in.joint) {
                    nlo = std::min(nlo, p.n), nhi = std::max(nhi, p.n);
                    dlo = std::min(dlo, p.d), dhi = std::max(dhi, p.d);
                }
                if (!in.joint.empty() && nhi > nlo && dhi > dlo) {
                    const auto ns = synth::log_spaced(nlo, nhi, bs_curve_points);
                    const auto ds = synth::log_spaced(dlo, dhi, bs_curve_points);
                    for (std::size_t k = 0; k < ns.size(); ++k) bs.curve_grid.push_back({ns[k], ds[k]});
                }
                res = uncertainty::bootstrap_fit(in.joint, cfg, bs, clusters);
            } else {
                for (double x : curve_grid(in.curve, bs_curve_points)) bs.curve_grid.push_back({x, 0.0});
                res = uncertainty::bootstrap_fit(in.curve, bo.kind(), fit::parse_x_kind(bo.x), cfg, bs, clusters);
            }
            auto j = report::bootstrap_json(res, cfg.rescale, {bo.target, bo.group});
            append_warnings(j, in.warnings);
            report::write_json_file(bs_output, j);
            if (!bs_curve.empty()) emit_curve(bs_curve, res.point_fit, in, bs_curve_points, bo.x, &res);
            out << "bootstrap " << bo.form << ": " << res.resamples << " resamples, " << res.n_failed_resamples
                << " failed\n";
            sidecar = bs_output;
        } else if (*score) {
            so.seed = seed;
            rc = cmd_score(so, out);
            sidecar = so.output;
        } else if (*sim) {
            if (*sim_curve) {
                const fit::Rescale rs{scale_only.c_scale, scale_only.n_scale, scale_only.d_scale};
                rs.validate();
                synth::CurveGenerator g;
                g.true_params = sc_params;
                g.noise_sigma_log = sc_noise;
                g.seed = seed;
                records::RunTable table;
                auto raw_flops = [&](double n, double d) { return sc_cm * std::pow(n * d, sc_cn); };
                if (sc_form == "joint") {
                    g.form = synth::CurveForm::joint;
                    g.n_grid = synth::log_spaced(sc_nmin, sc_nmax, sc_grid);
                    if (sc_classes > 0) {
                        for (double d : synth::subsampled_samples_seen(sc_classes)) g.d_grid.push_back(d / rs.d_scale);
                    } else {
                        g.d_grid = synth::log_spaced(sc_dmin, sc_dmax, sc_grid);
                    }
                    const auto pts = synth::gen_joint_points(g);
                    for (std::size_t i = 0; i < pts.size(); ++i) {
                        const double n = pts[i].n * rs.n_scale, d = pts[i].d * rs.d_scale;
                        table.rows.push_back(synth::synthetic_run(i, n, d, raw_flops(n, d), pts[i].loss));
                    }
                } else {
                    g.form = sc_form == "power" ? synth::CurveForm::power : synth::CurveForm::shifted;
                    g.x_grid = synth::log_spaced(sc_xmin, sc_xmax, sc_points);
                    const auto xk = fit::parse_x_kind(sc_x);
                    const auto pts = synth::gen_curve_points(g);
                    for (std::size_t i = 0; i < pts.size(); ++i) {
                        const double x = pts[i].x * rs.for_kind(xk);
                        double n = 1e6, d = 1e6, c = 0.0;
                        if (xk == fit::XKind::flops) {
                            n = d = std::sqrt(std::pow(x / sc_cm, 1.0 / sc_cn));
                            c = x;
                        } else {
                            (xk == fit::XKind::params ? n : d) = x;
                            c = raw_flops(n, d);
                        }
                        auto run = synth::synthetic_run(i, n, d, c, pts[i].loss);
                        if (xk == fit::XKind::params) run.n_params = std::llround(x);
                        if (xk == fit::XKind::samples) run.samples_seen = std::llround(x);
                        table.rows.push_back(std::move(run));
                    }
                }
                records::export_table(table, sc_output, records::format_from_path(sc_output));
                json truth{{"spec_version", report::kSchemaVersion},
                           {"form", sc_form},
                           {"params", {{"E", sc_params.E}, {"A", sc_params.A}, {"alpha", sc_params.alpha},
                                       {"lambda", sc_params.lambda}, {"B", sc_params.B}, {"beta", sc_params.beta}}},
                           {"noise_sigma_log", sc_noise},
                           {"seed", seed},
                           {"rescale", report::rescale_json(rs)}};
                report::write_json_file(sc_output + ".truth.json", truth);
                out << "wrote " << table.rows.size() << " runs to " << sc_output << "\n";
                sidecar = sc_output;
            } else if (*sim_bench) {
                bg.seed = seed;
                if (sim_bench->count("--rho")) bg.noise_sigma = synth::noise_for_ratio(bg_rho_v);
                if (bg_identity) bg.noise_sigma = 0.0;
                auto gen = synth::gen_benchmark(bg);
                if (bg_identity) {
                    gen.data.recordings = gen.data.activations;
                    gen.theoretical_r.assign(static_cast<std::size_t>(bg.n_features), 1.0);
                }
                write_matrix(bg_act, gen.data.stimulus_ids, nullptr, gen.data.activations, 'f');
                write_matrix(bg_rec, gen.data.stimulus_ids, nullptr, gen.data.recordings, 'n');
                json truth{{"spec_version", report::kSchemaVersion},
                           {"noise_sigma", bg.noise_sigma},
                           {"theoretical_r", gen.theoretical_r.empty() ? 1.0 : gen.theoretical_r.front()},
                           {"seed", seed}};
                report::write_json_file(bg_rec + ".truth.json", truth);
                out << "wrote " << bg.n_stimuli << " stimuli, theoretical r = " << truth["theoretical_r"].dump() << "\n";
                sidecar = bg_rec;
            } else if (*sim_beh) {
                hg.seed = seed;
                const auto gen = synth::gen_behavior(hg);
                auto ids = [](const char* p, Eigen::Index n) {
                    std::vector<std::string> v;
                    for (Eigen::Index i = 0; i < n; ++i) v.push_back(p + std::to_string(i));
                    return v;
                };
                auto labels = [](const std::vector<int>& l) {
                    std::vector<std::string> v;
                    for (int x : l) v.push_back(std::to_string(x));
                    return v;
                };
                const auto train_ids = ids("train", gen.data.train_features.rows());
                const auto test_ids = ids("img", gen.data.test_features.rows());
                const auto train_labels = labels(gen.data.train_labels);
                const auto test_labels = labels(gen.data.test_labels);
                write_matrix(hg_train, train_ids, &train_labels, gen.data.train_features, 'f');
                write_matrix(hg_test, test_ids, &test_labels, gen.data.test_features, 'f');
                std::ostringstream pat;
                pat << "image_id,class,probability\n";
                std::size_t k = 0;
                for (std::size_t i = 0; i < test_ids.size(); ++i)
                    for (int c = 0; c < hg.n_classes; ++c) {
                        if (c == gen.data.test_labels[i]) continue;
                        pat << test_ids[i] << ',' << c << ',' << csv::format_double(gen.data.primate_pattern[k++]) << '\n';
                    }
                report::write_text(hg_pattern, pat.str());
                out << "wrote behavioral task with " << hg.n_classes << " classes\n";
                sidecar = hg_pattern;
            }
        } else if (*rep) {
            rc = cmd_report(rp_fits, rp_expect, rp_output, out);
            sidecar = rp_output;
        }
        if (!sidecar.empty()) write_sidecar(sidecar, args);
        return rc;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

inline int run(int argc, const char* const* argv) {
    return run(std::vector<std::string>(argv, argv + argc));
}

}  // namespace scalefit::cli
