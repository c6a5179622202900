#pragma once

// JSON report schemas, curve CSV/SVG emission and the region-gain table.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "scalefit/alignment.hpp"
#include "scalefit/allocation.hpp"
#include "scalefit/csv.hpp"
#include "scalefit/error.hpp"
#include "scalefit/scaling_fit.hpp"
#include "scalefit/uncertainty.hpp"

namespace scalefit::report {

using nlohmann::json;

inline constexpr const char* kSchemaVersion = "1.0";

/// Reports from a different major schema version are rejected.
inline void check_version(const json& j, const std::string& source) {
    if (!j.is_object() || !j.contains("spec_version") || !j["spec_version"].is_string())
        fail(ErrorKind::input, source + ": missing spec_version");
    const auto v = j["spec_version"].get<std::string>();
    const auto major = v.substr(0, v.find('.'));
    if (major != "1") fail(ErrorKind::input, source + ": unsupported report version " + v);
}

inline json rescale_json(const fit::Rescale& r) {
    return {{"c_scale", r.c_scale}, {"n_scale", r.n_scale}, {"d_scale", r.d_scale}};
}

inline fit::Rescale rescale_from_json(const json& j) {
    fit::Rescale r;
    r.c_scale = j.at("c_scale").get<double>();
    r.n_scale = j.at("n_scale").get<double>();
    r.d_scale = j.at("d_scale").get<double>();
    r.validate();
    return r;
}

/// Descriptive labels carried through to the report table.
struct FitLabels {
    std::string target;  // v1 | v2 | v4 | it | behavior | brain | mean
    std::string group;
};

inline json fit_json(const uncertainty::AnyFit& any, const fit::Rescale& rescale, const FitLabels& labels = {}) {
    json j;
    j["spec_version"] = kSchemaVersion;
    std::visit(
        [&](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            json params{{"E", f.E}, {"A", f.A}, {"alpha", f.alpha}};
            if constexpr (std::is_same_v<T, fit::PowerLawFit>) {
                j["form"] = "power";
                j["x_kind"] = fit::x_kind_name(f.x_kind);
            } else if constexpr (std::is_same_v<T, fit::ShiftedPowerLawFit>) {
                j["form"] = "shifted";
                j["x_kind"] = fit::x_kind_name(f.x_kind);
                params["lambda"] = f.lambda;
                j["lambda_frozen"] = f.lambda_frozen;
            } else {
                j["form"] = "joint";
                j["x_kind"] = "params_samples";
                params["B"] = f.B;
                params["beta"] = f.beta;
            }
            j["params"] = params;
            j["objective"] = f.objective;
            j["init_used"] = f.init_used;
            j["degenerate"] = f.degenerate;
            j["n_points"] = f.n_points;
            j["converged"] = f.converged;
            j["warnings"] = f.warnings;
        },
        any);
    j["rescale"] = rescale_json(rescale);
    if (!labels.target.empty()) j["target"] = labels.target;
    if (!labels.group.empty()) j["group"] = labels.group;
    return j;
}

struct LoadedFit {
    uncertainty::AnyFit fit;
    fit::Rescale rescale;
    FitLabels labels;
};

inline LoadedFit fit_from_json(const json& j, const std::string& source = "fit report") {
    check_version(j, source);
    LoadedFit out;
    try {
        out.rescale = rescale_from_json(j.at("rescale"));
        const auto form = j.at("form").get<std::string>();
        const auto& p = j.at("params");
        auto fill = [&](auto& f) {
            f.E = p.at("E").get<double>();
            f.A = p.at("A").get<double>();
            f.alpha = p.at("alpha").get<double>();
            f.objective = j.value("objective", 0.0);
            f.init_used = j.value("init_used", std::vector<double>{});
            f.degenerate = j.value("degenerate", false);
            f.n_points = j.value("n_points", std::size_t{0});
            f.converged = j.value("converged", false);
        };
        if (form == "power") {
            fit::PowerLawFit f;
            fill(f);
            f.x_kind = fit::parse_x_kind(j.at("x_kind").get<std::string>());
            f.x_scale = out.rescale.for_kind(f.x_kind);
            out.fit = f;
        } else if (form == "shifted") {
            fit::ShiftedPowerLawFit f;
            fill(f);
            f.lambda = p.at("lambda").get<double>();
            f.lambda_frozen = j.value("lambda_frozen", false);
            f.x_kind = fit::parse_x_kind(j.at("x_kind").get<std::string>());
            f.x_scale = out.rescale.for_kind(f.x_kind);
            out.fit = f;
        } else if (form == "joint") {
            fit::JointFit f;
            fill(f);
            f.B = p.at("B").get<double>();
            f.beta = p.at("beta").get<double>();
            f.n_scale = out.rescale.n_scale;
            f.d_scale = out.rescale.d_scale;
            out.fit = f;
        } else {
            fail(ErrorKind::input, source + ": unknown form '" + form + "'");
        }
        out.labels.target = j.value("target", std::string{});
        out.labels.group = j.value("group", std::string{});
    } catch (const json::exception& e) {
        fail(ErrorKind::input, source + ": " + e.what());
    }
    return out;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::input, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::input, path + ": invalid JSON: " + e.what());
    }
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::input, "cannot write " + path);
    out << text;
}

inline void write_json_file(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------

inline json compute_model_json(const alloc::ComputeModel& cm, const fit::Rescale& rescale) {
    return {{"spec_version", kSchemaVersion}, {"m", cm.m},         {"n", cm.n},
            {"r2", cm.r2},                    {"n_points", cm.n_points}, {"rescale", rescale_json(rescale)}};
}

inline alloc::ComputeModel compute_model_from_json(const json& j, const std::string& source = "compute model") {
    check_version(j, source);
    alloc::ComputeModel cm;
    try {
        cm.m = j.at("m").get<double>();
        cm.n = j.at("n").get<double>();
        cm.r2 = j.value("r2", 1.0);
        cm.n_points = j.value("n_points", std::size_t{0});
    } catch (const json::exception& e) {
        fail(ErrorKind::input, source + ": " + e.what());
    }
    if (!(cm.m > 0.0 && cm.n > 0.0)) fail(ErrorKind::input, source + ": m and n must be positive");
    return cm;
}

inline json allocation_json(const alloc::AllocationResult& r, const alloc::AllocationCoefficients& c,
                            const alloc::ComputeModel& cm, const fit::Rescale& rescale) {
    json j;
    j["spec_version"] = kSchemaVersion;
    j["budget_C"] = r.budget_C;
    j["n_star"] = r.n_star;
    j["d_star"] = r.d_star;
    j["predicted_L"] = r.predicted_L;
    j["predicted_S"] = 1.0 - r.predicted_L;
    j["method"] = alloc::method_name(r.method);
    j["coefficients"] = {{"a_prime", c.a_prime}, {"b_prime", c.b_prime}, {"G", c.G}};
    j["compute_model"] = {{"m", cm.m}, {"n", cm.n}};
    j["rescale"] = rescale_json(rescale);
    j["raw"] = {{"budget_flops", r.budget_C * rescale.c_scale},
                {"n_params", r.n_star * rescale.n_scale},
                {"samples_seen", r.d_star * rescale.d_scale}};
    return j;
}

inline json bootstrap_json(const uncertainty::BootstrapResult& b, const fit::Rescale& rescale,
                           const FitLabels& labels = {}) {
    json j = fit_json(b.point_fit, rescale, labels);
    json ci = json::object();
    for (const auto& [name, iv] : b.param_ci) ci[name] = {{"lo", iv.lo}, {"hi", iv.hi}};
    j["param_ci"] = ci;
    json curve = json::array();
    const bool joint = b.kind == uncertainty::FitKind::joint;
    for (const auto& band : b.curve_ci) {
        json row{{"x", band.at.x}, {"L", band.estimate}, {"lo_L", band.lo}, {"hi_L", band.hi}};
        if (joint) row["d"] = band.at.d;
        curve.push_back(row);
    }
    j["curve_ci"] = curve;
    j["resamples"] = b.resamples;
    j["seed"] = b.seed;
    j["ci_level"] = b.ci_level;
    j["n_failed_resamples"] = b.n_failed_resamples;
    return j;
}

inline std::string aggregate_name(alignment::Aggregate a) { return a == alignment::Aggregate::median ? "median" : "mean"; }

inline json score_json(const alignment::ScoreReport& s) {
    json j;
    j["spec_version"] = kSchemaVersion;
    j["region"] = records::region_name(s.region);
    j["raw"] = s.raw;
    j["ceiled"] = s.ceiled;
    j["ceiling"] = s.ceiling;
    j["n_repeats"] = s.n_repeats;
    j["seed"] = s.seed;
    j["aggregate"] = aggregate_name(s.aggregate);
    j["warnings"] = s.warnings;
    return j;
}

// ---------------------------------------------------------------------------
// Curves.

struct CurveSample {
    double x = 0.0;
    double L = 0.0;
    double lo = std::numeric_limits<double>::quiet_NaN();
    double hi = std::numeric_limits<double>::quiet_NaN();
};

inline std::string curve_csv(const std::vector<CurveSample>& samples) {
    std::ostringstream out;
    const bool band = !samples.empty() && !std::isnan(samples.front().lo);
    out << "x,L,S" << (band ? ",lo_L,hi_L" : "") << '\n';
    for (const auto& s : samples) {
        out << csv::format_double(s.x) << ',' << csv::format_double(s.L) << ',' << csv::format_double(1.0 - s.L);
        if (band) out << ',' << csv::format_double(s.lo) << ',' << csv::format_double(s.hi);
        out << '\n';
    }
    return out.str();
}

/// Line chart of L against log10(x) with an optional CI band.
inline std::string curve_svg(const std::vector<CurveSample>& samples, const std::string& x_label) {
    const double w = 640, h = 420, ml = 70, mr = 20, mt = 20, mb = 50;
    if (samples.size() < 2) fail(ErrorKind::usage, "svg: need at least 2 samples");
    double x0 = std::log10(samples.front().x), x1 = std::log10(samples.back().x);
    double y0 = std::numeric_limits<double>::infinity(), y1 = -y0;
    for (const auto& s : samples) {
        y0 = std::min({y0, s.L, std::isnan(s.lo) ? s.L : s.lo});
        y1 = std::max({y1, s.L, std::isnan(s.hi) ? s.L : s.hi});
    }
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1e-3;
    auto px = [&](double x) { return ml + (std::log10(x) - x0) / (x1 - x0) * (w - ml - mr); };
    auto py = [&](double y) { return mt + (y1 - y) / (y1 - y0) * (h - mt - mb); };
    std::ostringstream out;
    out << std::setprecision(6);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\"" << h - mb
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
    if (!std::isnan(samples.front().lo)) {
        out << "<polygon fill=\"steelblue\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
        for (const auto& s : samples) out << px(s.x) << ',' << py(s.hi) << ' ';
        for (auto it = samples.rbegin(); it != samples.rend(); ++it) out << px(it->x) << ',' << py(it->lo) << ' ';
        out << "\"/>\n";
    }
    out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (const auto& s : samples) out << px(s.x) << ',' << py(s.L) << ' ';
    out << "\"/>\n";
    out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">log10 " << x_label
        << "</text>\n";
    out << "<text x=\"16\" y=\"" << (mt + h - mb) / 2 << "\" transform=\"rotate(-90 16 " << (mt + h - mb) / 2
        << ")\" text-anchor=\"middle\">misalignment L</text>\n";
    out << "<text x=\"" << ml - 6 << "\" y=\"" << py(y1) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << y1
        << "</text>\n";
    out << "<text x=\"" << ml - 6 << "\" y=\"" << py(y0) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << y0
        << "</text>\n";
    out << "<text x=\"" << ml << "\" y=\"" << h - mb + 16 << "\" font-size=\"11\">" << x0 << "</text>\n";
    out << "<text x=\"" << w - mr << "\" y=\"" << h - mb + 16 << "\" text-anchor=\"end\" font-size=\"11\">" << x1
        << "</text>\n";
    out << "</svg>\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Region-gain table.

struct GainRow {
    std::string group;
    std::string region;
    double E = 0.0;
    double A = 0.0;
    double alpha = 0.0;
    double gain = 0.0;
    bool degenerate = false;
};

/// Rows grouped by `group` (first-seen order), sorted by gain descending within
/// each group; equal gains keep input order.
inline std::vector<GainRow> gain_table(const std::vector<LoadedFit>& fits) {
    std::vector<GainRow> rows;
    std::vector<std::string> groups;
    for (const auto& lf : fits) {
        const auto* p = std::get_if<fit::PowerLawFit>(&lf.fit);
        if (!p) fail(ErrorKind::input, "report: region gains need power-law fits");
        if (lf.labels.target.empty()) fail(ErrorKind::input, "report: fit report lacks a target region");
        const auto g = fit::region_gain(*p);
        rows.push_back({lf.labels.group, lf.labels.target, p->E, p->A, p->alpha, g.value, g.degenerate});
        if (std::find(groups.begin(), groups.end(), lf.labels.group) == groups.end()) groups.push_back(lf.labels.group);
    }
    std::stable_sort(rows.begin(), rows.end(), [&](const GainRow& a, const GainRow& b) {
        const auto ga = std::find(groups.begin(), groups.end(), a.group) - groups.begin();
        const auto gb = std::find(groups.begin(), groups.end(), b.group) - groups.begin();
        if (ga != gb) return ga < gb;
        return a.gain > b.gain;
    });
    return rows;
}

inline std::string gain_table_text(const std::vector<GainRow>& rows) {
    std::ostringstream out;
    out << std::left << std::setw(10) << "group" << std::setw(10) << "region" << std::right << std::setw(12) << "E"
        << std::setw(12) << "A" << std::setw(10) << "alpha" << std::setw(12) << "gain" << "  flag\n";
    out << std::setprecision(4) << std::fixed;
    for (const auto& r : rows)
        out << std::left << std::setw(10) << (r.group.empty() ? "-" : r.group) << std::setw(10) << r.region
            << std::right << std::setw(12) << r.E << std::setw(12) << r.A << std::setw(10) << r.alpha << std::setw(12)
            << r.gain << "  " << (r.degenerate ? "degenerate" : "") << '\n';
    return out.str();
}

inline json gain_table_json(const std::vector<GainRow>& rows) {
    json arr = json::array();
    for (const auto& r : rows)
        arr.push_back({{"group", r.group},
                       {"region", r.region},
                       {"E", r.E},
                       {"A", r.A},
                       {"alpha", r.alpha},
                       {"gain", r.gain},
                       {"degenerate", r.degenerate}});
    return {{"spec_version", kSchemaVersion}, {"rows", arr}};
}

}  // namespace scalefit::report
