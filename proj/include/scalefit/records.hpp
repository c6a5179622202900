#pragma once

// Run records: one trained-model evaluation per row, CSV/JSON ingestion,
// score aggregation and the fit-selection filters.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <compare>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <span>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "scalefit/csv.hpp"
#include "scalefit/error.hpp"

namespace scalefit::records {

enum class Region { V1 = 0, V2, V4, IT, behavior };
inline constexpr std::array<Region, 5> kAllRegions{Region::V1, Region::V2, Region::V4, Region::IT, Region::behavior};
inline constexpr std::array<Region, 4> kNeuralRegions{Region::V1, Region::V2, Region::V4, Region::IT};

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::string_view region_name(Region r) {
    switch (r) {
        case Region::V1: return "V1";
        case Region::V2: return "V2";
        case Region::V4: return "V4";
        case Region::IT: return "IT";
        case Region::behavior: return "behavior";
    }
    return "?";
}

/// CSV column holding the score of `r`.
inline std::string score_column(Region r) { return "score_" + to_lower(region_name(r)); }

inline std::optional<Region> parse_region(std::string_view s) {
    const auto l = to_lower(s);
    for (Region r : kAllRegions)
        if (l == to_lower(region_name(r))) return r;
    return std::nullopt;
}

/// Either an integer sample count per class or the full dataset; "full" sorts last.
class SamplesPerClass {
public:
    SamplesPerClass() = default;
    explicit SamplesPerClass(std::int64_t count) : count_(count) {}
    static SamplesPerClass full() { return SamplesPerClass(); }

    bool is_full() const { return !count_.has_value(); }
    std::int64_t count() const { return count_.value(); }

    std::string str() const { return is_full() ? "full" : std::to_string(*count_); }

    static std::optional<SamplesPerClass> parse(std::string_view s) {
        if (to_lower(s) == "full") return full();
        auto v = csv::to_int(s);
        if (!v || *v < 1) return std::nullopt;
        return SamplesPerClass(*v);
    }

    friend bool operator==(const SamplesPerClass&, const SamplesPerClass&) = default;
    friend std::strong_ordering operator<=>(const SamplesPerClass& a, const SamplesPerClass& b) {
        if (a.is_full() || b.is_full()) return a.is_full() <=> b.is_full();
        return *a.count_ <=> *b.count_;
    }

private:
    std::optional<std::int64_t> count_;
};

struct RunRecord {
    std::string run_id;
    std::string family;
    std::string arch;
    std::string dataset;
    SamplesPerClass samples_per_class;
    std::int64_t seed = 0;
    std::int64_t n_params = 1;      // N
    std::int64_t samples_seen = 1;  // D
    double flops = 1.0;             // C
    std::array<std::optional<double>, 5> scores{};
    std::optional<double> val_accuracy;

    std::optional<double> score(Region r) const { return scores[static_cast<std::size_t>(r)]; }
    void set_score(Region r, double v) { scores[static_cast<std::size_t>(r)] = v; }

    friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

struct RunTable {
    std::vector<RunRecord> rows;
    std::string source;
    std::string format_version = "1";
    std::vector<std::string> warnings;
};

inline const std::vector<std::string>& csv_columns() {
    static const std::vector<std::string> cols{
        "run_id",   "family",   "arch",     "dataset",  "samples_per_class", "seed",      "n_params",
        "samples_seen", "flops", "score_v1", "score_v2", "score_v4",         "score_it", "score_behavior"};
    return cols;
}

namespace detail {

struct RowErrors {
    std::vector<std::string> messages;
    void add(std::size_t row, const std::string& column, const std::string& msg) {
        messages.push_back("row " + std::to_string(row) + ", column " + column + ": " + msg);
    }
};

inline std::optional<std::int64_t> parse_count(std::string_view s) {
    if (auto v = csv::to_int(s)) return v;
    auto d = csv::to_double(s);
    if (!d || !std::isfinite(*d) || std::floor(*d) != *d || std::abs(*d) > 9.0e18) return std::nullopt;
    return static_cast<std::int64_t>(*d);
}

/// Ceiling-normalized scores: reject outside [-0.05, 1.05], clamp into [0, 1] inside the band.
inline std::optional<double> check_score(double v, std::size_t row, const std::string& col, RowErrors& errs,
                                         std::vector<std::string>& warnings) {
    if (!std::isfinite(v) || v < -0.05 || v > 1.05) {
        errs.add(row, col, "score " + csv::format_double(v) + " outside accepted range [-0.05, 1.05]");
        return std::nullopt;
    }
    if (v < 0.0 || v > 1.0) {
        const double c = std::clamp(v, 0.0, 1.0);
        warnings.push_back("row " + std::to_string(row) + ", column " + col + ": score " + csv::format_double(v) +
                           " clamped to " + csv::format_double(c));
        return c;
    }
    return v;
}

inline void check_unique(const RunTable& t) {
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        auto [it, inserted] = seen.emplace(t.rows[i].run_id, i + 1);
        if (!inserted)
            fail(ErrorKind::input, t.source + ": duplicate run_id '" + t.rows[i].run_id + "' at rows " +
                                       std::to_string(it->second) + " and " + std::to_string(i + 1));
    }
}

inline void raise(const RowErrors& errs, const std::string& source) {
    if (errs.messages.empty()) return;
    std::string msg = source + ": " + std::to_string(errs.messages.size()) + " invalid field(s)";
    for (const auto& m : errs.messages) msg += "\n  " + m;
    fail(ErrorKind::input, msg);
}

}  // namespace detail

/// Parse the canonical run CSV. Errors are collected for every row before throwing.
inline RunTable read_csv(std::istream& in, const std::string& source) {
    const auto raw = csv::parse(in, source);
    for (const auto& col : csv_columns())
        if (!raw.column(col)) fail(ErrorKind::input, source + ": missing mandatory column '" + col + "'");
    const auto val_col = raw.column("val_accuracy");

    RunTable t;
    t.source = source;
    detail::RowErrors errs;
    for (std::size_t i = 0; i < raw.rows.size(); ++i) {
        const auto& f = raw.rows[i];
        const std::size_t row = i + 1;
        auto get = [&](const std::string& c) -> const std::string& { return f[*raw.column(c)]; };
        RunRecord r;
        r.run_id = get("run_id");
        if (r.run_id.empty()) errs.add(row, "run_id", "empty run_id");
        r.family = get("family");
        r.arch = get("arch");
        r.dataset = get("dataset");
        if (auto spc = SamplesPerClass::parse(get("samples_per_class")))
            r.samples_per_class = *spc;
        else
            errs.add(row, "samples_per_class", "expected positive integer or 'full', got '" + get("samples_per_class") + "'");
        if (auto s = csv::to_int(get("seed")))
            r.seed = *s;
        else
            errs.add(row, "seed", "expected integer, got '" + get("seed") + "'");
        if (auto n = detail::parse_count(get("n_params")); n && *n >= 1)
            r.n_params = *n;
        else
            errs.add(row, "n_params", "expected integer >= 1, got '" + get("n_params") + "'");
        if (auto d = detail::parse_count(get("samples_seen")); d && *d >= 1)
            r.samples_seen = *d;
        else
            errs.add(row, "samples_seen", "expected integer >= 1, got '" + get("samples_seen") + "'");
        if (auto c = csv::to_double(get("flops")); c && std::isfinite(*c) && *c > 0.0)
            r.flops = *c;
        else
            errs.add(row, "flops", "expected positive real, got '" + get("flops") + "'");
        for (Region reg : kAllRegions) {
            const auto col = score_column(reg);
            const auto& cell = get(col);
            if (cell.empty()) continue;
            auto v = csv::to_double(cell);
            if (!v) {
                errs.add(row, col, "expected real, got '" + cell + "'");
                continue;
            }
            if (auto ok = detail::check_score(*v, row, col, errs, t.warnings)) r.set_score(reg, *ok);
        }
        if (val_col && !f[*val_col].empty()) {
            auto v = csv::to_double(f[*val_col]);
            if (!v || *v < 0.0 || *v > 1.0)
                errs.add(row, "val_accuracy", "expected real in [0, 1], got '" + f[*val_col] + "'");
            else
                r.val_accuracy = *v;
        }
        t.rows.push_back(std::move(r));
    }
    detail::raise(errs, source);
    detail::check_unique(t);
    return t;
}

inline nlohmann::json to_json(const RunRecord& r) {
    nlohmann::json j;
    j["run_id"] = r.run_id;
    j["family"] = r.family;
    j["arch"] = r.arch;
    j["dataset"] = r.dataset;
    if (r.samples_per_class.is_full())
        j["samples_per_class"] = "full";
    else
        j["samples_per_class"] = r.samples_per_class.count();
    j["seed"] = r.seed;
    j["n_params"] = r.n_params;
    j["samples_seen"] = r.samples_seen;
    j["flops"] = r.flops;
    for (Region reg : kAllRegions) {
        const auto v = r.score(reg);
        j[score_column(reg)] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    }
    if (r.val_accuracy) j["val_accuracy"] = *r.val_accuracy;
    return j;
}

/// JSON mirror of the CSV: `{"format_version": "1", "runs": [{<csv columns>}...]}`.
inline RunTable read_json(std::istream& in, const std::string& source) {
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::input, source + ": invalid JSON: " + e.what());
    }
    if (!doc.is_object() || !doc.contains("runs") || !doc["runs"].is_array())
        fail(ErrorKind::input, source + ": expected an object with a 'runs' array");
    RunTable t;
    t.source = source;
    if (doc.contains("format_version")) t.format_version = doc["format_version"].get<std::string>();
    detail::RowErrors errs;
    std::size_t row = 0;
    for (const auto& j : doc["runs"]) {
        ++row;
        RunRecord r;
        bool missing = false;
        for (const auto& col : csv_columns()) {
            if (!j.contains(col)) {
                errs.add(row, col, "missing mandatory field");
                missing = true;
            }
        }
        if (missing) continue;
        try {
            r.run_id = j["run_id"].get<std::string>();
            r.family = j["family"].get<std::string>();
            r.arch = j["arch"].get<std::string>();
            r.dataset = j["dataset"].get<std::string>();
            const auto& spc = j["samples_per_class"];
            auto parsed = spc.is_string() ? SamplesPerClass::parse(spc.get<std::string>())
                                          : (spc.is_number_integer() && spc.get<std::int64_t>() >= 1
                                                 ? std::optional(SamplesPerClass(spc.get<std::int64_t>()))
                                                 : std::nullopt);
            if (parsed)
                r.samples_per_class = *parsed;
            else
                errs.add(row, "samples_per_class", "expected positive integer or 'full'");
            r.seed = j["seed"].get<std::int64_t>();
            r.n_params = j["n_params"].get<std::int64_t>();
            r.samples_seen = j["samples_seen"].get<std::int64_t>();
            r.flops = j["flops"].get<double>();
        } catch (const nlohmann::json::exception& e) {
            errs.add(row, "?", std::string("type error: ") + e.what());
            continue;
        }
        if (r.n_params < 1) errs.add(row, "n_params", "must be >= 1");
        if (r.samples_seen < 1) errs.add(row, "samples_seen", "must be >= 1");
        if (!(r.flops > 0.0) || !std::isfinite(r.flops)) errs.add(row, "flops", "must be positive");
        for (Region reg : kAllRegions) {
            const auto col = score_column(reg);
            if (j[col].is_null()) continue;
            if (!j[col].is_number()) {
                errs.add(row, col, "expected number or null");
                continue;
            }
            if (auto ok = detail::check_score(j[col].get<double>(), row, col, errs, t.warnings)) r.set_score(reg, *ok);
        }
        if (j.contains("val_accuracy") && !j["val_accuracy"].is_null()) {
            const double v = j["val_accuracy"].get<double>();
            if (v < 0.0 || v > 1.0)
                errs.add(row, "val_accuracy", "expected real in [0, 1]");
            else
                r.val_accuracy = v;
        }
        t.rows.push_back(std::move(r));
    }
    detail::raise(errs, source);
    detail::check_unique(t);
    return t;
}

enum class Format { csv, json };

inline Format format_from_path(const std::string& path) {
    const auto dot = path.rfind('.');
    if (dot != std::string::npos && to_lower(path.substr(dot)) == ".json") return Format::json;
    return Format::csv;
}

inline RunTable ingest(const std::string& path, Format format) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::input, "cannot open " + path);
    return format == Format::csv ? read_csv(in, path) : read_json(in, path);
}

inline RunTable ingest(const std::string& path) { return ingest(path, format_from_path(path)); }

inline void write_csv(const RunTable& t, std::ostream& out) {
    bool with_val = std::any_of(t.rows.begin(), t.rows.end(), [](const RunRecord& r) { return r.val_accuracy.has_value(); });
    const auto& cols = csv_columns();
    for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
    if (with_val) out << ",val_accuracy";
    out << '\n';
    for (const auto& r : t.rows) {
        out << csv::escape(r.run_id) << ',' << csv::escape(r.family) << ',' << csv::escape(r.arch) << ','
            << csv::escape(r.dataset) << ',' << r.samples_per_class.str() << ',' << r.seed << ',' << r.n_params << ','
            << r.samples_seen << ',' << csv::format_double(r.flops);
        for (Region reg : kAllRegions) {
            out << ',';
            if (auto v = r.score(reg)) out << csv::format_double(*v);
        }
        if (with_val) {
            out << ',';
            if (r.val_accuracy) out << csv::format_double(*r.val_accuracy);
        }
        out << '\n';
    }
}

inline void write_json(const RunTable& t, std::ostream& out) {
    nlohmann::json doc;
    doc["format_version"] = t.format_version;
    doc["runs"] = nlohmann::json::array();
    for (const auto& r : t.rows) doc["runs"].push_back(to_json(r));
    out << doc.dump(2) << '\n';
}

inline void export_table(const RunTable& t, const std::string& path, Format format) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::input, "cannot write " + path);
    if (format == Format::csv)
        write_csv(t, out);
    else
        write_json(t, out);
}

struct AggregateScore {
    double S = 0.0;
    double L = 1.0;
    std::vector<Region> regions_used;
};

/// S = mean over the five benchmarks, L = 1 - S.
inline AggregateScore aggregate_score(const std::map<Region, double>& scores,
                                      std::span<const Region> regions = kAllRegions) {
    std::vector<double> vals;
    AggregateScore out;
    for (Region r : regions) {
        auto it = scores.find(r);
        if (it == scores.end()) fail(ErrorKind::input, "aggregate_score: missing region " + std::string(region_name(r)));
        vals.push_back(it->second);
        out.regions_used.push_back(r);
    }
    // summation order independent of which region carries which value
    std::sort(vals.begin(), vals.end());
    double sum = 0.0;
    for (double v : vals) sum += v;
    out.S = sum / static_cast<double>(vals.size());
    out.L = 1.0 - out.S;
    return out;
}

inline AggregateScore aggregate_score(const RunRecord& r, std::span<const Region> regions = kAllRegions) {
    std::map<Region, double> m;
    for (Region reg : regions)
        if (auto v = r.score(reg)) m[reg] = *v;
    try {
        return aggregate_score(m, regions);
    } catch (const Error& e) {
        fail(e.kind(), "run " + r.run_id + ": " + e.what());
    }
}

/// Rows of a listed family are kept only if their samples_per_class is allowed;
/// rows of other families always pass.
struct FilterRule {
    std::string name;
    std::set<std::string> families;  // lower-case
    std::set<SamplesPerClass> allowed;

    bool empty() const { return families.empty(); }

    bool keeps(const RunRecord& r) const {
        if (!families.count(to_lower(r.family))) return true;
        return allowed.count(r.samples_per_class) > 0;
    }
};

inline FilterRule builtin_rule(std::string_view name) {
    if (name.empty() || name == "none") return FilterRule{"none", {}, {}};
    if (name == "convnext_vit_restricted")
        return FilterRule{std::string(name), {"convnext", "vit"}, {SamplesPerClass(300), SamplesPerClass::full()}};
    fail(ErrorKind::usage, "unknown filter rule '" + std::string(name) + "'");
}

inline RunTable filter_for_fit(const RunTable& t, const FilterRule& rule) {
    RunTable out;
    out.source = t.source;
    out.format_version = t.format_version;
    out.warnings = t.warnings;
    for (const auto& r : t.rows)
        if (rule.keeps(r)) out.rows.push_back(r);
    return out;
}

/// Keep only rows whose family is listed (case-insensitive); empty list keeps all.
inline RunTable select_families(const RunTable& t, const std::vector<std::string>& families) {
    if (families.empty()) return t;
    std::set<std::string> want;
    for (const auto& f : families) want.insert(to_lower(f));
    RunTable out = t;
    out.rows.clear();
    for (const auto& r : t.rows)
        if (want.count(to_lower(r.family))) out.rows.push_back(r);
    return out;
}

/// Collapse seed replicates: rows sharing (family, arch, dataset, samples_per_class)
/// become one row carrying the mean of each score. N, D and C come from the first replicate.
inline RunTable average_seeds(const RunTable& t) {
    using Key = std::tuple<std::string, std::string, std::string, SamplesPerClass>;
    std::map<Key, std::size_t> index;
    std::vector<std::vector<const RunRecord*>> groups;
    for (const auto& r : t.rows) {
        Key k{r.family, r.arch, r.dataset, r.samples_per_class};
        auto [it, inserted] = index.emplace(k, groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(&r);
    }
    RunTable out;
    out.source = t.source;
    out.format_version = t.format_version;
    out.warnings = t.warnings;
    for (const auto& g : groups) {
        RunRecord r = *g.front();
        for (Region reg : kAllRegions) {
            double sum = 0.0;
            int n = 0;
            for (const auto* m : g)
                if (auto v = m->score(reg)) {
                    sum += *v;
                    ++n;
                }
            r.scores[static_cast<std::size_t>(reg)] = n ? std::optional(sum / n) : std::nullopt;
        }
        double acc = 0.0;
        int na = 0;
        for (const auto* m : g)
            if (m->val_accuracy) {
                acc += *m->val_accuracy;
                ++na;
            }
        r.val_accuracy = na ? std::optional(acc / na) : std::nullopt;
        out.rows.push_back(std::move(r));
    }
    return out;
}

}  // namespace scalefit::records
