#pragma once

// JSON and CSV forms of calibrations, selection reports, experiment specs and
// results. Floating-point output carries 10 significant digits.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dcoe/baselines.hpp"
#include "dcoe/depmodels.hpp"
#include "dcoe/error.hpp"
#include "dcoe/fnpcontrol.hpp"
#include "dcoe/proportion.hpp"
#include "dcoe/simharness.hpp"
#include "dcoe/text_io.hpp"

namespace dcoe::io {

using json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

/// %.10g rendering; non-finite values become nan, inf, -inf.
inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

/// JSON number rounded to 10 significant digits; non-finite values become strings.
inline json num(double v) {
    if (!std::isfinite(v)) return fmt(v);
    return std::strtod(fmt(v).c_str(), nullptr);
}

inline double read_num(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        fail(Errc::Parse, std::string("field '") + key + "' is not a number");
    }
    return v.get<double>();
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::Io, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline json read_json_file(const std::string& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        fail(Errc::Parse, path + ": " + e.what());
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::Io, "cannot write '" + path + "'");
    out << text;
    if (!out) fail(Errc::Io, "write failed for '" + path + "'");
}

inline void write_json_file(const std::string& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

/// UTC timestamp, taken from SOURCE_DATE_EPOCH when set so outputs can be reproduced.
inline std::string creation_timestamp() {
    std::time_t now = std::time(nullptr);
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) {
        now = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
    }
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline Sidedness parse_sidedness(const std::string& s) {
    if (s == "one-sided" || s == "one") return Sidedness::OneSided;
    if (s == "two-sided" || s == "two") return Sidedness::TwoSided;
    fail(Errc::InvalidConfig, "unknown sidedness '" + s + "'");
}

// ---------------------------------------------------------------------------
// Covariance specs

inline json to_json(const CovarianceSpec& spec) {
    struct Visitor {
        json operator()(const cov::Identity&) const { return {{"type", "identity"}}; }
        json operator()(const cov::Autoregressive& s) const {
            return {{"type", "autoregressive"}, {"lambda", num(s.lambda)}};
        }
        json operator()(const cov::Block& s) const {
            return {{"type", "block"}, {"block_size", s.block_size}, {"within_corr", num(s.within_corr)}};
        }
        json operator()(const cov::RandomBlock& s) const {
            return {{"type", "random_block"},
                    {"min_size", s.min_size},
                    {"max_size", s.max_size},
                    {"within_corr", num(s.within_corr)}};
        }
        json operator()(const cov::Factor& s) const {
            return {{"type", "factor"}, {"tau", num(s.tau)}, {"h_seed", s.h_seed}};
        }
        json operator()(const cov::Explicit& s) const {
            json rows = json::array();
            for (std::size_t i = 0; i < s.matrix.rows(); ++i) {
                json row = json::array();
                for (double v : s.matrix.row(i)) row.push_back(v);
                rows.push_back(std::move(row));
            }
            return {{"type", "explicit"}, {"matrix", std::move(rows)}};
        }
    };
    return std::visit(Visitor{}, spec);
}

inline DenseMatrix matrix_from_rows(const std::vector<std::vector<double>>& rows, const std::string& origin) {
    if (rows.empty()) fail(Errc::InvalidConfig, origin + ": empty matrix");
    std::vector<double> flat;
    for (const auto& r : rows) {
        if (r.size() != rows.front().size()) fail(Errc::InvalidConfig, origin + ": ragged matrix");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return DenseMatrix(rows.size(), rows.front().size(), std::move(flat));
}

inline CovarianceSpec covariance_from_json(const json& j) {
    try {
        const auto type = j.at("type").get<std::string>();
        if (type == "identity") return cov::Identity{};
        if (type == "autoregressive" || type == "ar") return cov::Autoregressive{j.at("lambda").get<double>()};
        if (type == "block") {
            return cov::Block{j.at("block_size").get<std::size_t>(), j.at("within_corr").get<double>()};
        }
        if (type == "random_block") {
            return cov::RandomBlock{j.at("min_size").get<std::size_t>(), j.at("max_size").get<std::size_t>(),
                                    j.at("within_corr").get<double>()};
        }
        if (type == "factor") return cov::Factor{j.at("tau").get<double>(), j.value("h_seed", std::uint64_t{0})};
        if (type == "explicit") {
            if (j.contains("path")) {
                const auto path = j.at("path").get<std::string>();
                return cov::Explicit{matrix_from_rows(read_numeric_matrix(path), path)};
            }
            return cov::Explicit{matrix_from_rows(j.at("matrix").get<std::vector<std::vector<double>>>(), "matrix")};
        }
        fail(Errc::InvalidConfig, "unknown covariance type '" + type + "'");
    } catch (const json::exception& e) {
        fail(Errc::InvalidConfig, std::string("covariance: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Null calibration

inline json to_json(const NullSource& source) {
    if (std::holds_alternative<null_source::IndependentGaussian>(source)) return {{"type", "independent"}};
    if (const auto* c = std::get_if<null_source::Covariance>(&source)) {
        return {{"type", "covariance"}, {"covariance", to_json(c->spec)}};
    }
    const auto& e = std::get<null_source::ExternalMatrix>(source);
    return {{"type", "external"}, {"path", e.path}, {"n_rows", e.n_rows}, {"n_cols", e.n_cols}};
}

inline NullSource null_source_from_json(const json& j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "independent") return null_source::IndependentGaussian{};
    if (type == "covariance") return null_source::Covariance{covariance_from_json(j.at("covariance"))};
    if (type == "external") {
        return null_source::ExternalMatrix{j.at("path").get<std::string>(), j.at("n_rows").get<std::size_t>(),
                                           j.at("n_cols").get<std::size_t>()};
    }
    fail(Errc::Parse, "unknown null source '" + type + "'");
}

inline json to_json(const NullCalibration& c, const std::string& created = creation_timestamp()) {
    return {{"format_version", kFormatVersion},
            {"kind", "null_calibration"},
            {"p", c.p},
            {"n_draws", c.n_draws},
            {"c_p_05", num(c.c_p_05)},
            {"c_p_1", num(c.c_p_1)},
            {"quantile_level", num(c.quantile_level)},
            {"sidedness", to_string(c.sidedness)},
            {"null_source", to_json(c.null_source)},
            {"master_seed", c.master_seed},
            {"created", created}};
}

inline NullCalibration calibration_from_json(const json& j) {
    try {
        if (j.at("kind").get<std::string>() != "null_calibration") fail(Errc::Parse, "not a null calibration");
        const int version = j.at("format_version").get<int>();
        if (version != kFormatVersion) {
            fail(Errc::Parse, "unsupported calibration format version " + std::to_string(version));
        }
        NullCalibration c;
        c.p = j.at("p").get<std::size_t>();
        c.n_draws = j.at("n_draws").get<std::size_t>();
        c.c_p_05 = j.at("c_p_05").get<double>();
        c.c_p_1 = j.at("c_p_1").get<double>();
        c.quantile_level = j.at("quantile_level").get<double>();
        c.sidedness = parse_sidedness(j.value("sidedness", std::string("one-sided")));
        c.null_source = null_source_from_json(j.at("null_source"));
        c.master_seed = j.at("master_seed").get<std::uint64_t>();
        if (!(c.c_p_05 > 0.0 && c.c_p_1 > 0.0 && std::isfinite(c.c_p_05) && std::isfinite(c.c_p_1))) {
            fail(Errc::Parse, "calibration bounding values must be positive and finite");
        }
        return c;
    } catch (const json::exception& e) {
        fail(Errc::Parse, std::string("calibration: ") + e.what());
    }
}

inline NullCalibration load_calibration(const std::string& path) { return calibration_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------
// Estimates and selection reports

inline json to_json(const ProportionEstimate& e, std::size_t p) {
    return {{"pi_hat", num(e.pi_hat)},
            {"s_hat", num(e.pi_hat * static_cast<double>(p))},
            {"pi_05", num(e.pi_05)},
            {"pi_1", num(e.pi_1)},
            {"argmax_rank_05", e.argmax_rank_05},
            {"argmax_rank_1", e.argmax_rank_1}};
}

inline json to_json(const MetricRow& row) {
    return {{"method", row.method_label},
            {"fnp", num(row.fnp)},
            {"fdp", num(row.fdp)},
            {"fm_index", num(row.fm_index)},
            {"n_selected", row.n_selected}};
}

inline json to_json(const SelectionReport& r, std::size_t p) {
    json selected = json::array();
    for (std::size_t i : r.selected) selected.push_back(i + 1);
    json j = {{"format_version", kFormatVersion},
              {"kind", "selection_report"},
              {"p", p},
              {"beta", num(r.beta)},
              {"sidedness", to_string(r.sidedness)},
              {"s_used", num(r.s_used)},
              {"s_source", to_string(r.s_source)},
              {"threshold", num(r.threshold)},
              {"crossing_rank", r.crossing_rank},
              {"fnp_hat_at_threshold", num(r.fnp_hat_at_threshold)},
              {"k_selected", r.k_selected},
              {"selected", std::move(selected)},
              {"warning", r.degenerate_proportion ? json("DegenerateProportion") : json(nullptr)}};
    if (r.proportion) j["proportion"] = to_json(*r.proportion, p);
    return j;
}

/// rank, index (1-based), threshold, fnp_hat
inline std::string curve_csv(const FnpCurve& curve) {
    std::ostringstream out;
    out << "rank,index,t,fnp_hat\n";
    for (std::size_t k = 0; k < curve.estimates.size(); ++k) {
        out << (k + 1) << ',' << (curve.ranking[k] + 1) << ',' << fmt(curve.thresholds[k]) << ','
            << fmt(curve.estimates[k]) << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Experiment and grid specs

inline json to_json(const MethodSpec& m) {
    if (const auto* d = std::get_if<method::Dcoe>(&m)) {
        return {{"type", "dcoe"}, {"beta", num(d->beta)}, {"s_source", to_string(d->s_source)}};
    }
    return {{"type", "bh"}, {"alpha", num(std::get<method::Bh>(m).alpha)}};
}

inline MethodSpec method_from_json(const json& j) {
    const auto type = j.at("type").get<std::string>();
    if (type == "dcoe") {
        const auto source = j.value("s_source", std::string("known"));
        if (source != "known" && source != "estimated") fail(Errc::InvalidConfig, "unknown s_source '" + source + "'");
        return method::Dcoe{j.at("beta").get<double>(), source == "known" ? SSource::Known : SSource::Estimated};
    }
    if (type == "bh") return method::Bh{j.at("alpha").get<double>()};
    fail(Errc::InvalidConfig, "unknown method type '" + type + "'");
}

inline json to_json(const SignalStrength& s) {
    if (const auto* c = std::get_if<strength::Constant>(&s)) return {{"type", "constant"}, {"value", num(c->value)}};
    const auto& u = std::get<strength::Uniform>(s);
    return {{"type", "uniform"}, {"lo", num(u.lo)}, {"hi", num(u.hi)}};
}

inline SignalStrength strength_from_json(const json& j) {
    if (j.is_number()) return strength::Constant{j.get<double>()};
    const auto type = j.at("type").get<std::string>();
    if (type == "constant") return strength::Constant{j.at("value").get<double>()};
    if (type == "uniform") return strength::Uniform{j.at("lo").get<double>(), j.at("hi").get<double>()};
    fail(Errc::InvalidConfig, "unknown signal strength type '" + type + "'");
}

inline json to_json(const ExperimentSpec& s) {
    json methods = json::array();
    for (const auto& m : s.methods) methods.push_back(to_json(m));
    return {{"name", s.name},
            {"p", s.p},
            {"gamma", num(s.gamma)},
            {"signal_strength", to_json(s.signal_strength)},
            {"covariance", to_json(s.covariance)},
            {"methods", std::move(methods)},
            {"n_replications", s.n_replications},
            {"master_seed", s.master_seed},
            {"sidedness", to_string(s.sidedness)},
            {"calibration_draws", s.calibration_draws}};
}

inline ExperimentSpec experiment_from_json(const json& j) {
    try {
        ExperimentSpec s;
        s.name = j.value("name", std::string("experiment"));
        s.p = j.at("p").get<std::size_t>();
        s.gamma = j.at("gamma").get<double>();
        s.signal_strength = strength_from_json(j.at("signal_strength"));
        s.covariance = covariance_from_json(j.at("covariance"));
        for (const auto& m : j.at("methods")) s.methods.push_back(method_from_json(m));
        s.n_replications = j.value("n_replications", std::size_t{100});
        s.master_seed = j.value("master_seed", std::uint64_t{1});
        s.sidedness = parse_sidedness(j.value("sidedness", std::string("one-sided")));
        s.calibration_draws = j.value("calibration_draws", kDefaultCalibrationDraws);
        validate(s);
        return s;
    } catch (const json::exception& e) {
        fail(Errc::InvalidConfig, std::string("experiment spec: ") + e.what());
    }
}

/// 0/1 row-major text grid, one row per line, no separators.
inline std::string mask_text(const std::vector<char>& mask, std::size_t rows, std::size_t cols) {
    std::string out;
    out.reserve(rows * (cols + 1));
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) out.push_back(mask[i * cols + j] ? '1' : '0');
        out.push_back('\n');
    }
    return out;
}

/// Parse a 0/1 grid (characters, optionally separated); returns row-major cell indices set to 1.
inline std::vector<std::size_t> read_mask_file(const std::string& path, std::size_t rows, std::size_t cols) {
    std::istringstream in(read_text_file(path));
    std::vector<std::size_t> cells;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        std::size_t col = 0;
        for (char c : line) {
            if (c == '0' || c == '1') {
                if (row >= rows || col >= cols) fail(Errc::InvalidConfig, path + ": mask exceeds grid size");
                if (c == '1') cells.push_back(row * cols + col);
                ++col;
            }
        }
        if (col == 0) continue;
        if (col != cols) fail(Errc::InvalidConfig, path + ": row " + std::to_string(row + 1) + " has wrong width");
        ++row;
    }
    if (row != rows) fail(Errc::InvalidConfig, path + ": expected " + std::to_string(rows) + " rows");
    return cells;
}

inline json to_json(const GridSpec& s) {
    json methods = json::array();
    for (const auto& m : s.methods) methods.push_back(to_json(m));
    return {{"rows", s.rows},
            {"cols", s.cols},
            {"mask_cells", s.mask.size()},
            {"strength", {{"lo", num(s.strength.lo)}, {"hi", num(s.strength.hi)}}},
            {"methods", std::move(methods)},
            {"master_seed", s.master_seed},
            {"calibration_draws", s.calibration_draws}};
}

inline GridSpec grid_from_json(const json& j) {
    try {
        GridSpec s;
        s.rows = j.value("rows", std::size_t{100});
        s.cols = j.value("cols", std::size_t{100});
        const auto mask = j.value("mask", json("default"));
        if (mask.is_string() && mask.get<std::string>() == "default") {
            if (s.rows != 100 || s.cols != 100) fail(Errc::InvalidConfig, "the default mask needs a 100x100 grid");
            s.mask = default_grid_mask();
        } else if (mask.is_object() && mask.contains("path")) {
            s.mask = read_mask_file(mask.at("path").get<std::string>(), s.rows, s.cols);
        } else if (mask.is_object() && mask.contains("disk_cells")) {
            s.mask = disk_mask(s.rows, s.cols, mask.at("disk_cells").get<std::size_t>(),
                               mask.value("center_row", static_cast<double>(s.rows) / 2),
                               mask.value("center_col", static_cast<double>(s.cols) / 2));
        } else {
            fail(Errc::InvalidConfig, "grid mask must be \"default\", {\"path\": ...} or {\"disk_cells\": ...}");
        }
        if (j.contains("strength")) {
            s.strength = {j.at("strength").at("lo").get<double>(), j.at("strength").at("hi").get<double>()};
        }
        for (const auto& m : j.at("methods")) s.methods.push_back(method_from_json(m));
        s.master_seed = j.value("master_seed", std::uint64_t{1});
        s.calibration_draws = j.value("calibration_draws", kDefaultCalibrationDraws);
        validate(s);
        return s;
    } catch (const json::exception& e) {
        fail(Errc::InvalidConfig, std::string("grid spec: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Run configurations (bundled presets and user config files)

enum class RunKind { Experiment, Consistency, Grid };

struct RunConfig {
    RunKind kind = RunKind::Experiment;
    std::string name;
    std::string model;  // empty unless picked from a "models" table
    std::optional<ExperimentSpec> experiment;
    std::optional<GridSpec> grid;
};

/// Parse a config object. Experiment configs may carry a "models" table of
/// covariance specs; `model` (or "default_model") picks one of them.
inline RunConfig config_from_json(json j, const std::string& model = {}) {
    RunConfig out;
    const auto kind = j.value("kind", std::string("experiment"));
    out.name = j.value("name", kind);
    if (kind == "grid") {
        if (!model.empty()) fail(Errc::InvalidConfig, "--model does not apply to grid configs");
        out.kind = RunKind::Grid;
        out.grid = grid_from_json(j);
        return out;
    }
    if (kind == "experiment") {
        out.kind = RunKind::Experiment;
    } else if (kind == "consistency") {
        out.kind = RunKind::Consistency;
    } else {
        fail(Errc::InvalidConfig, "unknown config kind '" + kind + "'");
    }
    if (j.contains("models")) {
        out.model = model.empty() ? j.value("default_model", std::string()) : model;
        if (!j["models"].contains(out.model)) {
            fail(Errc::InvalidConfig, "config '" + out.name + "' has no model '" + out.model + "'");
        }
        j["covariance"] = j["models"][out.model];
    } else if (!model.empty()) {
        fail(Errc::InvalidConfig, "config '" + out.name + "' has no models table");
    }
    out.experiment = experiment_from_json(j);
    out.experiment->name = out.name;
    return out;
}

inline RunConfig load_config(const std::string& path, const std::string& model = {}) {
    return config_from_json(read_json_file(path), model);
}

// ---------------------------------------------------------------------------
// Result tables

inline std::string summary_csv(const ExperimentResult& r) {
    std::ostringstream out;
    out << "method,mean_fnp,sd_fnp,mean_fdp,sd_fdp,mean_fm,sd_fm\n";
    for (const auto& s : r.summary) {
        out << '"' << s.label << "\"," << fmt(s.mean_fnp) << ',' << fmt(s.sd_fnp) << ',' << fmt(s.mean_fdp) << ','
            << fmt(s.sd_fdp) << ',' << fmt(s.mean_fm) << ',' << fmt(s.sd_fm) << '\n';
    }
    return out.str();
}

inline std::string raw_csv(const ExperimentResult& r) {
    std::ostringstream out;
    out << "replication,method,fnp,fdp,fm,n_selected,threshold,s_used\n";
    for (const auto& row : r.raw) {
        out << row.replication << ",\"" << row.metrics.method_label << "\"," << fmt(row.metrics.fnp) << ','
            << fmt(row.metrics.fdp) << ',' << fmt(row.metrics.fm_index) << ',' << row.metrics.n_selected << ','
            << fmt(row.threshold) << ',' << fmt(row.s_used) << '\n';
    }
    return out.str();
}

inline std::string metrics_csv(const std::vector<MetricRow>& rows) {
    std::ostringstream out;
    out << "method,fnp,fdp,fm,n_selected\n";
    for (const auto& row : rows) {
        out << '"' << row.method_label << "\"," << fmt(row.fnp) << ',' << fmt(row.fdp) << ',' << fmt(row.fm_index)
            << ',' << row.n_selected << '\n';
    }
    return out.str();
}

inline std::string consistency_csv(const ConsistencyCurve& c) {
    std::ostringstream out;
    out << "replication,rank,t,fnp_hat,fnp_true,abs_diff,mu1,mu2,mu_min\n";
    const std::string tail = ',' + fmt(c.bounds.mu1) + ',' + fmt(c.bounds.mu2) + ',' + fmt(c.bounds.mu_min) + '\n';
    for (const auto& pt : c.points) {
        out << pt.replication << ',' << pt.rank << ',' << fmt(pt.t) << ',' << fmt(pt.fnp_hat) << ','
            << fmt(pt.fnp_true) << ',' << fmt(pt.abs_diff) << tail;
    }
    return out.str();
}

/// File-name friendly form of a method label.
inline std::string slug(const std::string& label) {
    std::string out;
    for (char c : label) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '.') {
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!out.empty() && out.back() != '_') {
            out.push_back('_');
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out;
}

}  // namespace dcoe::io
