#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>

#include "CLI11.hpp"
#include "dcoe/dcoe.hpp"
#include "dcoe/io.hpp"

#ifndef DCOE_PRESET_DIR
#define DCOE_PRESET_DIR "presets"
#endif

namespace fs = std::filesystem;
using namespace dcoe;
using io::json;

namespace {

int exit_code_for(Errc code) {
    switch (code) {
        case Errc::Io:
        case Errc::NotPositiveDefinite:
        case Errc::ReplicationFailed:
            return 1;
        default:
            return 2;
    }
}

void report_error(std::string_view name, const std::string& message) {
    std::string flat = message;
    for (char& c : flat) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    std::cerr << "dcoe: error code=" << name << ": " << flat << '\n';
}

std::uint64_t effective_seed(std::uint64_t flag_value) {
    const char* env = std::getenv("DCOE_SEED");
    if (env == nullptr || *env == '\0') return flag_value;
    try {
        std::size_t used = 0;
        const auto v = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        fail(Errc::InvalidConfig, std::string("DCOE_SEED is not an unsigned integer: '") + env + "'");
    }
}

std::string preset_dir() {
    const char* env = std::getenv("DCOE_PRESET_DIR");
    return env != nullptr && *env != '\0' ? std::string(env) : std::string(DCOE_PRESET_DIR);
}

json dependence_json(const DependenceSummary& d) {
    return {{"sigma_l1", io::num(d.sigma_l1)},
            {"rho_bar", io::num(d.rho_bar)},
            {"eta_raw", io::num(d.eta_raw)},
            {"eta", io::num(d.eta)}};
}

json bounds_json(const TheoryBoundaries& b) {
    return {{"gamma", io::num(b.gamma)},
            {"eta", io::num(b.eta)},
            {"p", b.p},
            {"mu1", io::num(b.mu1)},
            {"mu2", io::num(b.mu2)},
            {"mu_min", io::num(b.mu_min)}};
}

// Calibration block for config echoes; the timestamp is dropped so reruns compare equal.
json calibration_echo(const std::optional<NullCalibration>& c) {
    if (!c) return nullptr;
    auto j = io::to_json(*c, "");
    j.erase("created");
    return j;
}

// --- calibrate ------------------------------------------------------------

struct CalibrateArgs {
    std::size_t p = 0;
    std::size_t n = 500;
    std::string null_kind = "independent";
    std::string model;
    std::string cov_json;
    std::string null_matrix;
    std::string sided = "one-sided";
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    std::string out;
};

int run_calibrate(const CalibrateArgs& a) {
    const auto sided = io::parse_sidedness(a.sided);
    const auto seed = effective_seed(a.seed);
    NullSource source = null_source::IndependentGaussian{};
    if (a.null_kind == "covariance") {
        if (a.model.empty() == a.cov_json.empty()) {
            fail(Errc::InvalidConfig, "--null covariance needs exactly one of --model or --cov-json");
        }
        json spec;
        if (a.model.empty()) {
            spec = io::read_json_file(a.cov_json);
        } else {
            // Named models take their parameters from the bundled table1 preset.
            const auto presets = io::read_json_file((fs::path(preset_dir()) / "table1.json").string());
            if (!presets["models"].contains(a.model)) fail(Errc::InvalidConfig, "unknown model '" + a.model + "'");
            spec = presets["models"][a.model];
        }
        source = null_source::Covariance{io::covariance_from_json(spec)};
    } else if (a.null_kind == "external") {
        if (a.null_matrix.empty()) fail(Errc::InvalidConfig, "--null external needs --null-matrix");
        source = null_from_permutation(a.null_matrix, a.p);
    } else if (a.null_kind != "independent") {
        fail(Errc::InvalidConfig, "unknown null source '" + a.null_kind + "'");
    }
    if (!std::holds_alternative<null_source::ExternalMatrix>(source) && a.n < 100) {
        fail(Errc::Domain, "--n must be at least 100, got " + std::to_string(a.n));
    }

    const auto calib = calibrate(a.p, a.n, source, seed, sided, a.workers);
    io::write_json_file(a.out, io::to_json(calib));
    std::cout << "c_p_05=" << io::fmt(calib.c_p_05) << " c_p_1=" << io::fmt(calib.c_p_1)
              << " quantile_level=" << io::fmt(calib.quantile_level) << " n_draws=" << calib.n_draws << '\n';
    return 0;
}

// --- estimate-pi ----------------------------------------------------------

struct EstimateArgs {
    std::string z;
    std::string calibration;
    std::string sided;
    std::string out;
};

int run_estimate(const EstimateArgs& a) {
    const auto calib = io::load_calibration(a.calibration);
    const auto sided = a.sided.empty() ? calib.sidedness : io::parse_sidedness(a.sided);
    const auto stats = io::load_stat_vector(a.z, sided);
    const auto est = estimate_pi(stats, calib);
    if (!a.out.empty()) {
        json j = {{"format_version", io::kFormatVersion},
                  {"kind", "proportion_estimate"},
                  {"p", stats.size()},
                  {"sidedness", to_string(sided)}};
        j.update(io::to_json(est, stats.size()));
        io::write_json_file(a.out, j);
    }
    std::cout << "pi_hat=" << io::fmt(est.pi_hat) << " s_hat=" << io::fmt(est.pi_hat * stats.size())
              << " pi_05=" << io::fmt(est.pi_05) << " pi_1=" << io::fmt(est.pi_1) << '\n';
    return 0;
}

// --- select ---------------------------------------------------------------

struct SelectArgs {
    std::string z;
    double beta = 0.0;
    std::string s_mode;
    std::string sided;
    std::string truth;
    std::string out;
    std::string trace;
};

int run_select(const SelectArgs& a) {
    const auto colon = a.s_mode.find(':');
    const std::string mode = a.s_mode.substr(0, colon);
    const std::string value = colon == std::string::npos ? "" : a.s_mode.substr(colon + 1);
    if (value.empty() || (mode != "known" && mode != "estimate")) {
        fail(Errc::InvalidConfig, "--s must be known:<value> or estimate:<calibration.json>");
    }

    std::optional<NullCalibration> calib;
    double known_s = 0.0;
    if (mode == "known") {
        std::size_t used = 0;
        try {
            known_s = std::stod(value, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != value.size()) fail(Errc::InvalidConfig, "--s known: value is not a number");
    } else {
        if (!fs::is_regular_file(value)) fail(Errc::InvalidConfig, "calibration file not found: " + value);
        calib = io::load_calibration(value);
    }

    Sidedness sided = Sidedness::OneSided;
    if (!a.sided.empty()) {
        sided = io::parse_sidedness(a.sided);
    } else if (calib) {
        sided = calib->sidedness;
    }
    const auto stats = io::load_stat_vector(a.z, sided, a.truth);
    const auto report = calib ? dcoe_select_estimated(stats, a.beta, *calib) : dcoe_select(stats, a.beta, known_s);

    std::string trace = a.trace;
    if (trace.empty()) {
        fs::path t(a.out);
        t.replace_extension(".trace.csv");
        trace = t.string();
    }
    if (report.degenerate_proportion) {
        io::write_text_file(trace, "rank,index,t,fnp_hat\n");
    } else {
        io::write_text_file(trace, io::curve_csv(fnp_curve(stats, report.s_used)));
    }

    auto j = io::to_json(report, stats.size());
    j["trace_path"] = trace;
    if (!a.truth.empty()) {
        auto row = io::to_json(evaluate(report.selected, stats, label(method::Dcoe{a.beta, report.s_source})));
        row.erase("method");
        j["evaluation"] = row;
    }
    io::write_json_file(a.out, j);

    std::cout << "selected " << report.k_selected << " of " << stats.size() << " at threshold "
              << io::fmt(report.threshold) << " (beta=" << io::fmt(a.beta) << ", s=" << io::fmt(report.s_used)
              << ", s_source=" << to_string(report.s_source) << ")";
    if (report.degenerate_proportion) std::cout << " warning=DegenerateProportion";
    std::cout << '\n';
    return 0;
}

// --- reproduce ------------------------------------------------------------

struct ReproduceArgs {
    std::string experiment;
    std::string config;
    std::string model;
    std::optional<double> a_value;
    std::optional<double> gamma;
    std::optional<std::size_t> replications;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::size_t workers = 1;
    bool verbose = false;
};

int run_reproduce(const ReproduceArgs& a) {
    std::string path = a.config;
    if (!a.experiment.empty()) path = (fs::path(preset_dir()) / (a.experiment + ".json")).string();
    if (!fs::is_regular_file(path)) fail(Errc::InvalidConfig, "config file not found: " + path);

    auto cfg = io::load_config(path, a.model);
    const char* env_seed = std::getenv("DCOE_SEED");
    const bool seed_set = a.seed.has_value() || (env_seed != nullptr && *env_seed != '\0');
    const fs::path out = a.out_dir.empty() ? fs::path("results") / cfg.name : fs::path(a.out_dir);
    const auto started = std::chrono::steady_clock::now();

    if (cfg.kind == io::RunKind::Grid) {
        if (a.a_value || a.gamma || a.replications) {
            fail(Errc::InvalidConfig, "--A, --gamma and --replications do not apply to grid configs");
        }
        auto spec = *cfg.grid;
        if (seed_set) spec.master_seed = effective_seed(a.seed.value_or(spec.master_seed));
        const auto result = run_grid(spec, nullptr, a.workers);

        std::vector<MetricRow> rows;
        io::write_text_file((out / "signal_mask.txt").string(), io::mask_text(result.signal_mask, spec.rows, spec.cols));
        for (const auto& m : result.methods) {
            rows.push_back(m.metrics);
            io::write_text_file((out / ("selected_" + io::slug(m.metrics.method_label) + ".txt")).string(),
                                io::mask_text(m.selected_mask, spec.rows, spec.cols));
        }
        const auto table = io::metrics_csv(rows);
        io::write_text_file((out / "metrics.csv").string(), table);
        io::write_json_file((out / "config.json").string(),
                            json{{"kind", "grid"},
                                 {"name", cfg.name},
                                 {"spec", io::to_json(spec)},
                                 {"calibration", calibration_echo(result.calibration)}});
        std::cout << table;
    } else {
        auto spec = *cfg.experiment;
        if (a.a_value) spec.signal_strength = strength::Constant{*a.a_value};
        if (a.gamma) spec.gamma = *a.gamma;
        if (a.replications) spec.n_replications = *a.replications;
        if (seed_set) spec.master_seed = effective_seed(a.seed.value_or(spec.master_seed));
        try {
            validate(spec);
        } catch (const Error& e) {
            fail(Errc::InvalidConfig, e.what());
        }

        json echo = {{"kind", cfg.kind == io::RunKind::Consistency ? "consistency" : "experiment"},
                     {"name", cfg.name},
                     {"model", cfg.model},
                     {"spec", io::to_json(spec)}};
        if (cfg.kind == io::RunKind::Consistency) {
            const auto curve = consistency_curve(spec, a.workers);
            io::write_text_file((out / "curve.csv").string(), io::consistency_csv(curve));
            echo["s"] = curve.s;
            echo["dependence"] = dependence_json(curve.dependence);
            echo["bounds"] = bounds_json(curve.bounds);
            const auto worst = curve.worst_median_above(curve.bounds.mu_min);
            std::cout << "mu1=" << io::fmt(curve.bounds.mu1) << " mu2=" << io::fmt(curve.bounds.mu2)
                      << " mu_min=" << io::fmt(curve.bounds.mu_min)
                      << " worst_median_abs_diff=" << io::fmt(worst.first) << " at t=" << io::fmt(worst.second)
                      << '\n';
        } else {
            const auto result = run_experiment(spec, a.workers);
            const auto table = io::summary_csv(result);
            io::write_text_file((out / "results.csv").string(), table);
            io::write_text_file((out / "raw.csv").string(), io::raw_csv(result));
            echo["s"] = result.s;
            echo["dependence"] = dependence_json(result.dependence);
            echo["calibration"] = calibration_echo(result.calibration);
            std::cout << table;
        }
        io::write_json_file((out / "config.json").string(), echo);
    }

    if (a.verbose) {
        const std::chrono::duration<double> took = std::chrono::steady_clock::now() - started;
        std::cerr << "dcoe: wrote " << out.string() << " in " << io::fmt(took.count()) << " s\n";
    }
    return 0;
}

// --- theory ---------------------------------------------------------------

struct TheoryArgs {
    double gamma = 0.3;
    double eta = 1.0;
    std::size_t p = 2000;
    std::string clamp = "outer";
    bool as_json = false;
};

int run_theory(const TheoryArgs& a) {
    const auto clamp = a.clamp == "inner" ? Mu2Clamp::Inner : Mu2Clamp::Outer;
    const auto b = theory_boundaries(a.gamma, a.eta, a.p, clamp);
    const double boundary = phase_boundary(a.gamma, a.eta);
    if (a.as_json) {
        auto j = bounds_json(b);
        j["clamp"] = a.clamp;
        j["phase_boundary"] = io::num(boundary);
        std::cout << j.dump(2) << '\n';
    } else {
        std::cout << "mu1=" << io::fmt(b.mu1) << " mu2=" << io::fmt(b.mu2) << " mu_min=" << io::fmt(b.mu_min)
                  << " phase_boundary=" << io::fmt(boundary) << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dual-control FNP selection, signal proportion estimation and simulation"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "dcoe 1.0");
    const auto sided_check = CLI::IsMember({"one-sided", "one", "two-sided", "two"});

    CalibrateArgs ca;
    auto* cal = app.add_subcommand("calibrate", "Monte Carlo calibration of the bounding sequence");
    cal->add_option("--p", ca.p, "Number of variables")->required()->check(CLI::Range(std::size_t{3}, SIZE_MAX));
    cal->add_option("--n", ca.n, "Number of null draws (at least 100)")->capture_default_str();
    cal->add_option("--null", ca.null_kind, "Null source")
        ->check(CLI::IsMember({"independent", "covariance", "external"}))
        ->capture_default_str();
    cal->add_option("--model", ca.model, "Named covariance model for --null covariance");
    cal->add_option("--cov-json", ca.cov_json, "Covariance spec JSON for --null covariance")
        ->check(CLI::ExistingFile);
    cal->add_option("--null-matrix", ca.null_matrix, "N x p matrix of null statistics for --null external");
    cal->add_option("--sided", ca.sided, "one-sided or two-sided")->check(sided_check)->capture_default_str();
    cal->add_option("--seed", ca.seed, "Master seed (DCOE_SEED overrides)")->capture_default_str();
    cal->add_option("--workers", ca.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    cal->add_option("--out", ca.out, "Output calibration JSON")->required();

    EstimateArgs ea;
    auto* est = app.add_subcommand("estimate-pi", "Estimate the signal proportion of a z-vector");
    est->add_option("--z", ea.z, "z-vector file")->required()->check(CLI::ExistingFile);
    est->add_option("--calibration", ea.calibration, "Calibration JSON")->required()->check(CLI::ExistingFile);
    est->add_option("--sided", ea.sided, "Defaults to the calibration's sidedness")->check(sided_check);
    est->add_option("--out", ea.out, "Optional output JSON");

    SelectArgs sa;
    auto* sel = app.add_subcommand("select", "Dual-control selection at FNP level beta");
    sel->add_option("--z", sa.z, "z-vector file")->required()->check(CLI::ExistingFile);
    sel->add_option("--beta", sa.beta, "FNP level in (0,1)")->required();
    sel->add_option("--s", sa.s_mode, "known:<value> or estimate:<calibration.json>")->required();
    sel->add_option("--sided", sa.sided, "one-sided (default) or two-sided")->check(sided_check);
    sel->add_option("--truth", sa.truth, "1-based indices of true signals")->check(CLI::ExistingFile);
    sel->add_option("--out", sa.out, "Output report JSON")->required();
    sel->add_option("--trace", sa.trace, "FNP estimate trace CSV (default: next to --out)");

    ReproduceArgs ra;
    auto* rep = app.add_subcommand("reproduce", "Run a bundled preset or an experiment config");
    auto* preset_opt = rep->add_option("--experiment", ra.experiment, "Bundled preset")
                           ->check(CLI::IsMember({"table1", "table2-dcoe", "figure3", "grid"}));
    auto* config_opt = rep->add_option("--config", ra.config, "Experiment config JSON")->check(CLI::ExistingFile);
    preset_opt->excludes(config_opt);
    rep->add_option("--model", ra.model, "Covariance model from the config's models table");
    rep->add_option("--A", ra.a_value, "Constant signal strength override");
    rep->add_option("--gamma", ra.gamma, "Sparsity override");
    rep->add_option("--replications", ra.replications, "Replication count override");
    rep->add_option("--seed", ra.seed, "Master seed override (DCOE_SEED overrides)");
    rep->add_option("--out-dir", ra.out_dir, "Output directory (default: results/<name>)");
    rep->add_option("--workers", ra.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    rep->add_flag("-v,--verbose", ra.verbose, "Report wall time on stderr");

    TheoryArgs ta;
    auto* th = app.add_subcommand("theory", "Consistency thresholds and phase boundary");
    th->add_option("--gamma", ta.gamma, "Sparsity exponent")->required();
    th->add_option("--eta", ta.eta, "Dependence exponent")->required();
    th->add_option("--p", ta.p, "Number of variables")->capture_default_str();
    th->add_option("--clamp", ta.clamp, "mu2 clamp convention")
        ->check(CLI::IsMember({"outer", "inner"}))
        ->capture_default_str();
    th->add_flag("--json", ta.as_json, "Print JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("Usage", e.what());
        return 2;
    }

    try {
        if (*cal) return run_calibrate(ca);
        if (*est) return run_estimate(ea);
        if (*sel) return run_select(sa);
        if (*rep) {
            if (ra.experiment.empty() && ra.config.empty()) {
                fail(Errc::InvalidConfig, "reproduce needs --experiment or --config");
            }
            return run_reproduce(ra);
        }
        if (*th) return run_theory(ta);
    } catch (const Error& e) {
        report_error(errc_name(e.code()), e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        report_error("Runtime", e.what());
        return 1;
    }
    return 2;
}
