#pragma once

// Signal-proportion estimation.
//
// A bounding-sequence pair (c_{p,0.5}, c_{p,1}) is calibrated from N draws of
// the joint null: for each draw with descending order statistics w_(j) and
// tail probabilities u_j = Phi-bar(w_(j)),
//
//   V_0.5 = max_j |j/p - u_j| / sqrt(u_j),   V_1 = max_j |j/p - u_j| / u_j,
//
// and each c is the (1 - 1/sqrt(ln p)) quantile of its V sample. The estimate
// is then pi_hat = max{pi_0.5, pi_1} with
//
//   pi_delta = max_j (j/p - u_j - c_delta * delta(u_j)) / (1 - u_j),
//
// delta(u) = sqrt(u) or u. The c term keeps pi_hat below the true proportion
// with high probability.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dcoe/depmodels.hpp"
#include "dcoe/error.hpp"
#include "dcoe/numcore.hpp"
#include "dcoe/parallel.hpp"
#include "dcoe/stat_vector.hpp"
#include "dcoe/text_io.hpp"

namespace dcoe {

inline constexpr std::size_t kDefaultCalibrationDraws = 500;
inline constexpr std::size_t kMinCalibrationDraws = 100;
inline constexpr double kTailFloor = 1e-300;

// Stream purposes reserved under a master seed.
inline constexpr std::uint64_t kCalibrationPurpose = 0xCA11B4A7E0000001ull;
inline constexpr std::uint64_t kNullCovariancePurpose = 0xCA11B4A7E0000002ull;

namespace null_source {

struct IndependentGaussian {
    bool operator==(const IndependentGaussian&) const = default;
};

struct Covariance {
    CovarianceSpec spec;
    bool operator==(const Covariance&) const = default;
};

// A validated N x p file of null statistics, e.g. from permuting the response.
struct ExternalMatrix {
    std::string path;
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    bool operator==(const ExternalMatrix&) const = default;
};

}  // namespace null_source

using NullSource = std::variant<null_source::IndependentGaussian, null_source::Covariance, null_source::ExternalMatrix>;

struct NullCalibration {
    std::size_t p = 0;
    std::size_t n_draws = 0;
    double c_p_05 = 0.0;
    double c_p_1 = 0.0;
    double quantile_level = 0.0;
    NullSource null_source = null_source::IndependentGaussian{};
    std::uint64_t master_seed = 0;
    Sidedness sidedness = Sidedness::OneSided;
};

struct ProportionEstimate {
    double pi_05 = 0.0;  // before clamping
    double pi_1 = 0.0;   // before clamping
    double pi_hat = 0.0;
    std::size_t argmax_rank_05 = 1;
    std::size_t argmax_rank_1 = 1;
};

/// 1 - 1/sqrt(ln p)
inline double calibration_quantile_level(std::size_t p) {
    if (p < 3) fail(Errc::Domain, "calibration: p must be at least 3");
    return 1.0 - 1.0 / std::sqrt(std::log(static_cast<double>(p)));
}

/// Nearest-rank empirical quantile: the ceil(level * n)-th smallest value.
inline double nearest_rank_quantile(std::vector<double> sample, double level) {
    if (sample.empty()) fail(Errc::Domain, "quantile of an empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    auto rank = static_cast<std::size_t>(std::ceil(level * n));
    rank = std::clamp<std::size_t>(rank, 1, sample.size());
    return sample[rank - 1];
}

struct BoundingStatistics {
    double v_05 = 0.0;
    double v_1 = 0.0;
};

/// V statistics of one null draw.
inline BoundingStatistics bounding_statistics(std::span<const double> draw, Sidedness sided) {
    std::vector<double> scores(draw.begin(), draw.end());
    if (sided == Sidedness::TwoSided) {
        for (double& v : scores) v = std::abs(v);
    }
    std::sort(scores.begin(), scores.end(), std::greater<>());
    const double p = static_cast<double>(scores.size());
    BoundingStatistics out;
    for (std::size_t j = 0; j < scores.size(); ++j) {
        const double u = std::max(null_tail(scores[j], sided), kTailFloor);
        const double dev = std::abs(static_cast<double>(j + 1) / p - u);
        out.v_05 = std::max(out.v_05, dev / std::sqrt(u));
        out.v_1 = std::max(out.v_1, dev / u);
    }
    return out;
}

namespace detail {

inline NullCalibration fold_calibration(const std::vector<BoundingStatistics>& stats, std::size_t p) {
    const double level = calibration_quantile_level(p);
    std::vector<double> v05, v1;
    v05.reserve(stats.size());
    v1.reserve(stats.size());
    for (const auto& s : stats) {
        v05.push_back(s.v_05);
        v1.push_back(s.v_1);
    }
    NullCalibration out;
    out.p = p;
    out.n_draws = stats.size();
    out.quantile_level = level;
    out.c_p_05 = nearest_rank_quantile(std::move(v05), level);
    out.c_p_1 = nearest_rank_quantile(std::move(v1), level);
    if (!(out.c_p_05 > 0.0 && std::isfinite(out.c_p_05) && out.c_p_1 > 0.0 && std::isfinite(out.c_p_1))) {
        fail(Errc::InvalidNullMatrix, "calibration produced non-positive or non-finite bounding values");
    }
    return out;
}

}  // namespace detail

/// Calibrate from explicit null draws (each of length p).
inline NullCalibration calibrate_from_draws(std::span<const std::vector<double>> draws, std::size_t p,
                                            Sidedness sided = Sidedness::OneSided) {
    if (draws.empty()) fail(Errc::InvalidNullMatrix, "calibration: no null draws");
    std::vector<BoundingStatistics> stats;
    stats.reserve(draws.size());
    for (std::size_t a = 0; a < draws.size(); ++a) {
        const auto& w = draws[a];
        if (w.size() != p) {
            fail(Errc::InvalidNullMatrix, "calibration: null draw " + std::to_string(a) + " has width " +
                                              std::to_string(w.size()) + ", expected " + std::to_string(p));
        }
        if (!std::all_of(w.begin(), w.end(), [](double v) { return std::isfinite(v); })) {
            fail(Errc::InvalidNullMatrix, "calibration: null draw " + std::to_string(a) + " has non-finite entries");
        }
        stats.push_back(bounding_statistics(w, sided));
    }
    auto out = detail::fold_calibration(stats, p);
    out.sidedness = sided;
    return out;
}

/// Calibrate from N draws of N(0, L L^T); draw a uses stream (seed, derive(kCalibrationPurpose, a)).
/// A null factor pointer means independent standard normals.
inline NullCalibration calibrate_with_factor(const CholeskyFactor* factor, std::size_t p, std::size_t n_draws,
                                             std::uint64_t master_seed, Sidedness sided = Sidedness::OneSided,
                                             std::size_t workers = 1) {
    if (p < 3) fail(Errc::Domain, "calibrate: p must be at least 3");
    if (factor && factor->dim() != p) fail(Errc::SizeMismatch, "calibrate: factor dimension differs from p");
    std::vector<BoundingStatistics> stats(n_draws);
    const std::vector<double> zero_mean(p, 0.0);
    parallel_for(n_draws, workers, [&](std::size_t a) {
        RngStream rng(master_seed, derive_stream_index(kCalibrationPurpose, a));
        const auto w = factor ? mvn_sample(*factor, zero_mean, rng) : rng.normals(p);
        stats[a] = bounding_statistics(w, sided);
    });
    auto out = detail::fold_calibration(stats, p);
    out.master_seed = master_seed;
    out.sidedness = sided;
    return out;
}

/// Validate an N x p file of null statistics and register it as a null source.
inline null_source::ExternalMatrix null_from_permutation(const std::string& path, std::size_t p) {
    std::vector<std::vector<double>> rows;
    try {
        rows = io::read_numeric_matrix(path);
    } catch (const Error& e) {
        fail(Errc::InvalidNullMatrix, e.what());
    }
    if (rows.empty()) fail(Errc::InvalidNullMatrix, path + ": no rows");
    for (std::size_t a = 0; a < rows.size(); ++a) {
        if (rows[a].size() != p) {
            fail(Errc::InvalidNullMatrix, path + ": row " + std::to_string(a + 1) + " has " +
                                              std::to_string(rows[a].size()) + " columns, expected " +
                                              std::to_string(p));
        }
        if (!std::all_of(rows[a].begin(), rows[a].end(), [](double v) { return std::isfinite(v); })) {
            fail(Errc::InvalidNullMatrix, path + ": row " + std::to_string(a + 1) + " has non-finite entries");
        }
    }
    return {path, rows.size(), p};
}

/// Bounding sequences for p statistics. For ExternalMatrix sources n_draws is
/// taken from the file.
inline NullCalibration calibrate(std::size_t p, std::size_t n_draws, const NullSource& source,
                                 std::uint64_t master_seed, Sidedness sided = Sidedness::OneSided,
                                 std::size_t workers = 1) {
    if (p < 3) fail(Errc::Domain, "calibrate: p must be at least 3");
    NullCalibration out;
    if (const auto* ext = std::get_if<null_source::ExternalMatrix>(&source)) {
        const auto handle = null_from_permutation(ext->path, p);
        const auto rows = io::read_numeric_matrix(handle.path);
        out = calibrate_from_draws(rows, p, sided);
        out.master_seed = master_seed;
    } else {
        if (n_draws < kMinCalibrationDraws) {
            fail(Errc::Domain, "calibrate: N must be at least " + std::to_string(kMinCalibrationDraws));
        }
        if (const auto* c = std::get_if<null_source::Covariance>(&source)) {
            RngStream build_rng(master_seed, derive_stream_index(kNullCovariancePurpose, 0));
            const auto factor = cholesky(build_covariance(c->spec, p, build_rng));
            out = calibrate_with_factor(&factor, p, n_draws, master_seed, sided, workers);
        } else {
            out = calibrate_with_factor(nullptr, p, n_draws, master_seed, sided, workers);
        }
    }
    out.null_source = source;
    return out;
}

inline ProportionEstimate estimate_pi(const StatVector& stats, const NullCalibration& calib) {
    if (stats.size() != calib.p) {
        fail(Errc::SizeMismatch, "estimate_pi: statistics have p=" + std::to_string(stats.size()) +
                                     " but calibration has p=" + std::to_string(calib.p));
    }
    if (stats.sidedness() != calib.sidedness) {
        fail(Errc::SizeMismatch, "estimate_pi: sidedness of statistics and calibration differ");
    }
    const auto order = stats.order_statistics();
    const double p = static_cast<double>(order.size());
    ProportionEstimate out;
    out.pi_05 = -std::numeric_limits<double>::infinity();
    out.pi_1 = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < order.size(); ++j) {
        const double u = std::max(null_tail(order[j], stats.sidedness()), kTailFloor);
        const double excess = static_cast<double>(j + 1) / p - u;
        const double denom = std::max(1.0 - u, kTailFloor);
        const double e05 = (excess - calib.c_p_05 * std::sqrt(u)) / denom;
        const double e1 = (excess - calib.c_p_1 * u) / denom;
        if (e05 > out.pi_05) {
            out.pi_05 = e05;
            out.argmax_rank_05 = j + 1;
        }
        if (e1 > out.pi_1) {
            out.pi_1 = e1;
            out.argmax_rank_1 = j + 1;
        }
    }
    out.pi_hat = std::clamp(std::max(out.pi_05, out.pi_1), 0.0, 1.0);
    return out;
}

}  // namespace dcoe
