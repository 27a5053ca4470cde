#pragma once

// False negative proportion estimation and the dual-control selection rule.
//
// With R(t) = #{j : z_j > t} and s signals among p statistics,
//
//   FNP-hat(t) = max{1 - R(t)/s + (p - s) Phi-bar(t) / s, 0}
//
// estimates FN(t)/s. The selection ranks the statistics in descending order,
// walks k = 1, 2, ... while FNP-hat(z_(k)) >= beta (with R = k at rank k), and
// keeps ranks 1..k-1. Two-sided mode ranks |z| and doubles the null term.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dcoe/error.hpp"
#include "dcoe/numcore/normal.hpp"
#include "dcoe/proportion.hpp"
#include "dcoe/stat_vector.hpp"

namespace dcoe {

enum class SSource { Known, Estimated };

inline const char* to_string(SSource s) noexcept { return s == SSource::Known ? "known" : "estimated"; }

namespace detail {

inline void check_s(double s, std::size_t p) {
    if (!(s > 0.0) || !std::isfinite(s)) {
        fail(Errc::NonpositiveS, "number of signals s must be positive, got " + std::to_string(s));
    }
    if (s > static_cast<double>(p)) {
        fail(Errc::Domain, "number of signals s=" + std::to_string(s) + " exceeds p=" + std::to_string(p));
    }
}

inline void check_beta(double beta) {
    if (!(beta > 0.0 && beta < 1.0)) {
        fail(Errc::InvalidBeta, "beta must lie in (0,1), got " + std::to_string(beta));
    }
}

// Estimate with R selected variables at threshold t.
inline double fnp_estimate(double selected, double t, double s, std::size_t p, Sidedness sided) {
    const double null_count = static_cast<double>(p) - s;
    const double expected_fp =
        sided == Sidedness::OneSided ? null_count * normal_sf(t) : 2.0 * null_count * normal_sf(t);
    return std::clamp((s - selected + expected_fp) / s, 0.0, 1.0);
}

}  // namespace detail

/// FNP-hat(t); R(t) counts scores strictly above t.
inline double fnp_hat(double t, const StatVector& stats, double s) {
    detail::check_s(s, stats.size());
    std::size_t selected = 0;
    for (std::size_t i = 0; i < stats.size(); ++i) {
        if (stats.score(i) > t) ++selected;
    }
    return detail::fnp_estimate(static_cast<double>(selected), t, s, stats.size(), stats.sidedness());
}

/// Realized FNP(t) = #{j in I1 : score_j <= t} / |I1|.
inline double fnp_true(double t, const StatVector& stats) {
    const auto& truth = stats.truth();
    if (truth.empty()) fail(Errc::MissingTruth, "fnp_true: the signal set is empty");
    std::size_t missed = 0;
    for (std::size_t j : truth) {
        if (stats.score(j) <= t) ++missed;
    }
    return static_cast<double>(missed) / static_cast<double>(truth.size());
}

/// Realized FNP of an explicit selection: signals not selected over |I1|.
inline double fnp_of_selection(const std::vector<std::size_t>& selected, const StatVector& stats) {
    const auto& truth = stats.truth();
    if (truth.empty()) fail(Errc::MissingTruth, "fnp: the signal set is empty");
    std::vector<char> chosen(stats.size(), 0);
    for (std::size_t i : selected) chosen.at(i) = 1;
    std::size_t missed = 0;
    for (std::size_t j : truth) missed += chosen[j] ? 0 : 1;
    return static_cast<double>(missed) / static_cast<double>(truth.size());
}

/// Realized FDP; 0 for an empty selection.
inline double fdp_true(const std::vector<std::size_t>& selected, const StatVector& stats) {
    const auto& truth = stats.truth();
    std::vector<char> is_signal(stats.size(), 0);
    for (std::size_t j : truth) is_signal[j] = 1;
    std::size_t false_pos = 0;
    for (std::size_t i : selected) false_pos += is_signal.at(i) ? 0 : 1;
    return static_cast<double>(false_pos) / static_cast<double>(std::max<std::size_t>(selected.size(), 1));
}

struct FnpCurve {
    std::vector<double> thresholds;   // descending order statistics
    std::vector<double> estimates;    // FNP-hat at each order statistic with R = rank
    std::vector<std::size_t> ranking; // variable index at each rank
    double s_used = 0.0;
};

inline FnpCurve fnp_curve(const StatVector& stats, double s) {
    detail::check_s(s, stats.size());
    FnpCurve curve;
    curve.s_used = s;
    curve.ranking = stats.ranking();
    curve.thresholds.reserve(stats.size());
    curve.estimates.reserve(stats.size());
    for (std::size_t j = 0; j < curve.ranking.size(); ++j) {
        const double t = stats.score(curve.ranking[j]);
        curve.thresholds.push_back(t);
        curve.estimates.push_back(
            detail::fnp_estimate(static_cast<double>(j + 1), t, s, stats.size(), stats.sidedness()));
    }
    return curve;
}

struct SelectionReport {
    double beta = 0.0;
    // Selected = {j : score_j > threshold}. The threshold is the score at the
    // first-crossing rank, +inf when nothing is selected and -inf when every
    // variable is selected.
    double threshold = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> selected;  // ascending variable indices
    std::size_t k_selected = 0;
    // 1-based rank where the estimate first fell below beta; p + 1 when the scan ran out.
    std::size_t crossing_rank = 1;
    double s_used = 0.0;
    SSource s_source = SSource::Known;
    // Curve value compared against beta at the crossing rank (last rank if none crossed).
    double fnp_hat_at_threshold = 1.0;
    Sidedness sidedness = Sidedness::OneSided;
    bool degenerate_proportion = false;
    std::optional<ProportionEstimate> proportion;
};

inline SelectionReport select_from_curve(const FnpCurve& curve, double beta, Sidedness sided) {
    detail::check_beta(beta);
    const std::size_t p = curve.estimates.size();
    SelectionReport report;
    report.beta = beta;
    report.s_used = curve.s_used;
    report.sidedness = sided;

    std::size_t k = 1;
    while (k <= p && curve.estimates[k - 1] >= beta) ++k;

    report.crossing_rank = k;
    const std::size_t n_selected = k - 1;
    report.selected.assign(curve.ranking.begin(), curve.ranking.begin() + static_cast<std::ptrdiff_t>(n_selected));
    std::sort(report.selected.begin(), report.selected.end());
    report.k_selected = n_selected;
    if (k <= p) {
        report.threshold = curve.thresholds[k - 1];
        report.fnp_hat_at_threshold = curve.estimates[k - 1];
    } else {
        report.threshold = -std::numeric_limits<double>::infinity();
        report.fnp_hat_at_threshold = p > 0 ? curve.estimates[p - 1] : 1.0;
    }
    return report;
}

/// Dual-control selection with a known (or externally supplied) number of signals.
inline SelectionReport dcoe_select(const StatVector& stats, double beta, double s) {
    detail::check_beta(beta);
    return select_from_curve(fnp_curve(stats, s), beta, stats.sidedness());
}

/// Selection with s = pi_hat * p taken from a proportion estimate.
inline SelectionReport dcoe_select_with_proportion(const StatVector& stats, double beta,
                                                   const ProportionEstimate& estimate) {
    detail::check_beta(beta);
    const double s_hat = estimate.pi_hat * static_cast<double>(stats.size());
    SelectionReport report;
    if (!(s_hat > 0.0)) {
        report.beta = beta;
        report.sidedness = stats.sidedness();
        report.degenerate_proportion = true;
    } else {
        report = dcoe_select(stats, beta, s_hat);
    }
    report.s_source = SSource::Estimated;
    report.proportion = estimate;
    return report;
}

inline SelectionReport dcoe_select_estimated(const StatVector& stats, double beta, const NullCalibration& calib) {
    detail::check_beta(beta);
    return dcoe_select_with_proportion(stats, beta, estimate_pi(stats, calib));
}

}  // namespace dcoe
