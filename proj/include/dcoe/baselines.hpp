#pragma once

// Benjamini-Hochberg selection and the classification metrics used to
// compare selection procedures.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dcoe/error.hpp"
#include "dcoe/fnpcontrol.hpp"
#include "dcoe/stat_vector.hpp"

namespace dcoe {

/// Step-up rule: reject the k* smallest p-values, k* = max{i : p_(i) <= i alpha / m}.
/// Returns ascending indices into pvalues.
inline std::vector<std::size_t> bh_step_up(std::span<const double> pvalues, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        fail(Errc::InvalidAlpha, "alpha must lie in (0,1), got " + std::to_string(alpha));
    }
    const std::size_t m = pvalues.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pvalues[a] < pvalues[b]; });
    std::size_t k_star = 0;
    for (std::size_t i = m; i >= 1; --i) {
        if (pvalues[order[i - 1]] <= static_cast<double>(i) * alpha / static_cast<double>(m)) {
            k_star = i;
            break;
        }
    }
    std::vector<std::size_t> rejected(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k_star));
    std::sort(rejected.begin(), rejected.end());
    return rejected;
}

inline std::vector<double> pvalues(const StatVector& stats) {
    std::vector<double> out(stats.size());
    for (std::size_t i = 0; i < stats.size(); ++i) out[i] = null_tail(stats.score(i), stats.sidedness());
    return out;
}

inline std::vector<std::size_t> bh_fdr_select(const StatVector& stats, double alpha) {
    return bh_step_up(pvalues(stats), alpha);
}

struct MetricRow {
    std::string method_label;
    double fnp = 0.0;
    double fdp = 0.0;
    double fm_index = 0.0;
    std::size_t n_selected = 0;
};

/// Fowlkes-Mallows summary sqrt((1 - FNP)(1 - FDP)).
inline double fm_index(double fnp, double fdp) { return std::sqrt((1.0 - fnp) * (1.0 - fdp)); }

inline MetricRow evaluate(const std::vector<std::size_t>& selected, const StatVector& stats, std::string label) {
    MetricRow row;
    row.method_label = std::move(label);
    row.fnp = fnp_of_selection(selected, stats);
    row.fdp = fdp_true(selected, stats);
    row.fm_index = fm_index(row.fnp, row.fdp);
    row.n_selected = selected.size();
    return row;
}

}  // namespace dcoe
