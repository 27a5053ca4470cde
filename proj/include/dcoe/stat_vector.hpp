#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcoe/error.hpp"
#include "dcoe/numcore/normal.hpp"

namespace dcoe {

enum class Sidedness { OneSided, TwoSided };

inline const char* to_string(Sidedness s) noexcept {
    return s == Sidedness::OneSided ? "one-sided" : "two-sided";
}

/// Null tail probability of a ranking value: Phi-bar(v), or 2 Phi-bar(|v|) when two-sided.
inline double null_tail(double v, Sidedness sided) noexcept {
    return sided == Sidedness::OneSided ? normal_sf(v) : std::min(1.0, 2.0 * normal_sf(std::abs(v)));
}

/// z-statistics with an optional ground-truth signal set (0-based indices).
class StatVector {
public:
    explicit StatVector(std::vector<double> z, Sidedness sided = Sidedness::OneSided)
        : z_(std::move(z)), sided_(sided) {
        if (z_.empty()) fail(Errc::Domain, "StatVector: no statistics");
        for (std::size_t i = 0; i < z_.size(); ++i) {
            if (!std::isfinite(z_[i])) {
                fail(Errc::Domain, "StatVector: z[" + std::to_string(i) + "] is not finite");
            }
        }
    }

    StatVector(std::vector<double> z, std::vector<std::size_t> truth, Sidedness sided = Sidedness::OneSided)
        : StatVector(std::move(z), sided) {
        set_truth(std::move(truth));
    }

    void set_truth(std::vector<std::size_t> truth) {
        std::sort(truth.begin(), truth.end());
        if (std::adjacent_find(truth.begin(), truth.end()) != truth.end()) {
            fail(Errc::Domain, "StatVector: duplicate truth index");
        }
        if (!truth.empty() && truth.back() >= z_.size()) {
            fail(Errc::Domain, "StatVector: truth index " + std::to_string(truth.back()) + " out of range");
        }
        truth_ = std::move(truth);
    }

    std::size_t size() const noexcept { return z_.size(); }
    std::span<const double> z() const noexcept { return z_; }
    Sidedness sidedness() const noexcept { return sided_; }
    bool has_truth() const noexcept { return truth_.has_value(); }

    const std::vector<std::size_t>& truth() const {
        if (!truth_) fail(Errc::MissingTruth, "StatVector: no ground-truth signal set");
        return *truth_;
    }

    /// Value used for ranking and thresholding (|z| when two-sided).
    double score(std::size_t i) const noexcept {
        return sided_ == Sidedness::TwoSided ? std::abs(z_[i]) : z_[i];
    }

    /// Indices ordered by descending score; ties keep index order.
    std::vector<std::size_t> ranking() const {
        std::vector<std::size_t> order(z_.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [this](std::size_t a, std::size_t b) { return score(a) > score(b); });
        return order;
    }

    /// Scores in descending order.
    std::vector<double> order_statistics() const {
        std::vector<double> out;
        out.reserve(z_.size());
        for (std::size_t i : ranking()) out.push_back(score(i));
        return out;
    }

private:
    std::vector<double> z_;
    std::optional<std::vector<std::size_t>> truth_;
    Sidedness sided_;
};

}  // namespace dcoe
