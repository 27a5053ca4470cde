#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "dcoe/baselines.hpp"
#include "dcoe/numcore.hpp"

using namespace dcoe;
using Catch::Approx;

namespace {

// Largest i with p_(i) <= i alpha / m, found by checking every i.
std::vector<std::size_t> brute_force_bh(const std::vector<double>& pv, double alpha) {
    const std::size_t m = pv.size();
    std::vector<double> sorted = pv;
    std::sort(sorted.begin(), sorted.end());
    std::size_t best = 0;
    for (std::size_t i = 1; i <= m; ++i) {
        if (sorted[i - 1] <= static_cast<double>(i) * alpha / static_cast<double>(m)) best = i;
    }
    std::vector<std::size_t> out;
    if (best == 0) return out;
    const double cut = sorted[best - 1];
    for (std::size_t j = 0; j < m; ++j) {
        if (pv[j] <= cut) out.push_back(j);
    }
    return out;
}

}  // namespace

TEST_CASE("BH step-up examples") {
    CHECK(bh_step_up(std::vector<double>{0.001, 0.02, 0.03, 0.9}, 0.05) == std::vector<std::size_t>{0, 1, 2});
    CHECK(bh_step_up(std::vector<double>{0.9, 0.03, 0.001, 0.02}, 0.05) == std::vector<std::size_t>{1, 2, 3});
    CHECK(bh_step_up(std::vector<double>(10, 1.0), 0.05).empty());
    CHECK(bh_step_up(std::vector<double>{0.04}, 0.05) == std::vector<std::size_t>{0});
    CHECK(bh_step_up(std::vector<double>{0.06}, 0.05).empty());

    try {
        bh_step_up(std::vector<double>{0.1}, 1.0);
        FAIL("expected InvalidAlpha");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::InvalidAlpha);
    }
    CHECK_THROWS_AS(bh_step_up(std::vector<double>{0.1}, 0.0), Error);
}

TEST_CASE("p-values from statistics") {
    const StatVector one({2.0, -2.0});
    CHECK(pvalues(one)[0] == Approx(0.0227501319).margin(1e-10));
    CHECK(pvalues(one)[1] == Approx(0.9772498681).margin(1e-10));
    const StatVector two({2.0, -2.0}, Sidedness::TwoSided);
    CHECK(pvalues(two)[0] == Approx(0.0455002639).margin(1e-10));
    CHECK(pvalues(two)[1] == pvalues(two)[0]);
}

TEST_CASE("BH matches brute force and is monotone in alpha") {
    RngStream rng(99, 0);
    int mismatches = 0;
    for (int rep = 0; rep < 300; ++rep) {
        const std::size_t m = 1 + rng.uniform_index(500);
        std::vector<double> pv(m);
        for (double& v : pv) v = rng.uniform() < 0.3 ? std::pow(rng.uniform(), 4.0) : rng.uniform();
        const double alpha = 0.001 + 0.5 * rng.uniform();
        if (bh_step_up(pv, alpha) != brute_force_bh(pv, alpha)) ++mismatches;
        const auto small = bh_step_up(pv, alpha);
        const auto large = bh_step_up(pv, std::min(0.99, alpha * 1.7));
        CHECK(std::includes(large.begin(), large.end(), small.begin(), small.end()));
    }
    CHECK(mismatches == 0);
}

TEST_CASE("evaluate") {
    const StatVector stats({3.0, 2.0, 0.1, -0.4, 1.2}, {0, 1});
    const auto perfect = evaluate({0, 1}, stats, "x");
    CHECK(perfect.fnp == 0.0);
    CHECK(perfect.fdp == 0.0);
    CHECK(perfect.fm_index == 1.0);
    CHECK(perfect.n_selected == 2);
    CHECK(perfect.method_label == "x");

    const auto empty = evaluate({}, stats, "none");
    CHECK(empty.fnp == 1.0);
    CHECK(empty.fdp == 0.0);
    CHECK(empty.fm_index == 0.0);

    const auto mixed = evaluate({0, 4}, stats, "m");
    CHECK(mixed.fnp == 0.5);
    CHECK(mixed.fdp == 0.5);
    CHECK(mixed.fm_index == Approx(0.5));

    CHECK(fm_index(0.19, 0.02) == Approx(0.891).margin(5e-4));
    CHECK(std::abs(fm_index(0.19, 0.02) - 0.89) <= 0.005);
}

TEST_CASE("fm index bounds") {
    for (double fnp = 0.0; fnp <= 1.0; fnp += 0.125) {
        for (double fdp = 0.0; fdp <= 1.0; fdp += 0.125) {
            const double fm = fm_index(fnp, fdp);
            CHECK(fm >= 0.0);
            CHECK(fm <= 1.0);
            CHECK((fm == 0.0) == (fnp == 1.0 || fdp == 1.0));
            CHECK(std::abs(fm - std::sqrt((1 - fnp) * (1 - fdp))) <= 1e-12);
        }
    }
}
