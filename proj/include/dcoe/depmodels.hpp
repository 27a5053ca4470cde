#pragma once

// Correlation models for the test statistics and the dependence summaries
// derived from them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "dcoe/error.hpp"
#include "dcoe/numcore.hpp"

namespace dcoe {

namespace cov {

struct Identity {
    bool operator==(const Identity&) const = default;
};

// sigma_ij = lambda^|i-j|
struct Autoregressive {
    double lambda = 0.0;
    bool operator==(const Autoregressive&) const = default;
};

// Diagonal blocks of size block_size with constant within-block correlation.
// The last block is truncated when block_size does not divide p.
struct Block {
    std::size_t block_size = 1;
    double within_corr = 0.0;
    bool operator==(const Block&) const = default;
};

// Block sizes drawn uniformly from [min_size, max_size] until p is covered.
struct RandomBlock {
    std::size_t min_size = 1;
    std::size_t max_size = 1;
    double within_corr = 0.0;
    bool operator==(const RandomBlock&) const = default;
};

// One-factor model V = tau h h^T + I rescaled to unit diagonal, h ~ N(0, I)
// drawn once from h_seed.
struct Factor {
    double tau = 0.5;
    std::uint64_t h_seed = 0;
    bool operator==(const Factor&) const = default;
};

struct Explicit {
    DenseMatrix matrix;
    bool operator==(const Explicit&) const = default;
};

}  // namespace cov

using CovarianceSpec =
    std::variant<cov::Identity, cov::Autoregressive, cov::Block, cov::RandomBlock, cov::Factor, cov::Explicit>;

inline std::string describe(const CovarianceSpec& spec) {
    struct Visitor {
        std::string operator()(const cov::Identity&) const { return "identity"; }
        std::string operator()(const cov::Autoregressive& s) const {
            return "autoregressive(lambda=" + std::to_string(s.lambda) + ")";
        }
        std::string operator()(const cov::Block& s) const {
            return "block(k=" + std::to_string(s.block_size) + ",r=" + std::to_string(s.within_corr) + ")";
        }
        std::string operator()(const cov::RandomBlock& s) const {
            return "random_block(" + std::to_string(s.min_size) + ".." + std::to_string(s.max_size) +
                   ",r=" + std::to_string(s.within_corr) + ")";
        }
        std::string operator()(const cov::Factor& s) const {
            return "factor(tau=" + std::to_string(s.tau) + ",h_seed=" + std::to_string(s.h_seed) + ")";
        }
        std::string operator()(const cov::Explicit& s) const {
            return "explicit(" + std::to_string(s.matrix.rows()) + "x" + std::to_string(s.matrix.cols()) + ")";
        }
    };
    return std::visit(Visitor{}, spec);
}

/// Sizes of the diagonal blocks covering p variables.
inline std::vector<std::size_t> block_sizes(const cov::Block& spec, std::size_t p) {
    std::vector<std::size_t> sizes;
    for (std::size_t start = 0; start < p; start += spec.block_size) {
        sizes.push_back(std::min(spec.block_size, p - start));
    }
    return sizes;
}

inline std::vector<std::size_t> block_sizes(const cov::RandomBlock& spec, std::size_t p, RngStream& rng) {
    std::vector<std::size_t> sizes;
    std::size_t covered = 0;
    const std::size_t span = spec.max_size - spec.min_size + 1;
    while (covered < p) {
        const std::size_t size = spec.min_size + static_cast<std::size_t>(rng.uniform_index(span));
        sizes.push_back(std::min(size, p - covered));
        covered += sizes.back();
    }
    return sizes;
}

namespace detail {

inline void check_corr(double r, const char* what) {
    if (!(r >= 0.0 && r < 1.0)) {
        fail(Errc::InvalidSpec, std::string(what) + ": within-block correlation must lie in [0,1), got " +
                                    std::to_string(r));
    }
}

inline void fill_blocks(DenseMatrix& m, const std::vector<std::size_t>& sizes, double r) {
    std::size_t start = 0;
    for (std::size_t size : sizes) {
        for (std::size_t i = start; i < start + size; ++i) {
            for (std::size_t j = start; j < start + size; ++j) m(i, j) = (i == j) ? 1.0 : r;
        }
        start += size;
    }
}

}  // namespace detail

/// Check that spec is well formed for dimension p without materializing it.
inline void validate(const CovarianceSpec& spec, std::size_t p) {
    if (p == 0) fail(Errc::InvalidSpec, "covariance: p must be positive");
    struct Visitor {
        std::size_t p;
        void operator()(const cov::Identity&) const {}
        void operator()(const cov::Autoregressive& s) const {
            if (!(s.lambda > -1.0 && s.lambda < 1.0)) {
                fail(Errc::InvalidSpec, "autoregressive: lambda must lie in (-1,1), got " + std::to_string(s.lambda));
            }
        }
        void operator()(const cov::Block& s) const {
            detail::check_corr(s.within_corr, "block");
            if (s.block_size == 0 || s.block_size > p) {
                fail(Errc::InvalidSpec, "block: block size must lie in [1, p], got " + std::to_string(s.block_size));
            }
        }
        void operator()(const cov::RandomBlock& s) const {
            detail::check_corr(s.within_corr, "random_block");
            if (s.min_size == 0 || s.min_size > s.max_size) {
                fail(Errc::InvalidSpec, "random_block: need 1 <= min_size <= max_size");
            }
            if (s.min_size > p) fail(Errc::InvalidSpec, "random_block: min_size exceeds p");
        }
        void operator()(const cov::Factor& s) const {
            if (!(s.tau > 0.0 && s.tau < 1.0)) {
                fail(Errc::InvalidSpec, "factor: tau must lie in (0,1), got " + std::to_string(s.tau));
            }
        }
        void operator()(const cov::Explicit& s) const {
            const auto& m = s.matrix;
            if (m.rows() != p || m.cols() != p) {
                fail(Errc::InvalidSpec, "explicit: matrix must be " + std::to_string(p) + "x" + std::to_string(p));
            }
            for (std::size_t i = 0; i < p; ++i) {
                if (std::abs(m(i, i) - 1.0) > kSymmetryTolerance) {
                    fail(Errc::InvalidSpec, "explicit: diagonal entry " + std::to_string(i) + " is not 1");
                }
                for (std::size_t j = 0; j < i; ++j) {
                    if (std::abs(m(i, j) - m(j, i)) > kSymmetryTolerance) {
                        fail(Errc::InvalidSpec, "explicit: matrix is not symmetric");
                    }
                }
            }
        }
    };
    std::visit(Visitor{p}, spec);
}

/// Materialize the p x p correlation matrix. rng is consumed only by RandomBlock.
inline DenseMatrix build_covariance(const CovarianceSpec& spec, std::size_t p, RngStream& rng) {
    validate(spec, p);
    struct Visitor {
        std::size_t p;
        RngStream& rng;
        DenseMatrix operator()(const cov::Identity&) const { return DenseMatrix::identity(p); }
        DenseMatrix operator()(const cov::Autoregressive& s) const {
            // powers[d] = lambda^d
            std::vector<double> powers(p, 1.0);
            for (std::size_t d = 1; d < p; ++d) powers[d] = powers[d - 1] * s.lambda;
            DenseMatrix m(p, p);
            for (std::size_t i = 0; i < p; ++i) {
                for (std::size_t j = 0; j < p; ++j) m(i, j) = powers[i > j ? i - j : j - i];
            }
            return m;
        }
        DenseMatrix operator()(const cov::Block& s) const {
            DenseMatrix m(p, p, 0.0);
            detail::fill_blocks(m, block_sizes(s, p), s.within_corr);
            return m;
        }
        DenseMatrix operator()(const cov::RandomBlock& s) const {
            DenseMatrix m(p, p, 0.0);
            detail::fill_blocks(m, block_sizes(s, p, rng), s.within_corr);
            return m;
        }
        DenseMatrix operator()(const cov::Factor& s) const {
            RngStream h_rng(s.h_seed, 0);
            const auto h = h_rng.normals(p);
            std::vector<double> scale(p);
            for (std::size_t i = 0; i < p; ++i) scale[i] = 1.0 / std::sqrt(s.tau * h[i] * h[i] + 1.0);
            DenseMatrix m(p, p);
            for (std::size_t i = 0; i < p; ++i) {
                m(i, i) = 1.0;
                for (std::size_t j = 0; j < i; ++j) {
                    m(i, j) = m(j, i) = s.tau * h[i] * h[j] * scale[i] * scale[j];
                }
            }
            return m;
        }
        DenseMatrix operator()(const cov::Explicit& s) const { return s.matrix; }
    };
    return std::visit(Visitor{p, rng}, spec);
}

struct DependenceSummary {
    double sigma_l1 = 0.0;  // sum_ij |sigma_ij|
    double rho_bar = 0.0;   // sigma_l1 / p^2
    double eta_raw = 0.0;   // -ln(rho_bar) / ln(p)
    double eta = 0.0;       // eta_raw clamped to [0, 1]
};

inline DependenceSummary dependence_summary(const DenseMatrix& sigma) {
    if (!sigma.square()) fail(Errc::SizeMismatch, "dependence_summary: matrix must be square");
    const std::size_t p = sigma.rows();
    if (p < 2) fail(Errc::Domain, "dependence_summary: p must be at least 2");
    CompensatedSum total;
    for (double v : sigma.entries()) total.add(std::abs(v));
    DependenceSummary out;
    out.sigma_l1 = total.value();
    out.rho_bar = out.sigma_l1 / (static_cast<double>(p) * static_cast<double>(p));
    out.eta_raw = -std::log(out.rho_bar) / std::log(static_cast<double>(p));
    out.eta = std::clamp(out.eta_raw, 0.0, 1.0);
    return out;
}

/// How the radicand of mu2 is clamped at zero.
enum class Mu2Clamp {
    Outer,  // sqrt(max{(4g - 2e) ln p + 4 ln ln p, 0})
    Inner,  // sqrt(max{4g - 2e, 0} ln p + 4 ln ln p)
};

struct TheoryBoundaries {
    double mu1 = 0.0;
    double mu2 = 0.0;
    double mu_min = 0.0;
    double gamma = 0.0;
    double eta = 0.0;
    std::size_t p = 0;
};

inline TheoryBoundaries theory_boundaries(double gamma, double eta, std::size_t p,
                                          Mu2Clamp clamp = Mu2Clamp::Outer) {
    if (!(gamma > 0.0 && gamma <= 1.0)) {
        fail(Errc::Domain, "theory_boundaries: gamma must lie in (0,1], got " + std::to_string(gamma));
    }
    if (!(eta >= 0.0 && eta <= 1.0)) {
        fail(Errc::Domain, "theory_boundaries: eta must lie in [0,1], got " + std::to_string(eta));
    }
    if (p < 3) fail(Errc::Domain, "theory_boundaries: p must be at least 3");

    const double log_p = std::log(static_cast<double>(p));
    const double loglog_p = std::log(log_p);
    TheoryBoundaries out;
    out.gamma = gamma;
    out.eta = eta;
    out.p = p;
    out.mu1 = std::sqrt(2.0 * gamma * log_p);
    const double slope = 4.0 * gamma - 2.0 * eta;
    const double radicand = clamp == Mu2Clamp::Outer ? std::max(slope * log_p + 4.0 * loglog_p, 0.0)
                                                     : std::max(slope, 0.0) * log_p + 4.0 * loglog_p;
    out.mu2 = std::sqrt(radicand);
    out.mu_min = std::min(out.mu1, out.mu2);
    return out;
}

/// Lower edge min{gamma, 2 gamma - eta} of the region where FNP control is possible.
inline double phase_boundary(double gamma, double eta) {
    if (!(gamma > 0.0 && gamma <= 1.0)) fail(Errc::Domain, "phase_boundary: gamma must lie in (0,1]");
    if (!(eta >= 0.0 && eta <= 1.0)) fail(Errc::Domain, "phase_boundary: eta must lie in [0,1]");
    return std::min(gamma, 2.0 * gamma - eta);
}

}  // namespace dcoe
