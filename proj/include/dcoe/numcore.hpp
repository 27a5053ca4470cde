#pragma once

#include <span>
#include <string>
#include <vector>

#include "dcoe/error.hpp"
#include "dcoe/numcore/linalg.hpp"
#include "dcoe/numcore/normal.hpp"
#include "dcoe/numcore/rng.hpp"

namespace dcoe {

/// mean + L * draws, the deterministic half of multivariate normal sampling.
inline std::vector<double> mvn_transform(const CholeskyFactor& factor, std::span<const double> mean,
                                         std::span<const double> draws) {
    if (mean.size() != factor.dim() || draws.size() != factor.dim()) {
        fail(Errc::SizeMismatch, "mvn_transform: mean/draw length " + std::to_string(mean.size()) +
                                     "/" + std::to_string(draws.size()) + " vs factor dim " +
                                     std::to_string(factor.dim()));
    }
    std::vector<double> out(factor.dim());
    factor.apply(draws, out);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += mean[i];
    return out;
}

/// One draw from N(mean, L L^T) using factor.dim() standard normals from rng.
inline std::vector<double> mvn_sample(const CholeskyFactor& factor, std::span<const double> mean,
                                      RngStream& rng) {
    if (mean.size() != factor.dim()) {
        fail(Errc::SizeMismatch, "mvn_sample: mean length " + std::to_string(mean.size()) +
                                     " vs factor dim " + std::to_string(factor.dim()));
    }
    const auto draws = rng.normals(factor.dim());
    return mvn_transform(factor, mean, draws);
}

}  // namespace dcoe
