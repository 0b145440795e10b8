#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gmpvba/grid.hpp"

namespace gmpvba {

/// Potts label prior
///
///   p(z) ∝ exp( sum_j [ alpha_{z_j} + gamma0 * sum_{i in V(j)} [z_i == z_j] ] )
///
/// with V(j) the axis-adjacent voxels (4 in 2D, 6 in 3D, no wrap). The pair
/// term runs over ordered pairs, so every unordered neighbor pair contributes
/// 2 * gamma0 when its labels agree. The partition function is never formed.
struct PottsParams {
    int num_classes = 1;
    std::vector<double> alpha;  ///< log class proportions, sum_k exp(alpha_k) = 1
    double gamma0 = 0.0;        ///< granularity coefficient

    static PottsParams uniform(int num_classes, double gamma0);

    /// Throws unless K >= 1, |alpha| = K, |sum exp(alpha) - 1| <= 1e-12, gamma0 >= 0.
    void validate() const;
};

/// Up to 6 neighbors without allocation.
struct NeighborList {
    std::array<std::size_t, 6> index{};
    int count = 0;

    const std::size_t* begin() const noexcept { return index.data(); }
    const std::size_t* end() const noexcept { return index.data() + count; }
};

inline NeighborList neighbor_list(const GridShape& shape, std::size_t j) noexcept
{
    NeighborList n;
    const std::size_t x = j % shape.nx;
    const std::size_t y = (j / shape.nx) % shape.ny;
    const std::size_t z = j / (shape.nx * shape.ny);
    const std::size_t plane = shape.nx * shape.ny;
    if (x > 0)
        n.index[n.count++] = j - 1;
    if (x + 1 < shape.nx)
        n.index[n.count++] = j + 1;
    if (y > 0)
        n.index[n.count++] = j - shape.nx;
    if (y + 1 < shape.ny)
        n.index[n.count++] = j + shape.nx;
    if (z > 0)
        n.index[n.count++] = j - plane;
    if (z + 1 < shape.nz)
        n.index[n.count++] = j + plane;
    return n;
}

/// Indices of the axis-adjacent voxels of j. Throws if j is out of range.
std::vector<std::size_t> neighbors(const GridShape& shape, std::size_t j);

/// sum_j [alpha_{z_j} + gamma0 * #{i in V(j) : z_i == z_j}], without -ln Z.
double log_prior_unnormalized(const LabelField& z, const PottsParams& params);

/// Log weights of the exact site conditional p(z_j = k | z_-j) of the prior
/// above: alpha_k + 2 gamma0 * #{i in V(j) : z_i == k}.
void site_log_weights(const LabelField& z, const PottsParams& params, std::size_t j, std::span<double> out);

/// Draws from the prior with checkerboard Gibbs sweeps. Sites start
/// independent with probabilities exp(alpha_k); each sweep updates the even
/// sites ((x + y + z) % 2 == 0) and then the odd ones. Per-site uniforms come
/// from CounterRng, so the result depends only on (shape, params, sweeps, seed).
LabelField sample_potts(const GridShape& shape, const PottsParams& params, int sweeps, std::uint64_t seed);

/// Fraction of unordered neighbor pairs whose labels agree.
double like_neighbor_fraction(const LabelField& z);

}  // namespace gmpvba
