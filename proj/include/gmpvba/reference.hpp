#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gmpvba/linops.hpp"
#include "gmpvba/model.hpp"
#include "gmpvba/potts.hpp"
#include "gmpvba/vba.hpp"

/// Single-threaded implementations written directly from the update
/// formulas, without cached rearrangements or blocked reductions. Tests
/// compare the parallel kernels against these; the benchmark times both.
namespace gmpvba::reference {

Auxiliaries compute_auxiliaries(const PosteriorState& state, const LinearOperator& op, std::span<const double> g);

VolumeUpdate update_volume(const PosteriorState& state, const Auxiliaries& aux,
                           VolumeStep step = VolumeStep::Damped);

/// qz[j,k] ∝ exp(a_jk + 2 gamma0 * sum_{i in V(j)} qz_prev[i,k]) with a_jk the
/// full three-line label weight, including every class-independent term.
std::vector<double> update_labels(const PosteriorState& state, const Auxiliaries& aux, const Hyperparameters& hyper);

NoisePrecisionUpdate update_noise_precisions(const PosteriorState& state, const Auxiliaries& aux,
                                             const LinearOperator& op, std::span<const double> g,
                                             const Hyperparameters& hyper);

double entropy(const PosteriorState& state);
double expected_log_joint(const PosteriorState& state, const Auxiliaries& aux, const LinearOperator& op,
                          std::span<const double> g, const Hyperparameters& hyper);

/// Raster-order single-site Gibbs sampler with the same checkerboard
/// schedule and random streams as gmpvba::sample_potts.
LabelField sample_potts(const GridShape& shape, const PottsParams& params, int sweeps, std::uint64_t seed);

}  // namespace gmpvba::reference
