#pragma once

#include <span>
#include <vector>

#include "gmpvba/grid.hpp"
#include "gmpvba/linops.hpp"
#include "gmpvba/model.hpp"
#include "gmpvba/vba.hpp"

namespace gmpvba {

/// Class table of an initial segmentation. Variances are floored at
/// kVarianceFloor * range^2 (or kVarianceFloor for a constant volume).
struct InitialClasses {
    LabelField z0;
    std::vector<double> means;
    std::vector<double> variances;
    std::vector<std::size_t> counts;
};

inline constexpr double kVarianceFloor = 1e-8;

/// Scalar Lloyd iterations. Centers start at the (k + 1/2)/K quantiles of
/// the sorted intensities; each voxel goes to the nearest center with ties
/// to the lower class. An empty cluster is moved to the intensity farthest
/// from its current center. Stops when the assignment is unchanged or after
/// max_iter rounds. Throws if f0 has fewer than K distinct values.
InitialClasses kmeans_segment(const Volume& f0, int num_classes, int max_iter = 100);

/// Threshold maximizing the between-class variance of a 256-bin histogram
/// over [min f0, max f0]; ties go to the lower threshold. Voxels at or below
/// the returned threshold are class 0.
double otsu_threshold(const Volume& f0);

/// Two-class segmentation at otsu_threshold. Throws for constant f0.
InitialClasses otsu_segment(const Volume& f0);

/// Class means, floored variances and counts of a given labeling. An empty
/// class gets the mean and variance of the whole volume, with a warning.
InitialClasses classes_from_labels(const Volume& f0, LabelField z0);

/// Initial posterior state:
///   m_tilde[j,k]   = f0_j if z0_j = k, else m_k
///   qz[j,k]        = [z0_j == k]
///   v_tilde[j,k]   = 1 / (1/v_k + (alpha_zeta0/beta_zeta0) [H^T H]_jj)
///   alpha_zeta_i   = alpha_zeta0 + 1/2
///   beta_zeta_i    = beta_zeta0 + (g_i - [H f0]_i)^2 / 2
///   v0_tilde_k     = 1 / (1/v0 + N_k / v_k)
///   m0_tilde_k     = v0_tilde_k (m0 / v0 + N_k m_k / v_k)
///   alpha0_tilde_k = alpha0 + N_k / 2
///   beta0_tilde_k  = beta0 + N_k v_k / 2
PosteriorState initialize_state(const Volume& f0, const InitialClasses& init, const LinearOperator& op,
                                const Hyperparameters& hyper, std::span<const double> g);

/// Backprojection normalized per voxel:
///   f0_j = [H^T g]_j / [|H|^T |H| 1]_j
/// and 0 where column j of H is zero. Recovers a constant volume exactly,
/// zero-padded borders included. Used when no initial volume is supplied.
Volume fallback_initial_volume(const LinearOperator& op, std::span<const double> g, const GridShape& shape);

}  // namespace gmpvba
