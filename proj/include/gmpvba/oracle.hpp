#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "gmpvba/grid.hpp"
#include "gmpvba/linops.hpp"
#include "gmpvba/model.hpp"
#include "gmpvba/potts.hpp"
#include "gmpvba/vba.hpp"

namespace gmpvba {

/// The hierarchical model with every hyperparameter fixed at a point:
///   z ~ Potts, f_j | z_j = k ~ N(m_k, 1/rho_k), g | f ~ N(H f, diag(1/rho_zeta)).
struct PinnedModel {
    std::shared_ptr<const LinearOperator> op;
    MeasurementVector g;
    GridShape shape;
    std::vector<double> class_means;
    std::vector<double> class_precisions;
    std::vector<double> noise_precisions;
    PottsParams potts;

    int num_classes() const noexcept { return potts.num_classes; }

    /// Sizes, positive finite precisions, a valid Potts prior.
    void validate() const;
};

/// Largest K^N handled by exact_posterior.
inline constexpr std::uint64_t kMaxEnumeration = std::uint64_t{1} << 20;

struct PosteriorSummary {
    std::vector<double> marginals;  ///< P(z_j = k | g), voxel-major N x K
    std::vector<double> mean;       ///< E[f_j | g]
    std::vector<double> variance;   ///< Var[f_j | g]
};

struct ExactPosterior : PosteriorSummary {
    double total_probability = 0.0;  ///< sum of the normalized weights
    std::uint64_t configurations = 0;
};

/// Sums over every z in {0..K-1}^N with weights
/// exp(log_prior_unnormalized(z)) N(g | H m_z, H D_z H^T + diag(1/rho_zeta)).
/// Throws when K^N exceeds kMaxEnumeration.
ExactPosterior exact_posterior(const PinnedModel& pm);

struct GibbsEstimate : PosteriorSummary {
    std::vector<double> marginal_se;  ///< batch-means standard errors
    std::vector<double> mean_se;
    int samples = 0;
};

/// Collapsed Gibbs sampler: single-site label updates from
/// p(z_j | z_-j, g) with f integrated out, raster order. f enters through
/// the exact Gaussian p(f | z, g), whose mean and variance are averaged
/// over the label samples, as are the site conditionals for the marginals.
/// Deterministic given the seed.
GibbsEstimate gibbs_reference(const PinnedModel& pm, int samples, int burn_in, std::uint64_t seed);

/// Hyperparameters that hold the VBA hyperparameter factors at the pinned
/// values: Gamma priors of shape `shape` with means at the true precisions,
/// class-mean priors N(m_k, v0).
Hyperparameters pinned_hyperparameters(const PinnedModel& pm, double shape = 1e6, double v0 = 1e-8);

/// Starting state for a pinned run: m_tilde = m_k, v_tilde = 1/rho_k,
/// qz = exp(alpha_k), and the hyperparameter factors at their priors.
PosteriorState pinned_initial_state(const PinnedModel& pm, const Hyperparameters& hyper);

/// Noise precision implied by `snr_db` for data H f, as in simulate_data.
double noise_precision_for_snr(const LinearOperator& op, const Volume& f, double snr_db);

struct PinnedInstance {
    PinnedModel model;
    LabelField z_true;
    Volume f_true;
};

/// Test instance with known truth: z from `label_sweeps` Gibbs sweeps of
/// the uniform-field Potts prior (gamma0), f_j ~ N(m_{z_j}, class_variance),
/// g = H f + noise at `snr_db`. The pinned values are the true ones.
PinnedInstance simulate_pinned_instance(std::shared_ptr<const LinearOperator> op, const GridShape& shape,
                                        std::vector<double> class_means, double class_variance, double gamma0,
                                        double snr_db, int label_sweeps, std::uint64_t seed);

struct OracleComparison {
    std::vector<double> mean_abs_diff;      ///< per voxel |PM_vba - PM_exact|
    std::vector<double> marginal_abs_diff;  ///< per voxel max_k |q - P|
    double max_mean_diff = 0.0;
    double mean_mean_diff = 0.0;
    double max_marginal_diff = 0.0;
    double mean_marginal_diff = 0.0;
};

/// VBA posterior mean is m_bar_j = sum_k qz[j,k] m_tilde[j,k].
OracleComparison compare_with_exact(const PosteriorState& vba, const PosteriorSummary& exact);

}  // namespace gmpvba
