#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmpvba/grid.hpp"
#include "gmpvba/linops.hpp"
#include "gmpvba/model.hpp"

namespace gmpvba {

/// Parameters of the factorized approximate posterior
///
///   q(f | z) = prod_j N(f_j | m_tilde[j,k], v_tilde[j,k])   for z_j = k
///   q(z)     = prod_j qz[j,k]
///   q(rho_zeta_i) = Gamma(alpha_zeta[i], beta_zeta[i])
///   q(m_k)        = N(m0_tilde[k], v0_tilde[k])
///   q(rho_k)      = Gamma(alpha0_tilde[k], beta0_tilde[k])
///
/// Per-voxel arrays are voxel-major: element (j, k) lives at j * K + k.
struct PosteriorState {
    GridShape shape;
    int num_classes = 1;

    std::vector<double> m_tilde;
    std::vector<double> v_tilde;
    std::vector<double> qz;
    std::vector<double> alpha_zeta;
    std::vector<double> beta_zeta;
    std::vector<double> m0_tilde;
    std::vector<double> v0_tilde;
    std::vector<double> alpha0_tilde;
    std::vector<double> beta0_tilde;

    PosteriorState() = default;
    PosteriorState(GridShape shape, int num_classes, std::size_t num_measurements);

    std::size_t voxels() const noexcept { return shape.size(); }
    std::size_t measurements() const noexcept { return alpha_zeta.size(); }
    std::size_t classes() const noexcept { return static_cast<std::size_t>(num_classes); }
    std::size_t at(std::size_t j, std::size_t k) const noexcept { return j * classes() + k; }

    /// Sizes, strict positivity of variances and Gamma parameters, and
    /// qz rows that are nonnegative and sum to 1 within 1e-12.
    void validate() const;
};

/// Quantities derived from a state and reused by several update families.
struct Auxiliaries {
    std::vector<double> m_bar;              ///< sum_k m_tilde[j,k] qz[j,k]
    std::vector<double> v_bar;              ///< sum_k v_tilde[j,k] qz[j,k]
    std::vector<double> m2;                 ///< sum_k (m_tilde[j,k] - m_bar[j])^2 qz[j,k]
    std::vector<double> v2;                 ///< v_bar + m2, the variance of f_j under q
    std::vector<double> v_zeta;             ///< beta_zeta / alpha_zeta
    std::vector<double> forward_mean;       ///< H m_bar
    std::vector<double> gram_diag;          ///< [H^T V_zeta^-1 H]_jj
    std::vector<double> curvature;          ///< separable_curvature(V_zeta^-1) >= gram_diag
    std::vector<double> residual_backproj;  ///< [H^T V_zeta^-1 (g - H m_bar)]_j
};

Auxiliaries compute_auxiliaries(const PosteriorState& state, const LinearOperator& op, std::span<const double> g);

struct VolumeUpdate {
    std::vector<double> m_tilde;
    std::vector<double> v_tilde;
};

enum class VolumeStep {
    /// Jacobi with d = gram_diag replaced by c = curvature >= d:
    ///   m_tilde[j,k] = m_bar_j + (rho_k (m0_tilde_k - m_bar_j) + r_j) / (rho_k + c_j)
    /// with r = residual_backproj. For K = 1 this maximizes a separable lower
    /// bound of F that touches F at the current state, so F cannot decrease.
    /// Equals Jacobi when H^T V_zeta^-1 H is diagonal.
    Damped,
    /// Every voxel maximizes F exactly as if the others were fixed:
    ///   m_tilde[j,k] = m_bar_j + (rho_k (m0_tilde_k - m_bar_j) + r_j) / (rho_k + d_j)
    /// Diverges when the columns of H overlap strongly (blur, projection).
    Jacobi,
};

VolumeUpdate update_volume(const PosteriorState& state, const Auxiliaries& aux,
                           VolumeStep step = VolumeStep::Damped);

/// Label factor from the volume factor and the neighbor label
/// probabilities held by `state` (the previous iteration's values).
/// The neighbor term is 2 gamma0 * sum_{i in V(j)} qz_prev[i,k], the
/// derivative of the ordered-pair Potts block of F.
std::vector<double> update_labels(const PosteriorState& state, const Auxiliaries& aux, const Hyperparameters& hyper);

/// Unnormalized log label weight of one (voxel, class) pair without the
/// neighbor term. Exposed for tests; update_labels evaluates the same
/// expression with class-independent parts removed.
double label_log_weight(const PosteriorState& state, const Auxiliaries& aux, const Hyperparameters& hyper,
                        std::size_t j, std::size_t k);

struct NoisePrecisionUpdate {
    std::vector<double> alpha_zeta;
    std::vector<double> beta_zeta;
};

/// alpha_zeta_i = alpha_zeta0 + 1/2,
/// beta_zeta_i  = beta_zeta0 + ((g_i - [H m_bar]_i)^2 + [H V2 H^T]_ii) / 2.
NoisePrecisionUpdate update_noise_precisions(const PosteriorState& state, const Auxiliaries& aux,
                                             const LinearOperator& op, std::span<const double> g,
                                             const Hyperparameters& hyper);

struct ClassMeanUpdate {
    std::vector<double> m0_tilde;
    std::vector<double> v0_tilde;
};

ClassMeanUpdate update_class_means(const PosteriorState& state, const Hyperparameters& hyper);

struct ClassPrecisionUpdate {
    std::vector<double> alpha0_tilde;
    std::vector<double> beta0_tilde;
};

ClassPrecisionUpdate update_class_precisions(const PosteriorState& state, const Hyperparameters& hyper);

/// E_q[N_k] = sum_j qz[j,k].
std::vector<double> expected_class_counts(const PosteriorState& state);

/// Entropy of Gamma(shape, rate).
double gamma_entropy(double shape, double rate);

struct EntropyTerms {
    double volume = 0.0;            ///< Gaussian volume factor given the labels
    double labels = 0.0;            ///< -sum q ln q
    double noise_precisions = 0.0;  ///< M Gamma factors
    double class_means = 0.0;       ///< K Gaussian factors
    double class_precisions = 0.0;  ///< K Gamma factors
    double total() const noexcept { return volume + labels + noise_precisions + class_means + class_precisions; }
};

EntropyTerms entropy_terms(const PosteriorState& state);
double entropy(const PosteriorState& state);

/// Expected log joint density of (g, f, rho_zeta, z, m, rho) under q, split
/// by factor. The Potts log-partition function is omitted; every other
/// constant is kept.
struct LogJointTerms {
    double likelihood = 0.0;
    double volume_prior = 0.0;
    double label_prior = 0.0;
    double noise_prior = 0.0;
    double class_mean_prior = 0.0;
    double class_precision_prior = 0.0;
    double total() const noexcept
    {
        return likelihood + volume_prior + label_prior + noise_prior + class_mean_prior + class_precision_prior;
    }
};

LogJointTerms expected_log_joint_terms(const PosteriorState& state, const Auxiliaries& aux,
                                       std::span<const double> g, const Hyperparameters& hyper);
double expected_log_joint(const PosteriorState& state, const Auxiliaries& aux, std::span<const double> g,
                          const Hyperparameters& hyper);

/// Negative free energy F = entropy + expected log joint (up to -ln Z).
/// `aux` must be computed from `state`.
double free_energy(const PosteriorState& state, const Auxiliaries& aux, std::span<const double> g,
                   const Hyperparameters& hyper);
double free_energy(const PosteriorState& state, const LinearOperator& op, std::span<const double> g,
                   const Hyperparameters& hyper);

struct FamilyTimings {
    double volume = 0.0;
    double labels = 0.0;
    double auxiliaries = 0.0;
    double noise_precisions = 0.0;
    double class_means = 0.0;
    double class_precisions = 0.0;
    double free_energy = 0.0;
};

struct FreeEnergyRecord {
    int iteration = 0;
    double entropy = 0.0;
    double expected_log_joint = 0.0;
    double free_energy = 0.0;
    FamilyTimings wall_ms;
};

struct FreeEnergyTrace {
    double initial_entropy = 0.0;
    double initial_expected_log_joint = 0.0;
    double initial_free_energy = 0.0;
    std::vector<FreeEnergyRecord> records;

    /// Iterations where F dropped by more than `relative_slack * |F_prev|`.
    std::vector<int> decreases(double relative_slack) const;
};

struct IterateOptions {
    double tol = 1e-6;
    int max_iter = 200;
    VolumeStep volume_step = VolumeStep::Damped;
    /// Called after every completed iteration with the updated state.
    std::function<void(const PosteriorState&, const FreeEnergyRecord&)> observer;
};

struct IterateResult {
    PosteriorState state;
    FreeEnergyTrace trace;
    bool converged = false;
};

class NonFiniteFreeEnergy : public std::runtime_error {
public:
    NonFiniteFreeEnergy(int iteration, std::string diagnostic);
    int iteration() const noexcept { return iteration_; }
    const std::string& diagnostic() const noexcept { return diagnostic_; }

private:
    int iteration_;
    std::string diagnostic_;
};

/// Coordinate updates in the fixed order: volume factor, label factor (both
/// from the previous iteration's quantities), auxiliaries, noise precisions,
/// class means, class precisions. Stops when
/// |F(t) - F(t-1)| <= tol * |F(t-1)| or after max_iter iterations.
IterateResult iterate(PosteriorState state, const LinearOperator& op, std::span<const double> g,
                      const Hyperparameters& hyper, const IterateOptions& options = {});

struct Estimates {
    LabelField z_hat;               ///< argmax_k qz[j,k], ties to the lower class
    Volume f_hat;                   ///< m_tilde[j, z_hat_j]
    Volume uncertainty;             ///< v_tilde[j, z_hat_j]
    Volume confidence;              ///< max_k qz[j,k]
    std::vector<double> rho_zeta_hat;
    std::vector<double> m_hat;
    std::vector<double> rho_hat;
    std::vector<double> expected_counts;
};

Estimates extract_estimates(const PosteriorState& state);

/// JSON-style dump of the free-energy blocks and of non-finite state entries.
std::string free_energy_diagnostic(const PosteriorState& state, const Auxiliaries& aux, std::span<const double> g,
                                   const Hyperparameters& hyper);

}  // namespace gmpvba
