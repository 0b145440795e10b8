#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "gmpvba/grid.hpp"
#include "gmpvba/linops.hpp"
#include "gmpvba/potts.hpp"

namespace gmpvba {

/// Fixed constants of the hierarchical model:
///   rho_zeta_i ~ Gamma(alpha_zeta0, beta_zeta0)   (shape, rate)
///   m_k        ~ N(m0, v0)
///   rho_k      ~ Gamma(alpha0, beta0)
///   z          ~ Potts(alpha, gamma0)
struct Hyperparameters {
    double alpha_zeta0 = 1e-3;
    double beta_zeta0 = 1e-3;
    double alpha0 = 1e-3;
    double beta0 = 1e-3;
    double m0 = 0.0;
    double v0 = 1.0;
    /// Optional per-class prior means replacing m0. Used to pin the class
    /// means of oracle comparisons; empty in the ordinary model.
    std::vector<double> class_prior_means;
    PottsParams potts;

    int num_classes() const noexcept { return potts.num_classes; }
    double prior_mean(int k) const
    {
        return class_prior_means.empty() ? m0 : class_prior_means[static_cast<std::size_t>(k)];
    }

    /// Positivity of all Gamma constants and v0, and a valid Potts prior.
    void validate() const;

    /// alpha_zeta0 / beta_zeta0 <= 1 and alpha0 / beta0 <= 1.
    bool satisfies_ratio_caps() const noexcept;
};

/// Sets the hyperparameters from an initial reconstruction and segmentation:
/// Gamma constants near zero with alpha_zeta0/beta_zeta0 = 1 and
/// alpha0/beta0 = 10^(-snr_db/10), m0 at the midpoint of the f0 range,
/// v0 = range^2, alpha_k = ln(N_k / N). An empty class is given a count of
/// one voxel (with a warning) and the field is renormalized.
Hyperparameters fix_hyperparameters(const Volume& f0, const LabelField& z0, int num_classes, double snr_db,
                                    double gamma0 = 1.0);

inline constexpr double kNearZeroGammaConstant = 1e-3;

struct PhantomShape {
    enum class Kind { Disk, Rectangle };
    Kind kind = Kind::Disk;
    int label = 0;
    // Disk: center (cx, cy) and radius. Pixel (x, y) is inside when
    // (x - cx)^2 + (y - cy)^2 <= radius^2.
    double cx = 0.0, cy = 0.0, radius = 0.0;
    // Rectangle: x0 <= x <= x1 and y0 <= y <= y1.
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

    bool contains(double x, double y) const noexcept;
};

/// Piecewise phantom: background class plus shapes painted in order.
struct PhantomSpec {
    GridShape shape;
    int num_classes = 2;
    std::vector<double> means;
    std::vector<double> variances;
    std::vector<PhantomShape> shapes;
    int background = 0;

    void validate() const;
};

struct Phantom {
    Volume f;
    LabelField z;
    std::size_t overlapped = 0;  ///< pixels painted by more than one shape
};

/// Labels from the geometry (last shape wins), then f_j ~ N(mean_k, var_k).
Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed);

struct SimulatedData {
    MeasurementVector g;
    std::vector<double> rho_zeta;  ///< true noise precision per measurement
};

/// g = H f + zeta with homoscedastic zeta_i ~ N(0, 1 / rho) and
/// rho = 10^(snr_db/10) * M / ||H f||^2. snr_db = +inf gives g = H f exactly
/// and rho = +inf.
SimulatedData simulate_data(const LinearOperator& op, const Volume& f_true, double snr_db, std::uint64_t seed);

inline constexpr double kNoiseless = std::numeric_limits<double>::infinity();

}  // namespace gmpvba
