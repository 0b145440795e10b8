#include "gmpvba/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include <spdlog/spdlog.h>

namespace gmpvba {

void Hyperparameters::validate() const
{
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::invalid_argument(std::string(name) + " must be finite and > 0, got " + std::to_string(v));
    };
    positive(alpha_zeta0, "alpha_zeta0");
    positive(beta_zeta0, "beta_zeta0");
    positive(alpha0, "alpha0");
    positive(beta0, "beta0");
    positive(v0, "v0");
    potts.validate();
    if (!class_prior_means.empty() && class_prior_means.size() != static_cast<std::size_t>(potts.num_classes))
        throw DimensionError("per-class prior means", static_cast<std::size_t>(potts.num_classes),
                             class_prior_means.size());
}

bool Hyperparameters::satisfies_ratio_caps() const noexcept
{
    return alpha_zeta0 / beta_zeta0 <= 1.0 && alpha0 / beta0 <= 1.0;
}

Hyperparameters fix_hyperparameters(const Volume& f0, const LabelField& z0, int num_classes, double snr_db,
                                    double gamma0)
{
    if (f0.size() == 0 || f0.size() != z0.size())
        throw DimensionError("initial segmentation", f0.size(), z0.size());
    if (z0.num_classes != num_classes)
        throw std::invalid_argument("initial segmentation has " + std::to_string(z0.num_classes) +
                                    " classes, expected " + std::to_string(num_classes));
    if (!(snr_db >= 0.0) || !std::isfinite(snr_db))
        throw std::invalid_argument("snr_db must be finite and >= 0, got " + std::to_string(snr_db));
    z0.validate();

    Hyperparameters h;
    h.alpha_zeta0 = kNearZeroGammaConstant;
    h.beta_zeta0 = kNearZeroGammaConstant;
    h.alpha0 = kNearZeroGammaConstant;
    h.beta0 = kNearZeroGammaConstant * std::pow(10.0, snr_db / 10.0);

    const auto [lo, hi] = std::minmax_element(f0.values.begin(), f0.values.end());
    h.m0 = 0.5 * (*lo + *hi);
    const double range = *hi - *lo;
    h.v0 = range > 0.0 ? range * range : 1.0;

    auto counts = z0.counts();
    double total = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (counts[k] == 0) {
            spdlog::warn("class {} is empty in the initial segmentation; using a count of 1 for alpha_{}", k + 1,
                         k + 1);
            counts[k] = 1;
        }
        total += static_cast<double>(counts[k]);
    }
    h.potts.num_classes = num_classes;
    h.potts.gamma0 = gamma0;
    h.potts.alpha.resize(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k)
        h.potts.alpha[k] = std::log(static_cast<double>(counts[k]) / total);
    h.validate();
    return h;
}

bool PhantomShape::contains(double x, double y) const noexcept
{
    if (kind == Kind::Disk)
        return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= radius * radius;
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
}

void PhantomSpec::validate() const
{
    if (shape.size() == 0)
        throw std::invalid_argument("phantom grid is empty");
    if (num_classes < 1)
        throw std::invalid_argument("phantom needs K >= 1");
    const auto K = static_cast<std::size_t>(num_classes);
    if (means.size() != K || variances.size() != K)
        throw std::invalid_argument("phantom needs one mean and one variance per class");
    for (std::size_t k = 0; k < K; ++k) {
        if (!(variances[k] >= 0.0))
            throw std::invalid_argument("phantom class variances must be >= 0");
        for (std::size_t l = 0; l < k; ++l)
            if (means[k] == means[l])
                throw std::invalid_argument("phantom class means must be distinct");
    }
    if (background < 0 || background >= num_classes)
        throw std::invalid_argument("phantom background class out of range");
    for (const auto& s : shapes) {
        if (s.label < 0 || s.label >= num_classes)
            throw std::invalid_argument("phantom shape label out of range");
        if (s.kind == PhantomShape::Kind::Disk && !(s.radius > 0.0))
            throw std::invalid_argument("phantom disk radius must be > 0");
        if (s.kind == PhantomShape::Kind::Rectangle && (s.x1 < s.x0 || s.y1 < s.y0))
            throw std::invalid_argument("phantom rectangle corners are inverted");
    }
}

Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed)
{
    spec.validate();
    const auto& shape = spec.shape;
    Phantom p{Volume(shape), LabelField(shape, spec.num_classes, spec.background), 0};
    for (std::size_t zz = 0; zz < shape.nz; ++zz) {
        for (std::size_t y = 0; y < shape.ny; ++y) {
            for (std::size_t x = 0; x < shape.nx; ++x) {
                int hits = 0;
                for (const auto& s : spec.shapes) {
                    if (s.contains(static_cast<double>(x), static_cast<double>(y))) {
                        p.z[shape.index(x, y, zz)] = s.label;
                        ++hits;
                    }
                }
                p.overlapped += hits > 1;
            }
        }
    }
    if (p.overlapped > 0)
        spdlog::info("phantom: {} pixels covered by several shapes; the last shape wins", p.overlapped);

    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t j = 0; j < p.f.size(); ++j) {
        const auto k = static_cast<std::size_t>(p.z[j]);
        const double e = normal(gen);
        p.f[j] = spec.means[k] + std::sqrt(spec.variances[k]) * e;
    }
    return p;
}

SimulatedData simulate_data(const LinearOperator& op, const Volume& f_true, double snr_db, std::uint64_t seed)
{
    SimulatedData out;
    out.g = op.apply(f_true.values);
    const std::size_t m = out.g.size();
    if (std::isinf(snr_db) && snr_db > 0) {
        out.rho_zeta.assign(m, std::numeric_limits<double>::infinity());
        return out;
    }
    double power = 0.0;
    for (double v : out.g)
        power += v * v;
    if (!(power > 0.0))
        throw std::invalid_argument("H f is zero; the noise level cannot be set from an SNR");
    const double noise_variance = power / static_cast<double>(m) / std::pow(10.0, snr_db / 10.0);
    out.rho_zeta.assign(m, 1.0 / noise_variance);

    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd = std::sqrt(noise_variance);
    for (auto& v : out.g)
        v += sd * normal(gen);
    return out;
}

}  // namespace gmpvba
