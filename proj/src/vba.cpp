#include "gmpvba/vba.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include "gmpvba/parallel.hpp"
#include "gmpvba/potts.hpp"
#include "gmpvba/special.hpp"

namespace gmpvba {

namespace {

using Index = std::ptrdiff_t;

const double kLogTwoPi = std::log(2.0 * std::numbers::pi);

/// Label probabilities below this are set to zero before renormalizing.
constexpr double kProbabilityFloor = 1e-300;

double elapsed_ms(std::chrono::steady_clock::time_point since)
{
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

void require_positive_array(const std::vector<double>& v, const char* name)
{
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!(v[i] > 0.0) || !std::isfinite(v[i]))
            throw std::invalid_argument(std::string("posterior state: ") + name + "[" + std::to_string(i) +
                                        "] = " + std::to_string(v[i]) + " is not finite and positive");
}

}  // namespace

PosteriorState::PosteriorState(GridShape s, int k, std::size_t num_measurements)
    : shape(s),
      num_classes(k),
      m_tilde(s.size() * static_cast<std::size_t>(k), 0.0),
      v_tilde(s.size() * static_cast<std::size_t>(k), 1.0),
      qz(s.size() * static_cast<std::size_t>(k), 1.0 / k),
      alpha_zeta(num_measurements, 1.0),
      beta_zeta(num_measurements, 1.0),
      m0_tilde(static_cast<std::size_t>(k), 0.0),
      v0_tilde(static_cast<std::size_t>(k), 1.0),
      alpha0_tilde(static_cast<std::size_t>(k), 1.0),
      beta0_tilde(static_cast<std::size_t>(k), 1.0)
{
}

void PosteriorState::validate() const
{
    if (num_classes < 1)
        throw std::invalid_argument("posterior state needs K >= 1");
    const std::size_t nk = voxels() * classes();
    if (m_tilde.size() != nk || v_tilde.size() != nk || qz.size() != nk)
        throw DimensionError("per-voxel posterior arrays", nk, std::min({m_tilde.size(), v_tilde.size(), qz.size()}));
    if (beta_zeta.size() != alpha_zeta.size())
        throw DimensionError("noise precision parameters", alpha_zeta.size(), beta_zeta.size());
    for (const auto* v : {&m0_tilde, &v0_tilde, &alpha0_tilde, &beta0_tilde})
        if (v->size() != classes())
            throw DimensionError("per-class posterior arrays", classes(), v->size());
    require_positive_array(v_tilde, "v_tilde");
    require_positive_array(alpha_zeta, "alpha_zeta");
    require_positive_array(beta_zeta, "beta_zeta");
    require_positive_array(v0_tilde, "v0_tilde");
    require_positive_array(alpha0_tilde, "alpha0_tilde");
    require_positive_array(beta0_tilde, "beta0_tilde");
    for (std::size_t j = 0; j < voxels(); ++j) {
        double total = 0.0;
        for (std::size_t k = 0; k < classes(); ++k) {
            const double q = qz[at(j, k)];
            if (!(q >= 0.0))
                throw std::invalid_argument("posterior state: negative label probability at voxel " +
                                            std::to_string(j));
            total += q;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw std::invalid_argument("posterior state: label probabilities of voxel " + std::to_string(j) +
                                        " sum to " + std::to_string(total));
    }
}

// ---------------------------------------------------------------------------
// Auxiliaries

Auxiliaries compute_auxiliaries(const PosteriorState& state, const LinearOperator& op, std::span<const double> g)
{
    const std::size_t n = state.voxels();
    const std::size_t K = state.classes();
    require_size(g, op.range_size(), "measurements");
    if (op.domain_size() != n)
        throw DimensionError("operator domain", n, op.domain_size());
    if (state.measurements() != op.range_size())
        throw DimensionError("noise precision parameters", op.range_size(), state.measurements());

    Auxiliaries aux;
    aux.m_bar.resize(n);
    aux.v_bar.resize(n);
    aux.m2.resize(n);
    aux.v2.resize(n);
#pragma omp parallel for schedule(static)
    for (Index jj = 0; jj < static_cast<Index>(n); ++jj) {
        const auto j = static_cast<std::size_t>(jj);
        const double* m = &state.m_tilde[j * K];
        const double* v = &state.v_tilde[j * K];
        const double* q = &state.qz[j * K];
        double mean = 0.0;
        double var = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            mean += m[k] * q[k];
            var += v[k] * q[k];
        }
        double spread = 0.0;
        for (std::size_t k = 0; k < K; ++k)
            spread += (m[k] - mean) * (m[k] - mean) * q[k];
        aux.m_bar[j] = mean;
        aux.v_bar[j] = var;
        aux.m2[j] = spread;
        aux.v2[j] = var + spread;
    }

    const std::size_t M = state.measurements();
    aux.v_zeta.resize(M);
    std::vector<double> precision(M);
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(M); ++i) {
        aux.v_zeta[i] = state.beta_zeta[i] / state.alpha_zeta[i];
        precision[i] = state.alpha_zeta[i] / state.beta_zeta[i];
    }

    aux.forward_mean = op.apply(aux.m_bar);
    aux.gram_diag = op.weighted_gram_diagonal(precision);
    aux.curvature = op.separable_curvature(precision);
    std::vector<double> weighted_residual(M);
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(M); ++i)
        weighted_residual[i] = precision[i] * (g[i] - aux.forward_mean[i]);
    aux.residual_backproj = op.adjoint(weighted_residual);
    return aux;
}

// ---------------------------------------------------------------------------
// Update families

VolumeUpdate update_volume(const PosteriorState& state, const Auxiliaries& aux, VolumeStep step)
{
    const std::size_t n = state.voxels();
    const std::size_t K = state.classes();
    std::vector<double> rho(K);
    for (std::size_t k = 0; k < K; ++k)
        rho[k] = state.alpha0_tilde[k] / state.beta0_tilde[k];

    const auto& curvature = step == VolumeStep::Jacobi ? aux.gram_diag : aux.curvature;
    VolumeUpdate out{std::vector<double>(n * K), std::vector<double>(n * K)};
#pragma omp parallel for schedule(static)
    for (Index jj = 0; jj < static_cast<Index>(n); ++jj) {
        const auto j = static_cast<std::size_t>(jj);
        const double mean = aux.m_bar[j];
        for (std::size_t k = 0; k < K; ++k) {
            out.v_tilde[j * K + k] = 1.0 / (rho[k] + aux.gram_diag[j]);
            out.m_tilde[j * K + k] =
                mean + (rho[k] * (state.m0_tilde[k] - mean) + aux.residual_backproj[j]) / (rho[k] + curvature[j]);
        }
    }
    return out;
}

double label_log_weight(const PosteriorState& state, const Auxiliaries& aux, const Hyperparameters& hyper,
                        std::size_t j, std::size_t k)
{
    const double rho = state.alpha0_tilde[k] / state.beta0_tilde[k];
    const double m = state.m_tilde[state.at(j, k)];
    const double v = state.v_tilde[state.at(j, k)];
    const double dm0 = m - state.m0_tilde[k];
    const double class_fit =
        rho * (v + state.v0_tilde[k] + dm0 * dm0) + std::log(state.beta0_tilde[k]) - digamma(state.alpha0_tilde[k]);
    const double d = aux.gram_diag[j];
    const double data_fit = (v + m * m) * d - 2.0 * m * (aux.m_bar[j] * d + aux.residual_backproj[j]);
    return hyper.potts.alpha[k] - 0.5 * class_fit - 0.5 * data_fit + 0.5 * std::log(v);
}

std::vector<double> update_labels(const PosteriorState& state, const Auxiliaries& aux, const Hyperparameters& hyper)
{
    const std::size_t n = state.voxels();
    const std::size_t K = state.classes();
    const double gamma0 = hyper.potts.gamma0;
    // Per-class constants: alpha_k - (ln beta0_tilde_k - psi(alpha0_tilde_k)) / 2 and rho_k.
    std::vector<double> offset(K);
    std::vector<double> rho(K);
    for (std::size_t k = 0; k < K; ++k) {
        rho[k] = state.alpha0_tilde[k] / state.beta0_tilde[k];
        offset[k] = hyper.potts.alpha[k] - 0.5 * (std::log(state.beta0_tilde[k]) - digamma(state.alpha0_tilde[k]));
    }

    std::vector<double> out(n * K);
#pragma omp parallel for schedule(static)
    for (Index jj = 0; jj < static_cast<Index>(n); ++jj) {
        const auto j = static_cast<std::size_t>(jj);
        const double d = aux.gram_diag[j];
        const double mean = aux.m_bar[j];
        const double r = aux.residual_backproj[j];
        const auto nbrs = neighbor_list(state.shape, j);
        double* logw = &out[j * K];
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
            const double m = state.m_tilde[j * K + k];
            const double v = state.v_tilde[j * K + k];
            const double dm0 = m - state.m0_tilde[k];
            const double dm = m - mean;
            // Data term rearranged as -(v d + d (m - mean)^2) / 2 + (m - mean) r
            // plus a class-independent constant.
            double a = offset[k] - 0.5 * rho[k] * (v + state.v0_tilde[k] + dm0 * dm0) - 0.5 * (v * d + d * dm * dm) +
                       dm * r + 0.5 * std::log(v);
            double coupling = 0.0;
            for (std::size_t i : nbrs)
                coupling += state.qz[i * K + k];
            a += 2.0 * gamma0 * coupling;
            logw[k] = a;
            top = std::max(top, a);
        }
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            double p = std::exp(logw[k] - top);
            if (p < kProbabilityFloor)
                p = 0.0;
            logw[k] = p;
            total += p;
        }
        for (std::size_t k = 0; k < K; ++k)
            logw[k] /= total;
    }
    return out;
}

NoisePrecisionUpdate update_noise_precisions(const PosteriorState& state, const Auxiliaries& aux,
                                             const LinearOperator& op, std::span<const double> g,
                                             const Hyperparameters& hyper)
{
    const std::size_t M = state.measurements();
    require_size(g, M, "measurements");
    const auto spread = op.row_weighted_square_sum(aux.v2);
    NoisePrecisionUpdate out{std::vector<double>(M), std::vector<double>(M)};
    const double shape = hyper.alpha_zeta0 + 0.5;
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(M); ++i) {
        const double r = g[i] - aux.forward_mean[i];
        out.alpha_zeta[i] = shape;
        out.beta_zeta[i] = hyper.beta_zeta0 + 0.5 * (r * r + spread[i]);
    }
    return out;
}

std::vector<double> expected_class_counts(const PosteriorState& state)
{
    const std::size_t K = state.classes();
    std::vector<double> counts(K);
    for (std::size_t k = 0; k < K; ++k)
        counts[k] = deterministic_sum(state.voxels(), [&](std::size_t j) { return state.qz[j * K + k]; });
    return counts;
}

ClassMeanUpdate update_class_means(const PosteriorState& state, const Hyperparameters& hyper)
{
    const std::size_t K = state.classes();
    const auto counts = expected_class_counts(state);
    ClassMeanUpdate out{std::vector<double>(K), std::vector<double>(K)};
    for (std::size_t k = 0; k < K; ++k) {
        const double rho = state.alpha0_tilde[k] / state.beta0_tilde[k];
        const double weighted = deterministic_sum(
            state.voxels(), [&](std::size_t j) { return state.m_tilde[j * K + k] * state.qz[j * K + k]; });
        const double v = 1.0 / (1.0 / hyper.v0 + rho * counts[k]);
        out.v0_tilde[k] = v;
        out.m0_tilde[k] = v * (hyper.prior_mean(static_cast<int>(k)) / hyper.v0 + rho * weighted);
    }
    return out;
}

ClassPrecisionUpdate update_class_precisions(const PosteriorState& state, const Hyperparameters& hyper)
{
    const std::size_t K = state.classes();
    const auto counts = expected_class_counts(state);
    ClassPrecisionUpdate out{std::vector<double>(K), std::vector<double>(K)};
    for (std::size_t k = 0; k < K; ++k) {
        const double spread = deterministic_sum(state.voxels(), [&](std::size_t j) {
            const double d = state.m_tilde[j * K + k] - state.m0_tilde[k];
            return (state.v0_tilde[k] + state.v_tilde[j * K + k] + d * d) * state.qz[j * K + k];
        });
        out.alpha0_tilde[k] = hyper.alpha0 + 0.5 * counts[k];
        out.beta0_tilde[k] = hyper.beta0 + 0.5 * spread;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Free energy

double gamma_entropy(double shape, double rate)
{
    return ln_gamma(shape) - std::log(rate) + shape - (shape - 1.0) * digamma(shape);
}

EntropyTerms entropy_terms(const PosteriorState& state)
{
    const std::size_t n = state.voxels();
    const std::size_t K = state.classes();
    EntropyTerms h;
    const double log_var = deterministic_sum(n, [&](std::size_t j) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double q = state.qz[j * K + k];
            if (q > 0.0)
                s += std::log(state.v_tilde[j * K + k]) * q;
        }
        return s;
    });
    h.volume = 0.5 * static_cast<double>(n) * (1.0 + kLogTwoPi) + 0.5 * log_var;
    h.labels = -deterministic_sum(n, [&](std::size_t j) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double q = state.qz[j * K + k];
            if (q > 0.0)
                s += q * std::log(q);
        }
        return s;
    });
    h.noise_precisions = deterministic_sum(state.measurements(), [&](std::size_t i) {
        return gamma_entropy(state.alpha_zeta[i], state.beta_zeta[i]);
    });
    h.class_means = 0.5 * static_cast<double>(K) * (1.0 + kLogTwoPi);
    for (std::size_t k = 0; k < K; ++k) {
        h.class_means += 0.5 * std::log(state.v0_tilde[k]);
        h.class_precisions += gamma_entropy(state.alpha0_tilde[k], state.beta0_tilde[k]);
    }
    return h;
}

double entropy(const PosteriorState& state)
{
    return entropy_terms(state).total();
}

LogJointTerms expected_log_joint_terms(const PosteriorState& state, const Auxiliaries& aux,
                                       std::span<const double> g, const Hyperparameters& hyper)
{
    const std::size_t n = state.voxels();
    const std::size_t M = state.measurements();
    const std::size_t K = state.classes();
    require_size(g, M, "measurements");
    LogJointTerms t;

    // E[ln rho_zeta_i] = psi(alpha) - ln beta, shared by likelihood and noise prior.
    std::vector<double> log_precision(M);
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(M); ++i)
        log_precision[i] = digamma(state.alpha_zeta[i]) - std::log(state.beta_zeta[i]);
    const double sum_log_precision = deterministic_sum(M, [&](std::size_t i) { return log_precision[i]; });
    const double sum_precision =
        deterministic_sum(M, [&](std::size_t i) { return state.alpha_zeta[i] / state.beta_zeta[i]; });
    const double misfit = deterministic_sum(M, [&](std::size_t i) {
        const double r = g[i] - aux.forward_mean[i];
        return r * r / aux.v_zeta[i];
    });
    const double spread = deterministic_sum(n, [&](std::size_t j) { return aux.v2[j] * aux.gram_diag[j]; });
    t.likelihood = -0.5 * static_cast<double>(M) * kLogTwoPi + 0.5 * sum_log_precision - 0.5 * misfit - 0.5 * spread;

    std::vector<double> rho(K), log_rho(K);
    for (std::size_t k = 0; k < K; ++k) {
        rho[k] = state.alpha0_tilde[k] / state.beta0_tilde[k];
        log_rho[k] = digamma(state.alpha0_tilde[k]) - std::log(state.beta0_tilde[k]);
    }
    const double volume_fit = deterministic_sum(n, [&](std::size_t j) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double d = state.m_tilde[j * K + k] - state.m0_tilde[k];
            s += (rho[k] * (state.v_tilde[j * K + k] + state.v0_tilde[k] + d * d) - log_rho[k]) * state.qz[j * K + k];
        }
        return s;
    });
    t.volume_prior = -0.5 * static_cast<double>(n) * kLogTwoPi - 0.5 * volume_fit;

    const double gamma0 = hyper.potts.gamma0;
    t.label_prior = deterministic_sum(n, [&](std::size_t j) {
        const auto nbrs = neighbor_list(state.shape, j);
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            double coupling = 0.0;
            for (std::size_t i : nbrs)
                coupling += state.qz[i * K + k];
            s += (hyper.potts.alpha[k] + gamma0 * coupling) * state.qz[j * K + k];
        }
        return s;
    });

    t.noise_prior = -static_cast<double>(M) * (ln_gamma(hyper.alpha_zeta0) - hyper.alpha_zeta0 * std::log(hyper.beta_zeta0)) +
                    (hyper.alpha_zeta0 - 1.0) * sum_log_precision - hyper.beta_zeta0 * sum_precision;

    t.class_mean_prior = -0.5 * static_cast<double>(K) * std::log(2.0 * std::numbers::pi * hyper.v0);
    t.class_precision_prior = -static_cast<double>(K) * (ln_gamma(hyper.alpha0) - hyper.alpha0 * std::log(hyper.beta0));
    for (std::size_t k = 0; k < K; ++k) {
        const double d = state.m0_tilde[k] - hyper.prior_mean(static_cast<int>(k));
        t.class_mean_prior -= 0.5 / hyper.v0 * (state.v0_tilde[k] + d * d);
        t.class_precision_prior += (hyper.alpha0 - 1.0) * log_rho[k] - hyper.beta0 * rho[k];
    }
    return t;
}

double expected_log_joint(const PosteriorState& state, const Auxiliaries& aux, std::span<const double> g,
                          const Hyperparameters& hyper)
{
    return expected_log_joint_terms(state, aux, g, hyper).total();
}

double free_energy(const PosteriorState& state, const Auxiliaries& aux, std::span<const double> g,
                   const Hyperparameters& hyper)
{
    return entropy(state) + expected_log_joint(state, aux, g, hyper);
}

double free_energy(const PosteriorState& state, const LinearOperator& op, std::span<const double> g,
                   const Hyperparameters& hyper)
{
    return free_energy(state, compute_auxiliaries(state, op, g), g, hyper);
}

std::vector<int> FreeEnergyTrace::decreases(double relative_slack) const
{
    std::vector<int> out;
    double previous = initial_free_energy;
    for (const auto& r : records) {
        if (r.free_energy < previous - relative_slack * std::abs(previous))
            out.push_back(r.iteration);
        previous = r.free_energy;
    }
    return out;
}

std::string free_energy_diagnostic(const PosteriorState& state, const Auxiliaries& aux, std::span<const double> g,
                                   const Hyperparameters& hyper)
{
    const auto h = entropy_terms(state);
    const auto e = expected_log_joint_terms(state, aux, g, hyper);
    auto count_bad = [](const std::vector<double>& v, bool positive) {
        return std::count_if(v.begin(), v.end(), [&](double x) { return !std::isfinite(x) || (positive && x <= 0.0); });
    };
    std::ostringstream os;
    os.precision(17);
    os << "{\n"
       << "  \"entropy\": {\"volume\": " << h.volume << ", \"labels\": " << h.labels
       << ", \"noise_precisions\": " << h.noise_precisions << ", \"class_means\": " << h.class_means
       << ", \"class_precisions\": " << h.class_precisions << "},\n"
       << "  \"expected_log_joint\": {\"likelihood\": " << e.likelihood << ", \"volume_prior\": " << e.volume_prior
       << ", \"label_prior\": " << e.label_prior << ", \"noise_prior\": " << e.noise_prior
       << ", \"class_mean_prior\": " << e.class_mean_prior
       << ", \"class_precision_prior\": " << e.class_precision_prior << "},\n"
       << "  \"invalid_entries\": {\"m_tilde\": " << count_bad(state.m_tilde, false)
       << ", \"v_tilde\": " << count_bad(state.v_tilde, true) << ", \"qz\": " << count_bad(state.qz, false)
       << ", \"alpha_zeta\": " << count_bad(state.alpha_zeta, true)
       << ", \"beta_zeta\": " << count_bad(state.beta_zeta, true)
       << ", \"m0_tilde\": " << count_bad(state.m0_tilde, false)
       << ", \"v0_tilde\": " << count_bad(state.v0_tilde, true)
       << ", \"alpha0_tilde\": " << count_bad(state.alpha0_tilde, true)
       << ", \"beta0_tilde\": " << count_bad(state.beta0_tilde, true) << "}\n"
       << "}\n";
    return os.str();
}

NonFiniteFreeEnergy::NonFiniteFreeEnergy(int iteration, std::string diagnostic)
    : std::runtime_error("free energy is not finite at iteration " + std::to_string(iteration)),
      iteration_(iteration),
      diagnostic_(std::move(diagnostic))
{
}

// ---------------------------------------------------------------------------
// Iteration

IterateResult iterate(PosteriorState state, const LinearOperator& op, std::span<const double> g,
                      const Hyperparameters& hyper, const IterateOptions& options)
{
    if (!(options.tol > 0.0))
        throw std::invalid_argument("iterate: tol must be > 0");
    if (options.max_iter < 1)
        throw std::invalid_argument("iterate: max_iter must be >= 1");
    hyper.validate();
    state.validate();
    if (hyper.num_classes() != state.num_classes)
        throw std::invalid_argument("iterate: hyperparameters and state disagree on K");

    IterateResult result;
    auto aux = compute_auxiliaries(state, op, g);
    result.trace.initial_entropy = entropy(state);
    result.trace.initial_expected_log_joint = expected_log_joint(state, aux, g, hyper);
    double previous = result.trace.initial_entropy + result.trace.initial_expected_log_joint;
    if (!std::isfinite(previous))
        throw NonFiniteFreeEnergy(0, free_energy_diagnostic(state, aux, g, hyper));
    result.trace.initial_free_energy = previous;

    using clock = std::chrono::steady_clock;
    for (int t = 1; t <= options.max_iter; ++t) {
        FreeEnergyRecord rec;
        rec.iteration = t;

        auto start = clock::now();
        auto volume = update_volume(state, aux, options.volume_step);
        rec.wall_ms.volume = elapsed_ms(start);

        start = clock::now();
        auto labels = update_labels(state, aux, hyper);
        rec.wall_ms.labels = elapsed_ms(start);

        state.m_tilde = std::move(volume.m_tilde);
        state.v_tilde = std::move(volume.v_tilde);
        state.qz = std::move(labels);

        start = clock::now();
        aux = compute_auxiliaries(state, op, g);
        rec.wall_ms.auxiliaries = elapsed_ms(start);

        start = clock::now();
        auto noise = update_noise_precisions(state, aux, op, g, hyper);
        state.alpha_zeta = std::move(noise.alpha_zeta);
        state.beta_zeta = std::move(noise.beta_zeta);
        rec.wall_ms.noise_precisions = elapsed_ms(start);

        start = clock::now();
        auto means = update_class_means(state, hyper);
        state.m0_tilde = std::move(means.m0_tilde);
        state.v0_tilde = std::move(means.v0_tilde);
        rec.wall_ms.class_means = elapsed_ms(start);

        start = clock::now();
        auto precisions = update_class_precisions(state, hyper);
        state.alpha0_tilde = std::move(precisions.alpha0_tilde);
        state.beta0_tilde = std::move(precisions.beta0_tilde);
        rec.wall_ms.class_precisions = elapsed_ms(start);

        // The noise update changed V_zeta, so the cached operator products are stale.
        start = clock::now();
        aux = compute_auxiliaries(state, op, g);
        rec.wall_ms.auxiliaries += elapsed_ms(start);

        start = clock::now();
        rec.entropy = entropy(state);
        rec.expected_log_joint = expected_log_joint(state, aux, g, hyper);
        rec.free_energy = rec.entropy + rec.expected_log_joint;
        rec.wall_ms.free_energy = elapsed_ms(start);

        result.trace.records.push_back(rec);
        if (options.observer)
            options.observer(state, rec);
        if (!std::isfinite(rec.free_energy))
            throw NonFiniteFreeEnergy(t, free_energy_diagnostic(state, aux, g, hyper));
        if (std::abs(rec.free_energy - previous) <= options.tol * std::abs(previous)) {
            result.converged = true;
            break;
        }
        previous = rec.free_energy;
    }
    result.state = std::move(state);
    return result;
}

Estimates extract_estimates(const PosteriorState& state)
{
    const std::size_t n = state.voxels();
    const std::size_t K = state.classes();
    Estimates e{LabelField(state.shape, state.num_classes), Volume(state.shape), Volume(state.shape),
                Volume(state.shape), {}, {}, {}, {}};
    for (std::size_t j = 0; j < n; ++j) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
            if (state.qz[j * K + k] > state.qz[j * K + best])
                best = k;
        e.z_hat[j] = static_cast<int>(best);
        e.f_hat[j] = state.m_tilde[j * K + best];
        e.uncertainty[j] = state.v_tilde[j * K + best];
        e.confidence[j] = state.qz[j * K + best];
    }
    e.rho_zeta_hat.resize(state.measurements());
    for (std::size_t i = 0; i < state.measurements(); ++i)
        e.rho_zeta_hat[i] = state.alpha_zeta[i] / state.beta_zeta[i];
    e.m_hat = state.m0_tilde;
    e.rho_hat.resize(K);
    for (std::size_t k = 0; k < K; ++k)
        e.rho_hat[k] = state.alpha0_tilde[k] / state.beta0_tilde[k];
    e.expected_counts = expected_class_counts(state);
    return e;
}

}  // namespace gmpvba
