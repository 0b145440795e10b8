#include "gmpvba/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/digamma.hpp>

#include "gmpvba/parallel.hpp"

namespace gmpvba::reference {

namespace {

double psi(double x)
{
    return boost::math::digamma(x);
}

double log_gamma_entropy(double a, double b)
{
    return std::lgamma(a) - std::log(b) + a - (a - 1.0) * psi(a);
}

}  // namespace

Auxiliaries compute_auxiliaries(const PosteriorState& state, const LinearOperator& op, std::span<const double> g)
{
    const std::size_t n = state.voxels();
    const std::size_t K = state.classes();
    const std::size_t M = state.measurements();
    Auxiliaries aux;
    aux.m_bar.assign(n, 0.0);
    aux.v_bar.assign(n, 0.0);
    aux.m2.assign(n, 0.0);
    aux.v2.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double second = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double q = state.qz[state.at(j, k)];
            const double m = state.m_tilde[state.at(j, k)];
            aux.m_bar[j] += m * q;
            aux.v_bar[j] += state.v_tilde[state.at(j, k)] * q;
            second += m * m * q;
        }
        aux.m2[j] = std::max(0.0, second - aux.m_bar[j] * aux.m_bar[j]);
        aux.v2[j] = aux.v_bar[j] + aux.m2[j];
    }
    aux.v_zeta.resize(M);
    std::vector<double> w(M);
    for (std::size_t i = 0; i < M; ++i) {
        aux.v_zeta[i] = state.beta_zeta[i] / state.alpha_zeta[i];
        w[i] = 1.0 / aux.v_zeta[i];
    }
    aux.forward_mean = op.apply(aux.m_bar);
    aux.gram_diag = op.weighted_gram_diagonal(w);
    aux.curvature = op.separable_curvature(w);
    std::vector<double> r(M);
    for (std::size_t i = 0; i < M; ++i)
        r[i] = (g[i] - aux.forward_mean[i]) / aux.v_zeta[i];
    aux.residual_backproj = op.adjoint(r);
    return aux;
}

VolumeUpdate update_volume(const PosteriorState& state, const Auxiliaries& aux, VolumeStep step)
{
    const std::size_t n = state.voxels();
    const std::size_t K = state.classes();
    VolumeUpdate out{std::vector<double>(n * K), std::vector<double>(n * K)};
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < K; ++k) {
            const double rho = state.alpha0_tilde[k] / state.beta0_tilde[k];
            const double c = step == VolumeStep::Jacobi ? aux.gram_diag[j] : aux.curvature[j];
            out.v_tilde[state.at(j, k)] = 1.0 / (rho + aux.gram_diag[j]);
            out.m_tilde[state.at(j, k)] =
                (rho * state.m0_tilde[k] + c * aux.m_bar[j] + aux.residual_backproj[j]) / (rho + c);
        }
    }
    return out;
}

std::vector<double> update_labels(const PosteriorState& state, const Auxiliaries& aux, const Hyperparameters& hyper)
{
    const std::size_t n = state.voxels();
    const std::size_t K = state.classes();
    std::vector<double> out(n * K);
    std::vector<double> logw(K);
    for (std::size_t j = 0; j < n; ++j) {
        const double d = aux.gram_diag[j];
        for (std::size_t k = 0; k < K; ++k) {
            const double rho = state.alpha0_tilde[k] / state.beta0_tilde[k];
            const double m = state.m_tilde[state.at(j, k)];
            const double v = state.v_tilde[state.at(j, k)];
            const double dm0 = m - state.m0_tilde[k];
            double a = hyper.potts.alpha[k] -
                       0.5 * (rho * (v + state.v0_tilde[k] + dm0 * dm0) + std::log(state.beta0_tilde[k]) -
                              psi(state.alpha0_tilde[k])) -
                       0.5 * ((v + m * m) * d - 2.0 * m * (aux.m_bar[j] * d + aux.residual_backproj[j])) +
                       0.5 * std::log(v);
            for (std::size_t i : neighbors(state.shape, j))
                a += 2.0 * hyper.potts.gamma0 * state.qz[state.at(i, k)];
            logw[k] = a;
        }
        double top = -std::numeric_limits<double>::infinity();
        for (double a : logw)
            top = std::max(top, a);
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            double p = std::exp(logw[k] - top);
            if (p < 1e-300)
                p = 0.0;
            out[state.at(j, k)] = p;
            total += p;
        }
        for (std::size_t k = 0; k < K; ++k)
            out[state.at(j, k)] /= total;
    }
    return out;
}

NoisePrecisionUpdate update_noise_precisions(const PosteriorState& state, const Auxiliaries& aux,
                                             const LinearOperator& op, std::span<const double> g,
                                             const Hyperparameters& hyper)
{
    const std::size_t M = state.measurements();
    const auto spread = op.row_weighted_square_sum(aux.v2);
    NoisePrecisionUpdate out{std::vector<double>(M), std::vector<double>(M)};
    for (std::size_t i = 0; i < M; ++i) {
        const double r = g[i] - aux.forward_mean[i];
        out.alpha_zeta[i] = hyper.alpha_zeta0 + 0.5;
        out.beta_zeta[i] = hyper.beta_zeta0 + 0.5 * (r * r + spread[i]);
    }
    return out;
}

double entropy(const PosteriorState& state)
{
    const std::size_t n = state.voxels();
    const std::size_t K = state.classes();
    const double log2pie = std::log(2.0 * std::numbers::pi * std::numbers::e);
    double h = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < K; ++k) {
            const double q = state.qz[state.at(j, k)];
            if (q > 0.0)
                h += q * (0.5 * (log2pie + std::log(state.v_tilde[state.at(j, k)])) - std::log(q));
        }
    }
    for (std::size_t i = 0; i < state.measurements(); ++i)
        h += log_gamma_entropy(state.alpha_zeta[i], state.beta_zeta[i]);
    for (std::size_t k = 0; k < K; ++k) {
        h += 0.5 * (log2pie + std::log(state.v0_tilde[k]));
        h += log_gamma_entropy(state.alpha0_tilde[k], state.beta0_tilde[k]);
    }
    return h;
}

double expected_log_joint(const PosteriorState& state, const Auxiliaries& aux, const LinearOperator& op,
                          std::span<const double> g, const Hyperparameters& hyper)
{
    const std::size_t n = state.voxels();
    const std::size_t K = state.classes();
    const std::size_t M = state.measurements();
    const double log2pi = std::log(2.0 * std::numbers::pi);
    // The variance correction of the likelihood is taken row-wise here,
    // sum_i rho_i [H V2 H^T]_ii, instead of column-wise through gram_diag.
    const auto spread = op.row_weighted_square_sum(aux.v2);
    double e = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        const double a = state.alpha_zeta[i];
        const double b = state.beta_zeta[i];
        const double log_rho = psi(a) - std::log(b);
        const double rho = a / b;
        const double r = g[i] - aux.forward_mean[i];
        e += 0.5 * (log_rho - log2pi) - 0.5 * rho * (r * r + spread[i]);
        e += hyper.alpha_zeta0 * std::log(hyper.beta_zeta0) - std::lgamma(hyper.alpha_zeta0) +
             (hyper.alpha_zeta0 - 1.0) * log_rho - hyper.beta_zeta0 * rho;
    }
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < K; ++k) {
            const double q = state.qz[state.at(j, k)];
            const double a0 = state.alpha0_tilde[k];
            const double b0 = state.beta0_tilde[k];
            const double d = state.m_tilde[state.at(j, k)] - state.m0_tilde[k];
            e += q * (0.5 * (psi(a0) - std::log(b0) - log2pi) -
                      0.5 * (a0 / b0) * (state.v_tilde[state.at(j, k)] + state.v0_tilde[k] + d * d));
            double like = 0.0;
            for (std::size_t i : neighbors(state.shape, j))
                like += state.qz[state.at(i, k)];
            e += q * (hyper.potts.alpha[k] + hyper.potts.gamma0 * like);
        }
    }
    for (std::size_t k = 0; k < K; ++k) {
        const double a0 = state.alpha0_tilde[k];
        const double b0 = state.beta0_tilde[k];
        const double d = state.m0_tilde[k] - hyper.prior_mean(static_cast<int>(k));
        e += -0.5 * std::log(2.0 * std::numbers::pi * hyper.v0) - 0.5 * (state.v0_tilde[k] + d * d) / hyper.v0;
        e += hyper.alpha0 * std::log(hyper.beta0) - std::lgamma(hyper.alpha0) +
             (hyper.alpha0 - 1.0) * (psi(a0) - std::log(b0)) - hyper.beta0 * a0 / b0;
    }
    return e;
}

LabelField sample_potts(const GridShape& shape, const PottsParams& params, int sweeps, std::uint64_t seed)
{
    params.validate();
    const CounterRng rng(seed);
    const auto K = static_cast<std::size_t>(params.num_classes);
    LabelField z(shape, params.num_classes);
    std::vector<double> w(K);
    auto draw = [&](double u) {
        double total = 0.0;
        for (double x : w)
            total += x;
        double target = u * total;
        for (std::size_t k = 0; k + 1 < K; ++k) {
            if (target < w[k])
                return static_cast<int>(k);
            target -= w[k];
        }
        return static_cast<int>(K) - 1;
    };
    const double alpha_top = *std::max_element(params.alpha.begin(), params.alpha.end());
    for (std::size_t j = 0; j < z.size(); ++j) {
        for (std::size_t k = 0; k < K; ++k)
            w[k] = std::exp(params.alpha[k] - alpha_top);
        z[j] = draw(rng.uniform(0, j));
    }
    for (int sweep = 1; sweep <= sweeps; ++sweep) {
        for (std::size_t color = 0; color < 2; ++color) {
            const auto stream = static_cast<std::uint64_t>(2 * sweep - 1) + color;
            for (std::size_t zz = 0; zz < shape.nz; ++zz)
                for (std::size_t y = 0; y < shape.ny; ++y)
                    for (std::size_t x = 0; x < shape.nx; ++x) {
                        if ((x + y + zz) % 2 != color)
                            continue;
                        const std::size_t j = shape.index(x, y, zz);
                        std::vector<double> logw(params.alpha);
                        for (std::size_t i : neighbors(shape, j))
                            logw[static_cast<std::size_t>(z[i])] += 2.0 * params.gamma0;
                        const double top = *std::max_element(logw.begin(), logw.end());
                        for (std::size_t k = 0; k < K; ++k)
                            w[k] = std::exp(logw[k] - top);
                        z[j] = draw(rng.uniform(stream, j));
                    }
        }
    }
    return z;
}

}  // namespace gmpvba::reference
