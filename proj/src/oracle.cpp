#include "gmpvba/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "gmpvba/parallel.hpp"

namespace gmpvba {

void PinnedModel::validate() const
{
    if (!op)
        throw std::invalid_argument("pinned model has no operator");
    potts.validate();
    const auto K = static_cast<std::size_t>(potts.num_classes);
    if (op->domain_size() != shape.size())
        throw DimensionError("pinned model operator domain", shape.size(), op->domain_size());
    require_size(g, op->range_size(), "pinned model measurements");
    if (class_means.size() != K || class_precisions.size() != K)
        throw std::invalid_argument("pinned model needs one mean and one precision per class");
    require_size(noise_precisions, op->range_size(), "pinned model noise precisions");
    auto positive = [](const std::vector<double>& v, const char* what) {
        for (double x : v)
            if (!(x > 0.0) || !std::isfinite(x))
                throw std::invalid_argument(std::string("pinned model ") + what + " must be finite and > 0");
    };
    positive(class_precisions, "class precisions");
    positive(noise_precisions, "noise precisions");
}

namespace {

/// Gaussian pieces of p(g, f | z) for one labeling.
class ConditionalGaussian {
public:
    explicit ConditionalGaussian(const PinnedModel& pm) : pm_(pm)
    {
        const auto dense = densify(*pm.op);
        const auto M = static_cast<Eigen::Index>(dense.range_size());
        const auto N = static_cast<Eigen::Index>(dense.domain_size());
        h_.resize(M, N);
        for (Eigen::Index i = 0; i < M; ++i)
            for (Eigen::Index j = 0; j < N; ++j)
                h_(i, j) = dense(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
        lambda_ = Eigen::Map<const Eigen::VectorXd>(pm.noise_precisions.data(), M);
        g_ = Eigen::Map<const Eigen::VectorXd>(pm.g.data(), M);
        hl_ = h_.transpose() * lambda_.asDiagonal();
        htlh_ = hl_ * h_;
        htlg_ = hl_ * g_;
    }

    /// ln N(g | H m_z, H D_z H^T + Lambda^-1).
    double log_evidence(const std::vector<int>& z) const
    {
        const auto M = h_.rows();
        Eigen::VectorXd mu(z.size()), d(z.size());
        fill(z, mu, d);
        Eigen::MatrixXd s = h_ * d.asDiagonal() * h_.transpose();
        s.diagonal() += lambda_.cwiseInverse();
        const Eigen::LLT<Eigen::MatrixXd> llt(s);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("evidence covariance is not positive definite");
        const Eigen::VectorXd r = g_ - h_ * mu;
        const Eigen::VectorXd w = llt.matrixL().solve(r);
        double logdet = 0.0;
        for (Eigen::Index i = 0; i < M; ++i)
            logdet += std::log(llt.matrixL()(i, i));
        return -0.5 * static_cast<double>(M) * std::log(2.0 * std::numbers::pi) - logdet - 0.5 * w.squaredNorm();
    }

    /// Mean and covariance factor of p(f | z, g).
    struct Posterior {
        Eigen::VectorXd mean;
        Eigen::VectorXd variance;
        Eigen::LLT<Eigen::MatrixXd> precision;
    };

    Posterior posterior(const std::vector<int>& z) const
    {
        Eigen::VectorXd mu(z.size()), d(z.size());
        fill(z, mu, d);
        Eigen::MatrixXd p = htlh_;
        p.diagonal() += d.cwiseInverse();
        Posterior out;
        out.precision.compute(p);
        if (out.precision.info() != Eigen::Success)
            throw std::runtime_error("posterior precision is not positive definite");
        out.mean = out.precision.solve(htlg_ + d.cwiseInverse().cwiseProduct(mu));
        const Eigen::MatrixXd cov = out.precision.solve(Eigen::MatrixXd::Identity(p.rows(), p.cols()));
        out.variance = cov.diagonal();
        return out;
    }

private:
    void fill(const std::vector<int>& z, Eigen::VectorXd& mu, Eigen::VectorXd& d) const
    {
        for (std::size_t j = 0; j < z.size(); ++j) {
            const auto k = static_cast<std::size_t>(z[j]);
            mu(static_cast<Eigen::Index>(j)) = pm_.class_means[k];
            d(static_cast<Eigen::Index>(j)) = 1.0 / pm_.class_precisions[k];
        }
    }

    const PinnedModel& pm_;
    Eigen::MatrixXd h_;
    Eigen::VectorXd lambda_;
    Eigen::VectorXd g_;
    Eigen::MatrixXd hl_;
    Eigen::MatrixXd htlh_;
    Eigen::VectorXd htlg_;
};

std::vector<int> decode(std::uint64_t c, std::size_t n, int K)
{
    std::vector<int> z(n);
    for (std::size_t j = 0; j < n; ++j) {
        z[j] = static_cast<int>(c % static_cast<std::uint64_t>(K));
        c /= static_cast<std::uint64_t>(K);
    }
    return z;
}

}  // namespace

ExactPosterior exact_posterior(const PinnedModel& pm)
{
    pm.validate();
    const std::size_t n = pm.shape.size();
    const int K = pm.num_classes();
    std::uint64_t configs = 1;
    for (std::size_t j = 0; j < n; ++j) {
        configs *= static_cast<std::uint64_t>(K);
        if (configs > kMaxEnumeration)
            throw std::invalid_argument("exact_posterior: K^N = " + std::to_string(K) + "^" + std::to_string(n) +
                                        " exceeds the enumeration bound 2^20; use gibbs_reference");
    }
    const ConditionalGaussian model(pm);

    std::vector<double> logw(configs);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(configs); ++c) {
        const LabelField z(pm.shape, K, decode(static_cast<std::uint64_t>(c), n, K));
        logw[static_cast<std::size_t>(c)] = log_prior_unnormalized(z, pm.potts) + model.log_evidence(z.labels);
    }
    const double top = *std::max_element(logw.begin(), logw.end());
    const double total = deterministic_sum(configs, [&](std::size_t c) { return std::exp(logw[c] - top); });

    // Moments accumulated per block of configurations and combined in order.
    const std::size_t nk = n * static_cast<std::size_t>(K);
    const std::size_t width = nk + 2 * n + 1;
    const std::size_t blocks = (configs + kReductionBlock - 1) / kReductionBlock;
    std::vector<double> partial(blocks * width, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
        double* acc = &partial[static_cast<std::size_t>(b) * width];
        const std::size_t begin = static_cast<std::size_t>(b) * kReductionBlock;
        const std::size_t end = std::min<std::size_t>(configs, begin + kReductionBlock);
        for (std::size_t c = begin; c < end; ++c) {
            const double p = std::exp(logw[c] - top) / total;
            const auto z = decode(c, n, K);
            const auto post = model.posterior(z);
            for (std::size_t j = 0; j < n; ++j) {
                const auto jj = static_cast<Eigen::Index>(j);
                acc[j * static_cast<std::size_t>(K) + static_cast<std::size_t>(z[j])] += p;
                acc[nk + j] += p * post.mean(jj);
                acc[nk + n + j] += p * (post.variance(jj) + post.mean(jj) * post.mean(jj));
            }
            acc[width - 1] += p;
        }
    }
    std::vector<double> sum(width, 0.0);
    for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t t = 0; t < width; ++t)
            sum[t] += partial[b * width + t];

    ExactPosterior out;
    out.configurations = configs;
    out.marginals.assign(sum.begin(), sum.begin() + static_cast<std::ptrdiff_t>(nk));
    out.mean.resize(n);
    out.variance.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        out.mean[j] = sum[nk + j];
        out.variance[j] = std::max(0.0, sum[nk + n + j] - sum[nk + j] * sum[nk + j]);
    }
    out.total_probability = sum[width - 1];
    return out;
}

GibbsEstimate gibbs_reference(const PinnedModel& pm, int samples, int burn_in, std::uint64_t seed)
{
    pm.validate();
    if (samples < 1000)
        throw std::invalid_argument("gibbs_reference needs at least 1000 samples");
    if (burn_in < 0)
        throw std::invalid_argument("gibbs_reference burn-in must be >= 0");
    const std::size_t n = pm.shape.size();
    const int K = pm.num_classes();
    const auto Ku = static_cast<std::size_t>(K);
    const std::size_t nk = n * Ku;
    const ConditionalGaussian model(pm);

    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    LabelField z(pm.shape, K);
    for (std::size_t j = 0; j < n; ++j) {
        const double u = uniform(gen);
        double acc = 0.0;
        int k = 0;
        for (; k + 1 < K; ++k) {
            acc += std::exp(pm.potts.alpha[static_cast<std::size_t>(k)]);
            if (u < acc)
                break;
        }
        z[j] = k;
    }

    constexpr int kBatches = 20;
    const int per_batch = std::max(1, samples / kBatches);
    std::vector<double> site_prob(nk);
    std::vector<double> marg_sum(nk, 0.0), mean_sum(n, 0.0), second_sum(n, 0.0);
    std::vector<double> batch_marg(nk, 0.0), batch_mean(n, 0.0);
    std::vector<std::vector<double>> batch_marginals, batch_means;
    std::vector<double> logw(Ku), prior_w(Ku);

    int kept = 0;
    int in_batch = 0;
    for (int sweep = 0; sweep < burn_in + samples; ++sweep) {
        for (std::size_t j = 0; j < n; ++j) {
            site_log_weights(z, pm.potts, j, prior_w);
            for (std::size_t k = 0; k < Ku; ++k) {
                z[j] = static_cast<int>(k);
                logw[k] = prior_w[k] + model.log_evidence(z.labels);
            }
            const double top = *std::max_element(logw.begin(), logw.end());
            double total = 0.0;
            for (std::size_t k = 0; k < Ku; ++k) {
                logw[k] = std::exp(logw[k] - top);
                total += logw[k];
            }
            for (std::size_t k = 0; k < Ku; ++k)
                site_prob[j * Ku + k] = logw[k] / total;
            double target = uniform(gen) * total;
            int pick = K - 1;
            for (std::size_t k = 0; k + 1 < Ku; ++k) {
                if (target < logw[k]) {
                    pick = static_cast<int>(k);
                    break;
                }
                target -= logw[k];
            }
            z[j] = pick;
        }
        if (sweep < burn_in)
            continue;
        const auto post = model.posterior(z.labels);

        ++kept;
        for (std::size_t t = 0; t < nk; ++t) {
            marg_sum[t] += site_prob[t];
            batch_marg[t] += site_prob[t];
        }
        for (std::size_t j = 0; j < n; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            mean_sum[j] += post.mean(jj);
            second_sum[j] += post.variance(jj) + post.mean(jj) * post.mean(jj);
            batch_mean[j] += post.mean(jj);
        }
        if (++in_batch == per_batch) {
            for (double& v : batch_marg)
                v /= per_batch;
            for (double& v : batch_mean)
                v /= per_batch;
            batch_marginals.push_back(batch_marg);
            batch_means.push_back(batch_mean);
            std::fill(batch_marg.begin(), batch_marg.end(), 0.0);
            std::fill(batch_mean.begin(), batch_mean.end(), 0.0);
            in_batch = 0;
        }
    }

    GibbsEstimate out;
    out.samples = kept;
    out.marginals.resize(nk);
    out.mean.resize(n);
    out.variance.resize(n);
    for (std::size_t t = 0; t < nk; ++t)
        out.marginals[t] = marg_sum[t] / kept;
    for (std::size_t j = 0; j < n; ++j) {
        out.mean[j] = mean_sum[j] / kept;
        out.variance[j] = std::max(0.0, second_sum[j] / kept - out.mean[j] * out.mean[j]);
    }
    auto batch_se = [](const std::vector<std::vector<double>>& batches, std::size_t t) {
        const double b = static_cast<double>(batches.size());
        double mean = 0.0;
        for (const auto& v : batches)
            mean += v[t];
        mean /= b;
        double ss = 0.0;
        for (const auto& v : batches)
            ss += (v[t] - mean) * (v[t] - mean);
        return std::sqrt(ss / (b - 1.0) / b);
    };
    out.marginal_se.resize(nk);
    out.mean_se.resize(n);
    for (std::size_t t = 0; t < nk; ++t)
        out.marginal_se[t] = batch_se(batch_marginals, t);
    for (std::size_t j = 0; j < n; ++j)
        out.mean_se[j] = batch_se(batch_means, j);
    return out;
}

Hyperparameters pinned_hyperparameters(const PinnedModel& pm, double shape, double v0)
{
    pm.validate();
    if (!(shape > 0.0) || !(v0 > 0.0))
        throw std::invalid_argument("pinned hyperparameters need shape > 0 and v0 > 0");
    const double noise = pm.noise_precisions.front();
    for (double r : pm.noise_precisions)
        if (r != noise)
            throw std::invalid_argument("pinned hyperparameters need a homoscedastic noise precision");
    double class_precision = pm.class_precisions.front();
    for (double r : pm.class_precisions)
        if (r != class_precision)
            throw std::invalid_argument("pinned hyperparameters need one class precision shared by all classes");
    Hyperparameters h;
    h.alpha_zeta0 = shape;
    h.beta_zeta0 = shape / noise;
    h.alpha0 = shape;
    h.beta0 = shape / class_precision;
    h.m0 = 0.0;
    h.v0 = v0;
    h.class_prior_means = pm.class_means;
    h.potts = pm.potts;
    h.validate();
    return h;
}

PosteriorState pinned_initial_state(const PinnedModel& pm, const Hyperparameters& hyper)
{
    pm.validate();
    const std::size_t n = pm.shape.size();
    const auto K = static_cast<std::size_t>(pm.num_classes());
    PosteriorState s(pm.shape, pm.num_classes(), pm.g.size());
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t k = 0; k < K; ++k) {
            s.m_tilde[j * K + k] = pm.class_means[k];
            s.v_tilde[j * K + k] = 1.0 / pm.class_precisions[k];
            s.qz[j * K + k] = std::exp(pm.potts.alpha[k]);
        }
    }
    std::fill(s.alpha_zeta.begin(), s.alpha_zeta.end(), hyper.alpha_zeta0);
    std::fill(s.beta_zeta.begin(), s.beta_zeta.end(), hyper.beta_zeta0);
    for (std::size_t k = 0; k < K; ++k) {
        s.m0_tilde[k] = hyper.prior_mean(static_cast<int>(k));
        s.v0_tilde[k] = hyper.v0;
        s.alpha0_tilde[k] = hyper.alpha0;
        s.beta0_tilde[k] = hyper.beta0;
    }
    // exp(alpha) sums to one only within 1e-12; renormalize each row exactly.
    for (std::size_t j = 0; j < n; ++j) {
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k)
            total += s.qz[j * K + k];
        for (std::size_t k = 0; k < K; ++k)
            s.qz[j * K + k] /= total;
    }
    return s;
}

double noise_precision_for_snr(const LinearOperator& op, const Volume& f, double snr_db)
{
    const auto hf = op.apply(f.values);
    const double power = dot(hf, hf) / static_cast<double>(hf.size());
    if (!(power > 0.0))
        throw std::invalid_argument("H f is zero; the noise level cannot be set from an SNR");
    return std::pow(10.0, snr_db / 10.0) / power;
}

PinnedInstance simulate_pinned_instance(std::shared_ptr<const LinearOperator> op, const GridShape& shape,
                                        std::vector<double> class_means, double class_variance, double gamma0,
                                        double snr_db, int label_sweeps, std::uint64_t seed)
{
    if (!op)
        throw std::invalid_argument("pinned instance needs an operator");
    if (!(class_variance > 0.0))
        throw std::invalid_argument("pinned instance needs a positive class variance");
    if (!std::isfinite(snr_db))
        throw std::invalid_argument("pinned instance needs a finite SNR");
    const int K = static_cast<int>(class_means.size());
    const auto potts = PottsParams::uniform(K, gamma0);
    auto z = sample_potts(shape, potts, label_sweeps, seed);

    Volume f(shape);
    std::mt19937_64 gen(seed ^ 0x5DEECE66DULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd = std::sqrt(class_variance);
    for (std::size_t j = 0; j < f.size(); ++j)
        f[j] = class_means[static_cast<std::size_t>(z[j])] + sd * normal(gen);
    const auto data = simulate_data(*op, f, snr_db, seed + 1);

    PinnedInstance out{PinnedModel{std::move(op), data.g, shape, std::move(class_means),
                                   std::vector<double>(static_cast<std::size_t>(K), 1.0 / class_variance),
                                   data.rho_zeta, potts},
                       std::move(z), std::move(f)};
    out.model.validate();
    return out;
}

OracleComparison compare_with_exact(const PosteriorState& vba, const PosteriorSummary& exact)
{
    const std::size_t n = vba.voxels();
    const std::size_t K = vba.classes();
    if (exact.mean.size() != n || exact.marginals.size() != n * K)
        throw DimensionError("oracle summary", n, exact.mean.size());
    OracleComparison c;
    c.mean_abs_diff.resize(n);
    c.marginal_abs_diff.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        double pm = 0.0;
        double worst = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            pm += vba.qz[j * K + k] * vba.m_tilde[j * K + k];
            worst = std::max(worst, std::abs(vba.qz[j * K + k] - exact.marginals[j * K + k]));
        }
        c.mean_abs_diff[j] = std::abs(pm - exact.mean[j]);
        c.marginal_abs_diff[j] = worst;
        c.max_mean_diff = std::max(c.max_mean_diff, c.mean_abs_diff[j]);
        c.max_marginal_diff = std::max(c.max_marginal_diff, worst);
        c.mean_mean_diff += c.mean_abs_diff[j] / static_cast<double>(n);
        c.mean_marginal_diff += worst / static_cast<double>(n);
    }
    return c;
}

}  // namespace gmpvba
