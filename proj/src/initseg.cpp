#include "gmpvba/initseg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include <spdlog/spdlog.h>

namespace gmpvba {

namespace {

double variance_floor(const Volume& f0)
{
    const auto [lo, hi] = std::minmax_element(f0.values.begin(), f0.values.end());
    const double range = *hi - *lo;
    return range > 0.0 ? kVarianceFloor * range * range : kVarianceFloor;
}

/// Mean and population variance of `values`, summed in sorted order so the
/// result does not depend on voxel order.
std::pair<double, double> sorted_moments(std::vector<double>& values)
{
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values)
        ss += (v - mean) * (v - mean);
    return {mean, ss / n};
}

std::size_t nearest_center(double v, const std::vector<double>& centers)
{
    std::size_t best = 0;
    for (std::size_t k = 1; k < centers.size(); ++k)
        if (std::abs(v - centers[k]) < std::abs(v - centers[best]))
            best = k;
    return best;
}

}  // namespace

InitialClasses classes_from_labels(const Volume& f0, LabelField z0)
{
    if (f0.size() == 0 || f0.size() != z0.size())
        throw DimensionError("initial segmentation", f0.size(), z0.size());
    z0.validate();
    const auto K = static_cast<std::size_t>(z0.num_classes);
    const double floor = variance_floor(f0);

    std::vector<std::vector<double>> members(K);
    for (std::size_t j = 0; j < f0.size(); ++j)
        members[static_cast<std::size_t>(z0[j])].push_back(f0[j]);

    InitialClasses out{std::move(z0), std::vector<double>(K), std::vector<double>(K), std::vector<std::size_t>(K)};
    for (std::size_t k = 0; k < K; ++k) {
        out.counts[k] = members[k].size();
        double mean = 0.0;
        double var = 0.0;
        if (members[k].empty()) {
            std::vector<double> all = f0.values;
            std::tie(mean, var) = sorted_moments(all);
            spdlog::warn("class {} is empty in the initial segmentation; using the whole-volume mean and variance",
                         k + 1);
        } else {
            std::tie(mean, var) = sorted_moments(members[k]);
        }
        if (var < floor) {
            spdlog::debug("class {} variance {} raised to the floor {}", k + 1, var, floor);
            var = floor;
        }
        out.means[k] = mean;
        out.variances[k] = var;
    }
    return out;
}

InitialClasses kmeans_segment(const Volume& f0, int num_classes, int max_iter)
{
    if (num_classes < 1)
        throw std::invalid_argument("k-means needs K >= 1");
    if (max_iter < 1)
        throw std::invalid_argument("k-means needs max_iter >= 1");
    if (f0.size() == 0)
        throw std::invalid_argument("k-means on an empty volume");
    const auto K = static_cast<std::size_t>(num_classes);

    std::vector<double> sorted = f0.values;
    std::sort(sorted.begin(), sorted.end());
    std::size_t unique_count = sorted.empty() ? 0 : 1;
    for (std::size_t i = 1; i < sorted.size(); ++i)
        unique_count += sorted[i] != sorted[i - 1];
    if (unique_count < K)
        throw std::invalid_argument("k-means: f0 has " + std::to_string(unique_count) +
                                    " distinct values, fewer than K = " + std::to_string(K));

    const std::size_t n = sorted.size();
    std::vector<double> centers(K);
    for (std::size_t k = 0; k < K; ++k) {
        const auto pos = static_cast<std::size_t>((static_cast<double>(k) + 0.5) / static_cast<double>(K) *
                                                  static_cast<double>(n));
        centers[k] = sorted[std::min(pos, n - 1)];
    }

    // Assignments are a function of the value alone, so the iteration runs on
    // the sorted intensities and is independent of voxel order.
    std::vector<std::size_t> assign(n, K);
    for (int it = 0; it < max_iter; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t k = nearest_center(sorted[i], centers);
            changed |= (k != assign[i]);
            assign[i] = k;
        }
        std::vector<double> sum(K, 0.0);
        std::vector<std::size_t> count(K, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sum[assign[i]] += sorted[i];
            ++count[assign[i]];
        }
        bool reseeded = false;
        for (std::size_t k = 0; k < K; ++k) {
            if (count[k] > 0) {
                centers[k] = sum[k] / static_cast<double>(count[k]);
                continue;
            }
            std::size_t far = 0;
            double far_dist = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = std::abs(sorted[i] - centers[assign[i]]);
                if (d > far_dist) {
                    far_dist = d;
                    far = i;
                }
            }
            spdlog::debug("k-means: cluster {} empty, reseeded at {}", k + 1, sorted[far]);
            centers[k] = sorted[far];
            reseeded = true;
        }
        if (!changed && !reseeded)
            break;
    }

    LabelField z0(f0.shape, num_classes);
    for (std::size_t j = 0; j < f0.size(); ++j)
        z0[j] = static_cast<int>(nearest_center(f0[j], centers));
    return classes_from_labels(f0, std::move(z0));
}

namespace {

constexpr int kOtsuBins = 256;

int otsu_bin(double v, double lo, double hi)
{
    const int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * kOtsuBins));
    return std::clamp(b, 0, kOtsuBins - 1);
}

/// Last bin of the lower class.
int otsu_split(const Volume& f0, double lo, double hi)
{
    std::vector<double> hist(kOtsuBins, 0.0);
    for (double v : f0.values)
        hist[static_cast<std::size_t>(otsu_bin(v, lo, hi))] += 1.0;
    const double total = static_cast<double>(f0.size());
    double total_moment = 0.0;
    for (int b = 0; b < kOtsuBins; ++b)
        total_moment += b * hist[static_cast<std::size_t>(b)];

    int best = 0;
    double best_score = -1.0;
    double w0 = 0.0;
    double moment0 = 0.0;
    for (int t = 0; t < kOtsuBins - 1; ++t) {
        w0 += hist[static_cast<std::size_t>(t)];
        moment0 += t * hist[static_cast<std::size_t>(t)];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0)
            continue;
        const double mu0 = moment0 / w0;
        const double mu1 = (total_moment - moment0) / w1;
        const double score = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (score > best_score) {
            best_score = score;
            best = t;
        }
    }
    return best;
}

}  // namespace

double otsu_threshold(const Volume& f0)
{
    if (f0.size() == 0)
        throw std::invalid_argument("Otsu threshold of an empty volume");
    const auto [lo, hi] = std::minmax_element(f0.values.begin(), f0.values.end());
    if (!(*hi > *lo))
        throw std::invalid_argument("Otsu threshold needs a non-constant volume");
    const int t = otsu_split(f0, *lo, *hi);
    return *lo + (*hi - *lo) * static_cast<double>(t + 1) / kOtsuBins;
}

InitialClasses otsu_segment(const Volume& f0)
{
    if (f0.size() == 0)
        throw std::invalid_argument("Otsu segmentation of an empty volume");
    const auto [lo, hi] = std::minmax_element(f0.values.begin(), f0.values.end());
    if (!(*hi > *lo))
        throw std::invalid_argument("Otsu segmentation needs a non-constant volume");
    const int t = otsu_split(f0, *lo, *hi);
    LabelField z0(f0.shape, 2);
    for (std::size_t j = 0; j < f0.size(); ++j)
        z0[j] = otsu_bin(f0[j], *lo, *hi) > t ? 1 : 0;
    return classes_from_labels(f0, std::move(z0));
}

PosteriorState initialize_state(const Volume& f0, const InitialClasses& init, const LinearOperator& op,
                                const Hyperparameters& hyper, std::span<const double> g)
{
    hyper.validate();
    const std::size_t n = f0.size();
    const std::size_t M = op.range_size();
    const auto K = static_cast<std::size_t>(hyper.num_classes());
    if (op.domain_size() != n)
        throw DimensionError("operator domain", n, op.domain_size());
    require_size(g, M, "measurements");
    if (init.z0.size() != n)
        throw DimensionError("initial labels", n, init.z0.size());
    if (init.z0.num_classes != hyper.num_classes() || init.means.size() != K || init.variances.size() != K ||
        init.counts.size() != K)
        throw std::invalid_argument("initial class table and hyperparameters disagree on K");
    init.z0.validate();

    const double floor = variance_floor(f0);
    std::vector<double> vk(init.variances);
    for (std::size_t k = 0; k < K; ++k) {
        if (!(vk[k] >= floor)) {
            spdlog::warn("initial variance of class {} is {}; raised to {}", k + 1, vk[k], floor);
            vk[k] = floor;
        }
    }

    PosteriorState s(f0.shape, hyper.num_classes(), M);
    const std::vector<double> ones(M, 1.0);
    const auto hth = op.weighted_gram_diagonal(ones);
    const double noise_ratio = hyper.alpha_zeta0 / hyper.beta_zeta0;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t jj = 0; jj < static_cast<std::ptrdiff_t>(n); ++jj) {
        const auto j = static_cast<std::size_t>(jj);
        const auto zj = static_cast<std::size_t>(init.z0[j]);
        for (std::size_t k = 0; k < K; ++k) {
            s.m_tilde[j * K + k] = zj == k ? f0[j] : init.means[k];
            s.qz[j * K + k] = zj == k ? 1.0 : 0.0;
            s.v_tilde[j * K + k] = 1.0 / (1.0 / vk[k] + noise_ratio * hth[j]);
        }
    }

    const auto hf = op.apply(f0.values);
    for (std::size_t i = 0; i < M; ++i) {
        const double r = g[i] - hf[i];
        s.alpha_zeta[i] = hyper.alpha_zeta0 + 0.5;
        s.beta_zeta[i] = hyper.beta_zeta0 + 0.5 * r * r;
    }

    for (std::size_t k = 0; k < K; ++k) {
        const double nk = static_cast<double>(init.counts[k]);
        s.v0_tilde[k] = 1.0 / (1.0 / hyper.v0 + nk / vk[k]);
        s.m0_tilde[k] = s.v0_tilde[k] * (hyper.prior_mean(static_cast<int>(k)) / hyper.v0 + nk * init.means[k] / vk[k]);
        s.alpha0_tilde[k] = hyper.alpha0 + 0.5 * nk;
        s.beta0_tilde[k] = hyper.beta0 + 0.5 * nk * vk[k];
    }
    s.validate();
    return s;
}

Volume fallback_initial_volume(const LinearOperator& op, std::span<const double> g, const GridShape& shape)
{
    require_size(g, op.range_size(), "measurements");
    if (shape.size() != op.domain_size())
        throw DimensionError("operator domain", shape.size(), op.domain_size());
    auto back = op.adjoint(g);
    const std::vector<double> ones(op.range_size(), 1.0);
    const auto norm = op.separable_curvature(ones);
    bool any = false;
    for (std::size_t j = 0; j < back.size(); ++j) {
        back[j] = norm[j] > 0.0 ? back[j] / norm[j] : 0.0;
        any = any || norm[j] > 0.0;
    }
    if (!any)
        throw std::invalid_argument("H is zero; supply an initial volume");
    return Volume(shape, std::move(back));
}

}  // namespace gmpvba
