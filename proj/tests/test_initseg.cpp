#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gmpvba/initseg.hpp"
#include "gmpvba/linops.hpp"
#include "helpers.hpp"

using namespace gmpvba;

namespace {

Volume bimodal(std::size_t n, std::uint64_t seed, std::vector<int>& truth)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> low(0.0, 0.1), high(10.0, 0.1);
    std::bernoulli_distribution coin(0.4);
    Volume f(GridShape{n, 1, 1});
    truth.assign(n, 0);
    for (std::size_t j = 0; j < n; ++j) {
        truth[j] = coin(rng) ? 1 : 0;
        f[j] = truth[j] ? high(rng) : low(rng);
    }
    return f;
}

double agreement(const std::vector<int>& a, const std::vector<int>& b)
{
    std::size_t same = 0;
    for (std::size_t j = 0; j < a.size(); ++j)
        same += a[j] == b[j];
    return static_cast<double>(same) / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("kmeans separates two well-separated modes without error")
{
    std::vector<int> truth;
    const auto f = bimodal(5000, 1, truth);
    const auto c = kmeans_segment(f, 2);
    CHECK(c.z0.labels == truth);
    CHECK(c.means[0] == doctest::Approx(0.0).epsilon(0.02));
    CHECK(c.means[1] == doctest::Approx(10.0).epsilon(0.01));
    CHECK(std::accumulate(c.counts.begin(), c.counts.end(), std::size_t{0}) == f.size());
}

TEST_CASE("kmeans with one class")
{
    const Volume f(GridShape{5, 1, 1}, {1.0, 2.0, 3.0, 4.0, 7.0});
    const auto c = kmeans_segment(f, 1);
    CHECK(std::all_of(c.z0.labels.begin(), c.z0.labels.end(), [](int l) { return l == 0; }));
    CHECK(c.means[0] == doctest::Approx(3.4));
    CHECK(c.counts[0] == 5);
}

TEST_CASE("kmeans statistics do not depend on voxel order")
{
    std::vector<int> truth;
    auto f = bimodal(999, 2, truth);
    std::mt19937_64 rng(3);
    for (double& v : f.values)
        v += std::uniform_real_distribution<double>(-3.0, 3.0)(rng);
    const auto a = kmeans_segment(f, 3);
    std::vector<std::size_t> perm(f.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Volume g(f.shape);
    for (std::size_t j = 0; j < f.size(); ++j)
        g[j] = f[perm[j]];
    const auto b = kmeans_segment(g, 3);
    CHECK(a.means == b.means);
    CHECK(a.variances == b.variances);
    CHECK(a.counts == b.counts);
    for (std::size_t j = 0; j < f.size(); ++j)
        CHECK(b.z0[j] == a.z0[perm[j]]);
}

TEST_CASE("kmeans errors and ties")
{
    CHECK_THROWS(kmeans_segment(Volume(GridShape{4, 1, 1}, 2.0), 2));
    CHECK_THROWS(kmeans_segment(Volume(GridShape{4, 1, 1}, {1.0, 1.0, 2.0, 2.0}), 3));
    CHECK_THROWS(kmeans_segment(Volume(GridShape{4, 1, 1}, 2.0), 0));
    // 1 starts exactly between the seeded centers 0 and 2: lower class.
    const auto c = kmeans_segment(Volume(GridShape{5, 1, 1}, {0.0, 0.0, 1.0, 2.0, 2.0}), 2);
    CHECK(c.z0[2] == 0);
}

TEST_CASE("kmeans reseeds an empty cluster")
{
    // Quantile seeding puts two centers on the repeated value 0.
    const Volume f(GridShape{6, 1, 1}, {0.0, 0.0, 0.0, 0.0, 0.5, 9.0});
    const auto c = kmeans_segment(f, 3);
    for (std::size_t n : c.counts)
        CHECK(n > 0);
}

TEST_CASE("otsu examples")
{
    std::vector<int> truth;
    const auto f = bimodal(5000, 4, truth);
    const double t = otsu_threshold(f);
    double low_max = -INFINITY, high_min = INFINITY;
    for (std::size_t j = 0; j < f.size(); ++j) {
        if (truth[j])
            high_min = std::min(high_min, f[j]);
        else
            low_max = std::max(low_max, f[j]);
    }
    CHECK(t >= low_max);
    CHECK(t < high_min);
    const auto o = otsu_segment(f);
    CHECK(agreement(o.z0.labels, kmeans_segment(f, 2).z0.labels) >= 0.99);

    const Volume two(GridShape{6, 1, 1}, {3.0, 8.0, 3.0, 3.0, 8.0, 8.0});
    const auto s = otsu_segment(two);
    CHECK(s.z0.labels == std::vector<int>{0, 1, 0, 0, 1, 1});
    CHECK(s.means[0] == 3.0);
    CHECK(s.means[1] == 8.0);

    CHECK_THROWS(otsu_segment(Volume(GridShape{3, 1, 1}, 1.0)));
}

TEST_CASE("otsu labeling is invariant under positive affine maps")
{
    std::mt19937_64 rng(5);
    Volume f(GridShape{700, 1, 1}, testing::random_vector(700, rng, 0.0, 1.0));
    for (std::size_t j = 0; j < 300; ++j)
        f[j] += 1.5;
    const auto base = otsu_segment(f).z0.labels;
    Volume g = f;
    for (double& v : g.values)
        v = 4.0 * v - 2.0;
    CHECK(otsu_segment(g).z0.labels == base);
}

TEST_CASE("otsu threshold agrees with an exhaustive search")
{
    std::mt19937_64 rng(6);
    std::normal_distribution<double> a(1.0, 0.4), b(3.0, 0.7);
    Volume f(GridShape{3000, 1, 1});
    for (std::size_t j = 0; j < f.size(); ++j)
        f[j] = j % 3 == 0 ? b(rng) : a(rng);
    const auto [lo_it, hi_it] = std::minmax_element(f.values.begin(), f.values.end());
    const double lo = *lo_it, range = *hi_it - *lo_it;
    std::vector<double> hist(256, 0.0);
    for (double v : f.values)
        hist[std::min<std::size_t>(255, static_cast<std::size_t>((v - lo) / range * 256.0))] += 1.0;
    double best = -1.0;
    int best_t = -1;
    for (int t = 0; t < 255; ++t) {
        double w0 = 0, w1 = 0, s0 = 0, s1 = 0;
        for (int i = 0; i < 256; ++i) {
            if (i <= t) {
                w0 += hist[i];
                s0 += hist[i] * i;
            } else {
                w1 += hist[i];
                s1 += hist[i] * i;
            }
        }
        if (w0 == 0 || w1 == 0)
            continue;
        const double d = s0 / w0 - s1 / w1;
        const double score = w0 * w1 * d * d;
        if (score > best * (1 + 1e-12)) {
            best = score;
            best_t = t;
        }
    }
    CHECK(otsu_threshold(f) == doctest::Approx(lo + range * (best_t + 1) / 256.0).epsilon(1e-12));
}

TEST_CASE("classes_from_labels floors variances and fills empty classes")
{
    const Volume f(GridShape{4, 1, 1}, {2.0, 2.0, 6.0, 6.0});
    const auto c = classes_from_labels(f, LabelField(f.shape, 3, {0, 0, 2, 2}));
    CHECK(c.means[0] == 2.0);
    CHECK(c.variances[0] == doctest::Approx(kVarianceFloor * 16.0));
    CHECK(c.counts[1] == 0);
    CHECK(c.means[1] == 4.0);
    CHECK(c.variances[1] == doctest::Approx(4.0));
}

TEST_CASE("initialize_state examples")
{
    const GridShape g{3, 2, 1};
    const Volume f0(g, {0.1, 0.2, 1.1, 0.9, 1.0, 0.15});
    const auto init = kmeans_segment(f0, 2);
    Hyperparameters hyper;
    hyper.alpha_zeta0 = 0.001;
    hyper.beta_zeta0 = 0.002;
    hyper.m0 = 0.5;
    hyper.v0 = 2.0;
    hyper.potts = PottsParams::uniform(2, 1.0);
    const auto op = Convolution2D::box(g, 3);
    const auto g_exact = op.apply(f0.values);
    const auto s = initialize_state(f0, init, op, hyper, g_exact);
    CHECK_NOTHROW(s.validate());
    const auto hth = op.weighted_gram_diagonal(std::vector<double>(op.range_size(), 1.0));
    for (std::size_t i = 0; i < s.measurements(); ++i) {
        CHECK(s.alpha_zeta[i] == 0.501);
        CHECK(s.beta_zeta[i] == doctest::Approx(hyper.beta_zeta0).epsilon(1e-12));
    }
    for (std::size_t j = 0; j < g.size(); ++j)
        for (std::size_t k = 0; k < 2; ++k) {
            const bool own = init.z0[j] == static_cast<int>(k);
            CHECK(s.qz[s.at(j, k)] == (own ? 1.0 : 0.0));
            CHECK(s.m_tilde[s.at(j, k)] == (own ? f0[j] : init.means[k]));
            CHECK(s.v_tilde[s.at(j, k)] == doctest::Approx(1.0 / (1.0 / init.variances[k] + 0.5 * hth[j])));
        }
    for (std::size_t k = 0; k < 2; ++k) {
        const double n = static_cast<double>(init.counts[k]);
        const double v0t = 1.0 / (1.0 / hyper.v0 + n / init.variances[k]);
        CHECK(s.v0_tilde[k] == doctest::Approx(v0t));
        CHECK(s.m0_tilde[k] == doctest::Approx(v0t * (hyper.m0 / hyper.v0 + n * init.means[k] / init.variances[k])));
        CHECK(s.alpha0_tilde[k] == doctest::Approx(hyper.alpha0 + n / 2));
        CHECK(s.beta0_tilde[k] == doctest::Approx(hyper.beta0 + n / 2 * init.variances[k]));
    }

    std::vector<double> noisy = g_exact;
    noisy[0] += 0.3;
    const auto t = initialize_state(f0, init, op, hyper, noisy);
    CHECK(t.beta_zeta[0] == doctest::Approx(hyper.beta_zeta0 + 0.5 * 0.09));
    CHECK(initialize_state(f0, init, op, hyper, noisy).m_tilde == t.m_tilde);
}

TEST_CASE("initialize_state leaves the prior of an empty class untouched")
{
    const GridShape g{4, 1, 1};
    const Volume f0(g, {0.0, 0.1, 1.0, 1.1});
    const auto init = classes_from_labels(f0, LabelField(g, 3, {0, 0, 2, 2}));
    Hyperparameters hyper;
    hyper.m0 = 0.55;
    hyper.v0 = 1.21;
    hyper.potts = PottsParams::uniform(3, 1.0);
    IdentityOperator id(4);
    const auto s = initialize_state(f0, init, id, hyper, f0.values);
    CHECK(s.v0_tilde[1] == hyper.v0);
    CHECK(s.m0_tilde[1] == doctest::Approx(hyper.m0));
    CHECK(s.alpha0_tilde[1] == hyper.alpha0);
}

TEST_CASE("initialize_state rejects inconsistent sizes")
{
    const GridShape g{4, 1, 1};
    const Volume f0(g, {0.0, 0.1, 1.0, 1.1});
    const auto init = kmeans_segment(f0, 2);
    Hyperparameters hyper;
    hyper.potts = PottsParams::uniform(3, 1.0);
    IdentityOperator id(4);
    CHECK_THROWS(initialize_state(f0, init, id, hyper, f0.values));
    hyper.potts = PottsParams::uniform(2, 1.0);
    CHECK_THROWS(initialize_state(f0, init, id, hyper, std::vector<double>{1.0}));
}

TEST_CASE("fallback initial volume")
{
    const GridShape g{9, 8, 1};
    const auto conv = Convolution2D::box(g, 5);
    const auto f = fallback_initial_volume(conv, conv.apply(std::vector<double>(g.size(), 2.0)), g);
    for (double v : f.values)
        CHECK(v == doctest::Approx(2.0).epsilon(1e-12));

    IdentityOperator id(3);
    CHECK(fallback_initial_volume(id, std::vector<double>{1, 2, 3}, GridShape{3, 1, 1}).values ==
          std::vector<double>{1, 2, 3});

    DenseOperator zero_column(2, 2, {1.0, 0.0, 2.0, 0.0});
    const auto z = fallback_initial_volume(zero_column, std::vector<double>{1.0, 2.0}, GridShape{2, 1, 1});
    CHECK(z[0] == doctest::Approx(1.0));
    CHECK(z[1] == 0.0);
    DenseOperator zero(1, 2, {0.0, 0.0});
    CHECK_THROWS(fallback_initial_volume(zero, std::vector<double>{1.0}, GridShape{2, 1, 1}));
}
