#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gmpvba/linops.hpp"
#include "gmpvba/model.hpp"
#include "helpers.hpp"

using namespace gmpvba;

namespace {

PhantomShape disk(int label, double cx, double cy, double r)
{
    PhantomShape s;
    s.kind = PhantomShape::Kind::Disk;
    s.label = label;
    s.cx = cx;
    s.cy = cy;
    s.radius = r;
    return s;
}

PhantomShape rect(int label, double x0, double y0, double x1, double y1)
{
    PhantomShape s;
    s.kind = PhantomShape::Kind::Rectangle;
    s.label = label;
    s.x0 = x0;
    s.y0 = y0;
    s.x1 = x1;
    s.y1 = y1;
    return s;
}

}  // namespace

TEST_CASE("fix_hyperparameters examples")
{
    const GridShape g{4, 1, 1};
    const Volume f0(g, {0.0, 0.5, 2.0, 1.0});
    const LabelField z0(g, 2, {0, 0, 1, 1});
    const auto h = fix_hyperparameters(f0, z0, 2, 30.0);
    CHECK(h.m0 == 1.0);
    CHECK(h.v0 == 4.0);
    CHECK(h.alpha0 / h.beta0 == doctest::Approx(1e-3).epsilon(1e-14));
    CHECK(h.alpha_zeta0 / h.beta_zeta0 == 1.0);
    CHECK(h.alpha_zeta0 == kNearZeroGammaConstant);
    CHECK(h.potts.gamma0 == 1.0);
    CHECK(h.potts.alpha[0] == doctest::Approx(std::log(0.5)));
    CHECK(h.potts.alpha[1] == doctest::Approx(std::log(0.5)));
    CHECK(std::exp(h.potts.alpha[0]) + std::exp(h.potts.alpha[1]) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(fix_hyperparameters(f0, z0, 2, 30.0, 0.4).potts.gamma0 == 0.4);
}

TEST_CASE("fix_hyperparameters satisfies the SNR relation and both ratio caps")
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> snr(0.0, 60.0);
    const GridShape g{3, 1, 1};
    const Volume f0(g, {0.0, 1.0, 2.0});
    const LabelField z0(g, 2, {0, 1, 1});
    for (int trial = 0; trial < 200; ++trial) {
        const double s = snr(rng);
        const auto h = fix_hyperparameters(f0, z0, 2, s);
        CHECK(h.satisfies_ratio_caps());
        CHECK((h.alpha_zeta0 / h.beta_zeta0) == doctest::Approx((h.alpha0 / h.beta0) * std::pow(10.0, s / 10)).epsilon(1e-12));
        CHECK_NOTHROW(h.validate());
    }
    CHECK_THROWS(fix_hyperparameters(f0, z0, 2, -1.0));
}

TEST_CASE("fix_hyperparameters handles an empty class")
{
    const GridShape g{4, 1, 1};
    const Volume f0(g, {0.0, 0.5, 2.0, 1.0});
    const LabelField z0(g, 3, {0, 0, 2, 2});
    const auto h = fix_hyperparameters(f0, z0, 3, 20.0);
    CHECK(std::isfinite(h.potts.alpha[1]));
    CHECK(h.potts.alpha[1] < h.potts.alpha[0]);
    double total = 0.0;
    for (double a : h.potts.alpha)
        total += std::exp(a);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_NOTHROW(h.potts.validate());
}

TEST_CASE("Hyperparameters validation")
{
    Hyperparameters h;
    h.potts = PottsParams::uniform(2, 1.0);
    CHECK_NOTHROW(h.validate());
    h.beta0 = 0.0;
    CHECK_THROWS(h.validate());
    h.beta0 = 1e-3;
    h.v0 = -1.0;
    CHECK_THROWS(h.validate());
    h.v0 = 1.0;
    h.class_prior_means = {1.0};
    CHECK_THROWS(h.validate());
    h.class_prior_means = {1.0, 2.0};
    CHECK_NOTHROW(h.validate());
    CHECK(h.prior_mean(1) == 2.0);
}

TEST_CASE("generate_phantom with zero variance is piecewise constant")
{
    PhantomSpec spec;
    spec.shape = {20, 20, 1};
    spec.num_classes = 2;
    spec.means = {1.0, 3.0};
    spec.variances = {0.0, 0.0};
    spec.shapes = {disk(1, 9.5, 9.5, 6.0)};
    const auto p = generate_phantom(spec, 1);
    for (std::size_t j = 0; j < p.f.size(); ++j)
        CHECK(p.f[j] == spec.means[static_cast<std::size_t>(p.z[j])]);
}

TEST_CASE("generate_phantom disk area matches the rasterized pixel count")
{
    PhantomSpec spec;
    spec.shape = {64, 64, 1};
    spec.means = {0.0, 1.0};
    spec.variances = {0.01, 0.01};
    spec.shapes = {disk(1, 31.5, 31.5, 20.0)};
    const auto p = generate_phantom(spec, 3);
    std::size_t expected = 0;
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x)
            expected += (x - 31.5) * (x - 31.5) + (y - 31.5) * (y - 31.5) <= 400.0;
    CHECK(p.z.counts()[1] == expected);
    CHECK(std::abs(static_cast<double>(expected) - M_PI * 400.0) < 2 * M_PI * 20.0);
}

TEST_CASE("generate_phantom paints in order and reports overlaps")
{
    PhantomSpec spec;
    spec.shape = {10, 10, 1};
    spec.num_classes = 3;
    spec.means = {0.0, 1.0, 2.0};
    spec.variances = {0.0, 0.0, 0.0};
    spec.shapes = {rect(1, 0, 0, 5, 5), rect(2, 3, 3, 8, 8)};
    const auto p = generate_phantom(spec, 0);
    CHECK(p.z[spec.shape.index(4, 4)] == 2);
    CHECK(p.z[spec.shape.index(1, 1)] == 1);
    CHECK(p.z[spec.shape.index(9, 9)] == 0);
    CHECK(p.overlapped == 9);
}

TEST_CASE("generate_phantom is deterministic and validates")
{
    PhantomSpec spec;
    spec.shape = {16, 16, 1};
    spec.means = {0.0, 1.0};
    spec.variances = {0.1, 0.2};
    spec.shapes = {disk(1, 8, 8, 4)};
    CHECK(generate_phantom(spec, 9).f.values == generate_phantom(spec, 9).f.values);
    CHECK(generate_phantom(spec, 9).f.values != generate_phantom(spec, 10).f.values);
    spec.means = {1.0, 1.0};
    CHECK_THROWS(generate_phantom(spec, 9));
    spec.means = {0.0, 1.0};
    spec.variances = {-0.1, 0.2};
    CHECK_THROWS(generate_phantom(spec, 9));
}

TEST_CASE("simulate_data examples")
{
    IdentityOperator id(4);
    const Volume f(GridShape{4, 1, 1}, {1.0, -1.0, 1.0, -1.0});
    const auto exact = simulate_data(id, f, kNoiseless, 1);
    CHECK(exact.g == f.values);
    CHECK(std::isinf(exact.rho_zeta[0]));

    const auto noisy = simulate_data(id, f, 30.0, 5);
    for (double r : noisy.rho_zeta)
        CHECK(r == doctest::Approx(1e3).epsilon(1e-12));
    CHECK(simulate_data(id, f, 30.0, 5).g == noisy.g);
    CHECK(simulate_data(id, f, 30.0, 6).g != noisy.g);
    CHECK_THROWS(simulate_data(id, Volume(GridShape{4, 1, 1}, 0.0), 30.0, 1));
}

TEST_CASE("simulated data has the requested SNR")
{
    const GridShape g{128, 128, 1};
    const auto conv = Convolution2D::box(g, 3);
    std::mt19937_64 rng(1);
    const Volume f(g, testing::random_vector(g.size(), rng, 0.0, 2.0));
    const auto hf = conv.apply(f.values);
    for (double snr : {5.0, 20.0, 40.0}) {
        const auto d = simulate_data(conv, f, snr, 11);
        double signal = 0.0, noise = 0.0;
        for (std::size_t i = 0; i < hf.size(); ++i) {
            signal += hf[i] * hf[i];
            noise += (d.g[i] - hf[i]) * (d.g[i] - hf[i]);
        }
        CHECK(std::abs(10 * std::log10(signal / noise) - snr) < 0.5);
    }
}
