#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "gmpvba/linops.hpp"
#include "gmpvba/oracle.hpp"
#include "helpers.hpp"

using namespace gmpvba;
using testing::random_vector;

namespace {

PinnedModel make_model(std::shared_ptr<const LinearOperator> op, const GridShape& shape, std::vector<double> means,
                       std::vector<double> precisions, double noise, PottsParams potts, std::vector<double> g)
{
    PinnedModel pm;
    pm.shape = shape;
    pm.class_means = std::move(means);
    pm.class_precisions = std::move(precisions);
    pm.noise_precisions.assign(op->range_size(), noise);
    pm.g = std::move(g);
    pm.potts = std::move(potts);
    pm.op = std::move(op);
    return pm;
}

double normal_pdf(double x, double mean, double variance)
{
    return std::exp(-0.5 * (x - mean) * (x - mean) / variance) / std::sqrt(2.0 * M_PI * variance);
}

}  // namespace

TEST_CASE("exact posterior with one class is the conjugate Gaussian")
{
    std::mt19937_64 rng(31);
    const GridShape shape{3, 2, 1};
    const auto h = std::make_shared<DenseOperator>(5, 6, random_vector(30, rng));
    const auto g = random_vector(5, rng);
    const double rho = 2.5, noise = 40.0, m = 0.7;
    const auto pm = make_model(h, shape, {m}, {rho}, noise, PottsParams::uniform(1, 0.8), g);
    const auto exact = exact_posterior(pm);

    Eigen::MatrixXd H(5, 6);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 6; ++j)
            H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (*h)(i, j);
    const Eigen::VectorXd gv = Eigen::Map<const Eigen::VectorXd>(g.data(), 5);
    const Eigen::MatrixXd P = rho * Eigen::MatrixXd::Identity(6, 6) + noise * H.transpose() * H;
    const Eigen::MatrixXd cov = P.inverse();
    const Eigen::VectorXd mean = cov * (rho * m * Eigen::VectorXd::Ones(6) + noise * H.transpose() * gv);

    CHECK(exact.configurations == 1);
    CHECK(exact.total_probability == doctest::Approx(1.0).epsilon(1e-12));
    for (Eigen::Index j = 0; j < 6; ++j) {
        const auto u = static_cast<std::size_t>(j);
        CHECK(std::abs(exact.mean[u] - mean(j)) <= 1e-10);
        CHECK(std::abs(exact.variance[u] - cov(j, j)) <= 1e-10);
        CHECK(exact.marginals[u] == 1.0);
    }
}

TEST_CASE("exact marginals factorize for independent voxels")
{
    std::mt19937_64 rng(5);
    const GridShape shape{3, 3, 1};
    const auto d = random_vector(9, rng, 0.5, 1.5);
    const auto g = random_vector(9, rng, -0.5, 2.5);
    const std::vector<double> means{0.0, 2.0}, precisions{3.0, 5.0};
    const double noise = 4.0;
    const PottsParams potts{2, {std::log(0.35), std::log(0.65)}, 0.0};
    const auto pm = make_model(std::make_shared<DiagonalOperator>(d), shape, means, precisions, noise, potts, g);
    const auto exact = exact_posterior(pm);
    CHECK(exact.configurations == 512);
    for (std::size_t j = 0; j < 9; ++j) {
        double w[2], cond_mean[2];
        for (std::size_t k = 0; k < 2; ++k) {
            w[k] = std::exp(potts.alpha[k]) *
                   normal_pdf(g[j], d[j] * means[k], d[j] * d[j] / precisions[k] + 1.0 / noise);
            cond_mean[k] = (precisions[k] * means[k] + noise * d[j] * g[j]) / (precisions[k] + noise * d[j] * d[j]);
        }
        const double p1 = w[1] / (w[0] + w[1]);
        CAPTURE(j);
        CHECK(exact.marginals[j * 2 + 1] == doctest::Approx(p1).epsilon(1e-12));
        CHECK(exact.marginals[j * 2] + exact.marginals[j * 2 + 1] == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(exact.mean[j] == doctest::Approx((1 - p1) * cond_mean[0] + p1 * cond_mean[1]).epsilon(1e-12));
    }
}

TEST_CASE("exact posterior on a 2x2 grid normalizes over 16 configurations")
{
    std::mt19937_64 rng(2);
    const GridShape shape{2, 2, 1};
    const auto pm = make_model(std::make_shared<DenseOperator>(4, 4, random_vector(16, rng)), shape, {1.0, 2.0},
                               {4.0, 4.0}, 10.0, PottsParams::uniform(2, 0.9), random_vector(4, rng, 0.0, 3.0));
    const auto exact = exact_posterior(pm);
    CHECK(exact.configurations == 16);
    CHECK(std::abs(exact.total_probability - 1.0) <= 1e-12);
    for (double v : exact.variance)
        CHECK(v > 0.0);
}

TEST_CASE("exact posterior refuses oversized enumerations")
{
    const GridShape shape{21, 1, 1};
    const auto pm = make_model(std::make_shared<IdentityOperator>(21), shape, {0.0, 1.0}, {1.0, 1.0}, 1.0,
                               PottsParams::uniform(2, 0.5), std::vector<double>(21, 0.5));
    CHECK_THROWS_AS(exact_posterior(pm), std::invalid_argument);
    auto bad = pm;
    bad.class_precisions = {1.0, -1.0};
    CHECK_THROWS(bad.validate());
    bad = pm;
    bad.g.pop_back();
    CHECK_THROWS(bad.validate());
}

TEST_CASE("Gibbs reference agrees with exact enumeration on a 3x3 grid")
{
    const auto inst = simulate_pinned_instance(std::make_shared<Convolution2D>(Convolution2D::box(GridShape{3, 3, 1}, 3)),
                                               GridShape{3, 3, 1}, {1.0, 2.0}, 0.05, 0.5, 10.0, 20, 4);
    const auto exact = exact_posterior(inst.model);
    const auto gibbs = gibbs_reference(inst.model, 40000, 1000, 17);
    CHECK(gibbs.samples == 40000);
    for (std::size_t j = 0; j < 9; ++j) {
        CAPTURE(j);
        CHECK(std::abs(gibbs.mean[j] - exact.mean[j]) <= 3 * gibbs.mean_se[j] + 1e-12);
        CHECK(std::abs(gibbs.marginals[j * 2 + 1] - exact.marginals[j * 2 + 1]) <=
              3 * gibbs.marginal_se[j * 2 + 1] + 1e-12);
    }
}

TEST_CASE("Gibbs reference without data or coupling returns the class proportions")
{
    const GridShape shape{4, 3, 1};
    const PottsParams potts{3, {std::log(0.2), std::log(0.5), std::log(0.3)}, 0.0};
    const auto pm = make_model(std::make_shared<DenseOperator>(2, 12, std::vector<double>(24, 0.0)), shape,
                               {0.0, 1.0, 2.0}, {1.0, 2.0, 3.0}, 1.0, potts, {0.3, -0.2});
    const auto gibbs = gibbs_reference(pm, 2000, 10, 1);
    for (std::size_t j = 0; j < shape.size(); ++j)
        for (std::size_t k = 0; k < 3; ++k)
            CHECK(gibbs.marginals[j * 3 + k] == doctest::Approx(std::exp(potts.alpha[k])).epsilon(1e-12));
}

TEST_CASE("Gibbs reference is deterministic and validates its arguments")
{
    const auto inst = simulate_pinned_instance(std::make_shared<IdentityOperator>(4), GridShape{2, 2, 1}, {0.0, 1.0},
                                               0.1, 0.5, 15.0, 10, 9);
    const auto a = gibbs_reference(inst.model, 1000, 50, 3);
    const auto b = gibbs_reference(inst.model, 1000, 50, 3);
    CHECK(a.mean == b.mean);
    CHECK(a.marginals == b.marginals);
    CHECK(gibbs_reference(inst.model, 1000, 50, 4).mean != a.mean);
    CHECK_THROWS(gibbs_reference(inst.model, 999, 50, 3));
    CHECK_THROWS(gibbs_reference(inst.model, 1000, -1, 3));
}

TEST_CASE("pinned hyperparameters and initial state")
{
    const auto inst = simulate_pinned_instance(std::make_shared<IdentityOperator>(9), GridShape{3, 3, 1}, {1.0, 3.0},
                                               0.2, 0.5, 20.0, 10, 2);
    const auto& pm = inst.model;
    const auto hyper = pinned_hyperparameters(pm, 1e6, 1e-8);
    CHECK(hyper.alpha_zeta0 / hyper.beta_zeta0 == doctest::Approx(pm.noise_precisions[0]).epsilon(1e-14));
    CHECK(hyper.alpha0 / hyper.beta0 == doctest::Approx(5.0).epsilon(1e-14));
    CHECK(hyper.prior_mean(1) == 3.0);
    const auto s = pinned_initial_state(pm, hyper);
    CHECK_NOTHROW(s.validate());
    CHECK(s.m_tilde[1] == 3.0);
    CHECK(s.v_tilde[0] == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(s.qz[0] == doctest::Approx(0.5).epsilon(1e-14));

    auto hetero = pm;
    hetero.noise_precisions[3] *= 2.0;
    CHECK_THROWS(pinned_hyperparameters(hetero));
    auto unshared = pm;
    unshared.class_precisions = {5.0, 6.0};
    CHECK_THROWS(pinned_hyperparameters(unshared));
    CHECK_THROWS(pinned_hyperparameters(pm, 0.0));
}

TEST_CASE("noise_precision_for_snr matches simulate_data")
{
    const GridShape shape{8, 8, 1};
    const auto conv = Convolution2D::box(shape, 3);
    std::mt19937_64 rng(6);
    const Volume f(shape, random_vector(shape.size(), rng, 0.0, 2.0));
    CHECK(noise_precision_for_snr(conv, f, 25.0) ==
          doctest::Approx(simulate_data(conv, f, 25.0, 1).rho_zeta[0]).epsilon(1e-14));
    CHECK_THROWS(noise_precision_for_snr(conv, Volume(shape, 0.0), 25.0));
}

TEST_CASE("compare_with_exact")
{
    PosteriorState s(GridShape{2, 1, 1}, 2, 2);
    s.m_tilde = {1.0, 3.0, 0.0, 2.0};
    s.qz = {0.5, 0.5, 1.0, 0.0};
    PosteriorSummary exact;
    exact.mean = {2.5, 0.0};
    exact.marginals = {0.25, 0.75, 1.0, 0.0};
    exact.variance = {1.0, 1.0};
    const auto c = compare_with_exact(s, exact);
    CHECK(c.mean_abs_diff == std::vector<double>{0.5, 0.0});
    CHECK(c.marginal_abs_diff == std::vector<double>{0.25, 0.0});
    CHECK(c.max_mean_diff == 0.5);
    CHECK(c.mean_mean_diff == 0.25);
    CHECK(c.max_marginal_diff == 0.25);
    CHECK(c.mean_marginal_diff == 0.125);
    exact.mean.pop_back();
    CHECK_THROWS(compare_with_exact(s, exact));
}
