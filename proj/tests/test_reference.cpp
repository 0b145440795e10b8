#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "gmpvba/linops.hpp"
#include "gmpvba/parallel.hpp"
#include "gmpvba/reference.hpp"
#include "gmpvba/vba.hpp"
#include "helpers.hpp"

using namespace gmpvba;

namespace {

double relative_gap(const std::vector<double>& a, const std::vector<double>& b)
{
    double gap = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        gap = std::max(gap, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
    return a.size() == b.size() ? gap : INFINITY;
}

/// One iteration built only from the serial kernels.
double reference_sweep(PosteriorState& s, const LinearOperator& op, const std::vector<double>& g,
                       const Hyperparameters& hyper)
{
    auto aux = reference::compute_auxiliaries(s, op, g);
    auto volume = reference::update_volume(s, aux);
    auto labels = reference::update_labels(s, aux, hyper);
    s.m_tilde = volume.m_tilde;
    s.v_tilde = volume.v_tilde;
    s.qz = labels;
    aux = reference::compute_auxiliaries(s, op, g);
    auto noise = reference::update_noise_precisions(s, aux, op, g, hyper);
    s.alpha_zeta = noise.alpha_zeta;
    s.beta_zeta = noise.beta_zeta;
    auto means = update_class_means(s, hyper);
    s.m0_tilde = means.m0_tilde;
    s.v0_tilde = means.v0_tilde;
    auto precisions = update_class_precisions(s, hyper);
    s.alpha0_tilde = precisions.alpha0_tilde;
    s.beta0_tilde = precisions.beta0_tilde;
    aux = reference::compute_auxiliaries(s, op, g);
    return reference::entropy(s) + reference::expected_log_joint(s, aux, op, g, hyper);
}

}  // namespace

TEST_CASE("iterate follows the serial reference trajectory")
{
    std::mt19937_64 rng(13);
    const GridShape shape{10, 9, 1};
    ParallelBeamProjector op(shape, {12, 15, 1.0});
    const auto g = testing::random_vector(op.range_size(), rng, 0.0, 8.0);
    const auto start = testing::random_state(shape, 3, op.range_size(), rng);
    const auto hyper = testing::random_hyper(3, 0.8, rng);

    for (int threads : {1, 4}) {
        CAPTURE(threads);
        const int before = max_threads();
        set_num_threads(threads);
        std::vector<PosteriorState> states;
        std::vector<double> energies;
        IterateOptions options;
        options.tol = 1e-300;
        options.max_iter = 15;
        options.observer = [&](const PosteriorState& s, const FreeEnergyRecord& r) {
            states.push_back(s);
            energies.push_back(r.free_energy);
        };
        iterate(start, op, g, hyper, options);
        set_num_threads(before);
        REQUIRE(states.size() == 15);

        auto ref = start;
        for (std::size_t t = 0; t < states.size(); ++t) {
            CAPTURE(t);
            const double f = reference_sweep(ref, op, g, hyper);
            CHECK(std::abs(f - energies[t]) <= 1e-9 * std::abs(f));
            CHECK(relative_gap(states[t].m_tilde, ref.m_tilde) <= 1e-9);
            CHECK(relative_gap(states[t].qz, ref.qz) <= 1e-9);
            CHECK(relative_gap(states[t].beta_zeta, ref.beta_zeta) <= 1e-9);
            CHECK(relative_gap(states[t].beta0_tilde, ref.beta0_tilde) <= 1e-9);
        }
    }
}

TEST_CASE("entropy and expected log joint agree with the serial reference on a 3D grid")
{
    std::mt19937_64 rng(21);
    const GridShape shape{5, 4, 3};
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < 40; ++i)
        for (std::size_t j = 0; j < shape.size(); ++j)
            if ((i * 5 + j * 11) % 7 == 0)
                t.push_back({i, j, testing::random_vector(1, rng, 0.0, 1.0)[0]});
    SparseOperator op(40, shape.size(), std::move(t));
    const auto g = testing::random_vector(40, rng);
    const auto s = testing::random_state(shape, 2, 40, rng);
    const auto hyper = testing::random_hyper(2, 1.3, rng);
    const auto aux = compute_auxiliaries(s, op, g);
    CHECK(entropy(s) == doctest::Approx(reference::entropy(s)).epsilon(1e-12));
    CHECK(expected_log_joint(s, aux, g, hyper) ==
          doctest::Approx(reference::expected_log_joint(s, aux, op, g, hyper)).epsilon(1e-12));
    CHECK(relative_gap(update_labels(s, aux, hyper), reference::update_labels(s, aux, hyper)) <= 1e-12);
}
