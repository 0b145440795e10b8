#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "gmpvba/grid.hpp"
#include "gmpvba/linops.hpp"
#include "gmpvba/model.hpp"
#include "gmpvba/vba.hpp"

namespace testing {

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double& x : v)
        x = u(rng);
    return v;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return a.size() == b.size() ? m : INFINITY;
}

inline double norm(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v)
        s += x * x;
    return std::sqrt(s);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("gmpvba_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

/// Valid posterior state with every parameter drawn at random.
inline gmpvba::PosteriorState random_state(const gmpvba::GridShape& shape, int K, std::size_t M,
                                           std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    gmpvba::PosteriorState s(shape, K, M);
    const std::size_t k = static_cast<std::size_t>(K);
    for (std::size_t j = 0; j < shape.size(); ++j) {
        double total = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            s.m_tilde[j * k + c] = 3.0 * u(rng) - 1.0;
            s.v_tilde[j * k + c] = 0.05 + u(rng);
            s.qz[j * k + c] = 0.05 + u(rng);
            total += s.qz[j * k + c];
        }
        for (std::size_t c = 0; c < k; ++c)
            s.qz[j * k + c] /= total;
    }
    for (std::size_t i = 0; i < M; ++i) {
        s.alpha_zeta[i] = 0.5 + 2.0 * u(rng);
        s.beta_zeta[i] = 0.1 + u(rng);
    }
    for (std::size_t c = 0; c < k; ++c) {
        s.m0_tilde[c] = 2.0 * u(rng);
        s.v0_tilde[c] = 0.01 + u(rng);
        s.alpha0_tilde[c] = 1.0 + 5.0 * u(rng);
        s.beta0_tilde[c] = 0.2 + u(rng);
    }
    return s;
}

inline gmpvba::Hyperparameters random_hyper(int K, double gamma0, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    gmpvba::Hyperparameters h;
    h.alpha_zeta0 = 0.01 + u(rng);
    h.beta_zeta0 = 0.01 + u(rng);
    h.alpha0 = 0.01 + u(rng);
    h.beta0 = 0.01 + u(rng);
    h.m0 = u(rng);
    h.v0 = 0.5 + u(rng);
    h.potts = gmpvba::PottsParams::uniform(K, gamma0);
    return h;
}

}  // namespace testing
