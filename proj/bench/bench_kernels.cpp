#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "gmpvba/linops.hpp"
#include "gmpvba/parallel.hpp"
#include "gmpvba/potts.hpp"
#include "gmpvba/reference.hpp"
#include "gmpvba/vba.hpp"

using namespace gmpvba;

namespace {

constexpr int kClasses = 3;

struct Problem {
    GridShape shape;
    Convolution2D op;
    std::vector<double> g;
    PosteriorState state;
    Hyperparameters hyper;

    explicit Problem(std::size_t side)
        : shape{side, side, 1}, op(Convolution2D::box(shape, 5)), g(shape.size()),
          state(shape, kClasses, shape.size())
    {
        std::mt19937_64 rng(side);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (double& x : g)
            x = 3.0 * u(rng);
        for (std::size_t j = 0; j < shape.size(); ++j) {
            double total = 0.0;
            for (int k = 0; k < kClasses; ++k) {
                state.m_tilde[state.at(j, k)] = 1.0 + k + 0.1 * u(rng);
                state.v_tilde[state.at(j, k)] = 0.01 + 0.1 * u(rng);
                state.qz[state.at(j, k)] = 0.1 + u(rng);
                total += state.qz[state.at(j, k)];
            }
            for (int k = 0; k < kClasses; ++k)
                state.qz[state.at(j, k)] /= total;
        }
        for (std::size_t i = 0; i < shape.size(); ++i) {
            state.alpha_zeta[i] = 1.5;
            state.beta_zeta[i] = 0.01 + 0.01 * u(rng);
        }
        for (int k = 0; k < kClasses; ++k) {
            state.m0_tilde[k] = 1.0 + k;
            state.v0_tilde[k] = 0.01;
            state.alpha0_tilde[k] = 100.0;
            state.beta0_tilde[k] = 0.1;
        }
        hyper.potts = PottsParams::uniform(kClasses, 1.0);
    }
};

/// Arguments: grid side, thread count (0 selects the serial reference).
void grid_args(benchmark::internal::Benchmark* b)
{
    for (int side : {64, 128, 256})
        for (int threads : {0, 1, 2, 4})
            b->Args({side, threads});
}

bool use_reference(const benchmark::State& st) { return st.range(1) == 0; }

void BM_Auxiliaries(benchmark::State& st)
{
    const Problem p(static_cast<std::size_t>(st.range(0)));
    set_num_threads(static_cast<int>(st.range(1)));
    for (auto _ : st) {
        if (use_reference(st))
            benchmark::DoNotOptimize(reference::compute_auxiliaries(p.state, p.op, p.g));
        else
            benchmark::DoNotOptimize(compute_auxiliaries(p.state, p.op, p.g));
    }
}
BENCHMARK(BM_Auxiliaries)->Apply(grid_args)->Unit(benchmark::kMillisecond);

void BM_VolumeUpdate(benchmark::State& st)
{
    const Problem p(static_cast<std::size_t>(st.range(0)));
    const auto aux = compute_auxiliaries(p.state, p.op, p.g);
    set_num_threads(static_cast<int>(st.range(1)));
    for (auto _ : st) {
        if (use_reference(st))
            benchmark::DoNotOptimize(reference::update_volume(p.state, aux));
        else
            benchmark::DoNotOptimize(update_volume(p.state, aux));
    }
}
BENCHMARK(BM_VolumeUpdate)->Apply(grid_args)->Unit(benchmark::kMillisecond);

void BM_LabelUpdate(benchmark::State& st)
{
    const Problem p(static_cast<std::size_t>(st.range(0)));
    const auto aux = compute_auxiliaries(p.state, p.op, p.g);
    set_num_threads(static_cast<int>(st.range(1)));
    for (auto _ : st) {
        if (use_reference(st))
            benchmark::DoNotOptimize(reference::update_labels(p.state, aux, p.hyper));
        else
            benchmark::DoNotOptimize(update_labels(p.state, aux, p.hyper));
    }
}
BENCHMARK(BM_LabelUpdate)->Apply(grid_args)->Unit(benchmark::kMillisecond);

void BM_NoisePrecisions(benchmark::State& st)
{
    const Problem p(static_cast<std::size_t>(st.range(0)));
    const auto aux = compute_auxiliaries(p.state, p.op, p.g);
    set_num_threads(static_cast<int>(st.range(1)));
    for (auto _ : st) {
        if (use_reference(st))
            benchmark::DoNotOptimize(reference::update_noise_precisions(p.state, aux, p.op, p.g, p.hyper));
        else
            benchmark::DoNotOptimize(update_noise_precisions(p.state, aux, p.op, p.g, p.hyper));
    }
}
BENCHMARK(BM_NoisePrecisions)->Apply(grid_args)->Unit(benchmark::kMillisecond);

void BM_FreeEnergy(benchmark::State& st)
{
    const Problem p(static_cast<std::size_t>(st.range(0)));
    const auto aux = compute_auxiliaries(p.state, p.op, p.g);
    set_num_threads(static_cast<int>(st.range(1)));
    for (auto _ : st) {
        if (use_reference(st))
            benchmark::DoNotOptimize(reference::entropy(p.state) +
                                     reference::expected_log_joint(p.state, aux, p.op, p.g, p.hyper));
        else
            benchmark::DoNotOptimize(free_energy(p.state, aux, p.g, p.hyper));
    }
}
BENCHMARK(BM_FreeEnergy)->Apply(grid_args)->Unit(benchmark::kMillisecond);

void BM_PottsSweeps(benchmark::State& st)
{
    const GridShape shape{static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(0)), 1};
    const auto params = PottsParams::uniform(2, 0.8);
    set_num_threads(static_cast<int>(st.range(1)));
    for (auto _ : st) {
        if (use_reference(st))
            benchmark::DoNotOptimize(reference::sample_potts(shape, params, 10, 1));
        else
            benchmark::DoNotOptimize(sample_potts(shape, params, 10, 1));
    }
}
BENCHMARK(BM_PottsSweeps)->Apply(grid_args)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
