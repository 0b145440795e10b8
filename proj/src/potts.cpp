#include "gmpvba/potts.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gmpvba/parallel.hpp"

namespace gmpvba {

PottsParams PottsParams::uniform(int num_classes, double gamma0)
{
    PottsParams p;
    p.num_classes = num_classes;
    p.alpha.assign(static_cast<std::size_t>(std::max(num_classes, 0)), -std::log(static_cast<double>(num_classes)));
    p.gamma0 = gamma0;
    p.validate();
    return p;
}

void PottsParams::validate() const
{
    if (num_classes < 1)
        throw std::invalid_argument("Potts prior needs K >= 1");
    if (alpha.size() != static_cast<std::size_t>(num_classes))
        throw DimensionError("Potts external field alpha", static_cast<std::size_t>(num_classes), alpha.size());
    double total = 0.0;
    for (double a : alpha)
        total += std::exp(a);
    if (std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("Potts external field must satisfy sum_k exp(alpha_k) = 1, got " +
                                    std::to_string(total));
    if (!(gamma0 >= 0.0))
        throw std::invalid_argument("granularity coefficient gamma0 must be >= 0, got " + std::to_string(gamma0));
}

std::vector<std::size_t> neighbors(const GridShape& shape, std::size_t j)
{
    if (j >= shape.size())
        throw std::out_of_range("voxel " + std::to_string(j) + " outside grid " + to_string(shape));
    const auto n = neighbor_list(shape, j);
    return {n.begin(), n.end()};
}

double log_prior_unnormalized(const LabelField& z, const PottsParams& params)
{
    params.validate();
    z.validate();
    if (z.num_classes != params.num_classes)
        throw std::invalid_argument("label field and Potts prior disagree on K");
    double field = 0.0;
    long long agreeing = 0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        field += params.alpha[static_cast<std::size_t>(z[j])];
        for (std::size_t i : neighbor_list(z.shape, j))
            agreeing += (z[i] == z[j]);
    }
    return field + params.gamma0 * static_cast<double>(agreeing);
}

void site_log_weights(const LabelField& z, const PottsParams& params, std::size_t j, std::span<double> out)
{
    for (int k = 0; k < params.num_classes; ++k)
        out[static_cast<std::size_t>(k)] = params.alpha[static_cast<std::size_t>(k)];
    for (std::size_t i : neighbor_list(z.shape, j))
        out[static_cast<std::size_t>(z[i])] += 2.0 * params.gamma0;
}

namespace {

int draw_class(std::span<const double> log_weights, double u)
{
    const double top = *std::max_element(log_weights.begin(), log_weights.end());
    double weights[64];
    double total = 0.0;
    for (std::size_t k = 0; k < log_weights.size(); ++k) {
        weights[k] = std::exp(log_weights[k] - top);
        total += weights[k];
    }
    double target = u * total;
    for (std::size_t k = 0; k + 1 < log_weights.size(); ++k) {
        if (target < weights[k])
            return static_cast<int>(k);
        target -= weights[k];
    }
    return static_cast<int>(log_weights.size()) - 1;
}

}  // namespace

LabelField sample_potts(const GridShape& shape, const PottsParams& params, int sweeps, std::uint64_t seed)
{
    params.validate();
    if (sweeps < 1)
        throw std::invalid_argument("sample_potts needs at least one sweep");
    if (params.num_classes > 64)
        throw std::invalid_argument("sample_potts supports at most 64 classes");
    const CounterRng rng(seed);
    const auto K = static_cast<std::size_t>(params.num_classes);
    LabelField z(shape, params.num_classes);

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(z.size()); ++j)
        z[static_cast<std::size_t>(j)] = draw_class(params.alpha, rng.uniform(0, static_cast<std::uint64_t>(j)));

    const auto lines = static_cast<std::ptrdiff_t>(shape.ny * shape.nz);
    for (int sweep = 1; sweep <= sweeps; ++sweep) {
        for (std::size_t color = 0; color < 2; ++color) {
            const auto stream = static_cast<std::uint64_t>(2 * sweep - 1) + color;
#pragma omp parallel for schedule(static)
            for (std::ptrdiff_t line = 0; line < lines; ++line) {
                const std::size_t y = static_cast<std::size_t>(line) % shape.ny;
                const std::size_t zz = static_cast<std::size_t>(line) / shape.ny;
                double log_w[64];
                for (std::size_t x = (color + y + zz) % 2; x < shape.nx; x += 2) {
                    const std::size_t j = shape.index(x, y, zz);
                    site_log_weights(z, params, j, std::span<double>(log_w, K));
                    z[j] = draw_class(std::span<const double>(log_w, K), rng.uniform(stream, j));
                }
            }
        }
    }
    return z;
}

double like_neighbor_fraction(const LabelField& z)
{
    std::size_t pairs = 0;
    std::size_t like = 0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        for (std::size_t i : neighbor_list(z.shape, j)) {
            if (i > j) {
                ++pairs;
                like += (z[i] == z[j]);
            }
        }
    }
    return pairs ? static_cast<double>(like) / static_cast<double>(pairs) : 1.0;
}

}  // namespace gmpvba
