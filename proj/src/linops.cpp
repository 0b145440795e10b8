#include "gmpvba/linops.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "gmpvba/io.hpp"

namespace gmpvba {

namespace {

using Index = std::ptrdiff_t;

void require_nonnegative(std::span<const double> v, const char* what)
{
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(v[i] >= 0.0))
            throw std::invalid_argument(std::string(what) + " must be nonnegative; entry " + std::to_string(i) +
                                        " is " + std::to_string(v[i]));
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// LinearOperator

std::vector<double> LinearOperator::apply(std::span<const double> f) const
{
    require_size(f, domain_size(), "apply input");
    std::vector<double> out(range_size(), 0.0);
    apply_kernel(f, out);
    return out;
}

std::vector<double> LinearOperator::adjoint(std::span<const double> g) const
{
    require_size(g, range_size(), "adjoint input");
    std::vector<double> out(domain_size(), 0.0);
    adjoint_kernel(g, out);
    return out;
}

std::vector<double> LinearOperator::weighted_gram_diagonal(std::span<const double> w) const
{
    require_size(w, range_size(), "gram diagonal weights");
    require_nonnegative(w, "gram diagonal weights");
    std::vector<double> out(domain_size(), 0.0);
    gram_diagonal_kernel(w, out);
    return out;
}

std::vector<double> LinearOperator::row_weighted_square_sum(std::span<const double> v) const
{
    require_size(v, domain_size(), "row square sum variances");
    require_nonnegative(v, "row square sum variances");
    std::vector<double> out(range_size(), 0.0);
    row_square_sum_kernel(v, out);
    return out;
}

std::vector<double> LinearOperator::absolute_apply(std::span<const double> f) const
{
    require_size(f, domain_size(), "absolute apply input");
    std::vector<double> out(range_size(), 0.0);
    absolute_apply_kernel(f, out);
    return out;
}

std::vector<double> LinearOperator::absolute_adjoint(std::span<const double> g) const
{
    require_size(g, range_size(), "absolute adjoint input");
    std::vector<double> out(domain_size(), 0.0);
    absolute_adjoint_kernel(g, out);
    return out;
}

std::vector<double> LinearOperator::separable_curvature(std::span<const double> w) const
{
    require_size(w, range_size(), "curvature weights");
    require_nonnegative(w, "curvature weights");
    const std::vector<double> ones(domain_size(), 1.0);
    auto row_sums = absolute_apply(ones);
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(row_sums.size()); ++i)
        row_sums[i] *= w[i];
    return absolute_adjoint(row_sums);
}

// ---------------------------------------------------------------------------
// Identity and diagonal

void IdentityOperator::apply_kernel(std::span<const double> f, std::span<double> out) const
{
    std::copy(f.begin(), f.end(), out.begin());
}

void IdentityOperator::adjoint_kernel(std::span<const double> g, std::span<double> out) const
{
    std::copy(g.begin(), g.end(), out.begin());
}

void IdentityOperator::gram_diagonal_kernel(std::span<const double> w, std::span<double> out) const
{
    std::copy(w.begin(), w.end(), out.begin());
}

void IdentityOperator::row_square_sum_kernel(std::span<const double> v, std::span<double> out) const
{
    std::copy(v.begin(), v.end(), out.begin());
}

void IdentityOperator::absolute_apply_kernel(std::span<const double> f, std::span<double> out) const
{
    std::copy(f.begin(), f.end(), out.begin());
}

void IdentityOperator::absolute_adjoint_kernel(std::span<const double> g, std::span<double> out) const
{
    std::copy(g.begin(), g.end(), out.begin());
}

void DiagonalOperator::apply_kernel(std::span<const double> f, std::span<double> out) const
{
#pragma omp parallel for schedule(static)
    for (Index j = 0; j < static_cast<Index>(d_.size()); ++j)
        out[j] = d_[j] * f[j];
}

void DiagonalOperator::adjoint_kernel(std::span<const double> g, std::span<double> out) const
{
    apply_kernel(g, out);
}

void DiagonalOperator::gram_diagonal_kernel(std::span<const double> w, std::span<double> out) const
{
#pragma omp parallel for schedule(static)
    for (Index j = 0; j < static_cast<Index>(d_.size()); ++j)
        out[j] = w[j] * d_[j] * d_[j];
}

void DiagonalOperator::row_square_sum_kernel(std::span<const double> v, std::span<double> out) const
{
    gram_diagonal_kernel(v, out);
}

void DiagonalOperator::absolute_apply_kernel(std::span<const double> f, std::span<double> out) const
{
#pragma omp parallel for schedule(static)
    for (Index j = 0; j < static_cast<Index>(d_.size()); ++j)
        out[j] = std::abs(d_[j]) * f[j];
}

void DiagonalOperator::absolute_adjoint_kernel(std::span<const double> g, std::span<double> out) const
{
    absolute_apply_kernel(g, out);
}

// ---------------------------------------------------------------------------
// Dense

DenseOperator::DenseOperator(std::size_t rows, std::size_t cols, std::vector<double> row_major)
    : rows_(rows), cols_(cols), a_(std::move(row_major))
{
    if (a_.size() != rows_ * cols_)
        throw DimensionError("dense matrix entries", rows_ * cols_, a_.size());
}

DenseOperator DenseOperator::from_csv(const std::filesystem::path& path)
{
    auto rows = read_csv_rows(path);
    if (rows.empty() || rows.front().size() != 2)
        throw std::runtime_error(path.string() + ": first line must be the header M,N");
    const double m = rows.front()[0];
    const double n = rows.front()[1];
    if (m < 1 || n < 1 || m != std::floor(m) || n != std::floor(n))
        throw std::runtime_error(path.string() + ": invalid header M,N");
    const auto nrows = static_cast<std::size_t>(m);
    const auto ncols = static_cast<std::size_t>(n);
    if (rows.size() != nrows + 1)
        throw std::runtime_error(path.string() + ": expected " + std::to_string(nrows) + " matrix rows, found " +
                                 std::to_string(rows.size() - 1));
    std::vector<double> data;
    data.reserve(nrows * ncols);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != ncols)
            throw std::runtime_error(path.string() + ": row " + std::to_string(i) + " has " +
                                     std::to_string(rows[i].size()) + " values, expected " + std::to_string(ncols));
        data.insert(data.end(), rows[i].begin(), rows[i].end());
    }
    return DenseOperator(nrows, ncols, std::move(data));
}

void DenseOperator::apply_kernel(std::span<const double> f, std::span<double> out) const
{
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(rows_); ++i) {
        const double* row = a_.data() + static_cast<std::size_t>(i) * cols_;
        double s = 0.0;
        for (std::size_t j = 0; j < cols_; ++j)
            s += row[j] * f[j];
        out[i] = s;
    }
}

void DenseOperator::adjoint_kernel(std::span<const double> g, std::span<double> out) const
{
#pragma omp parallel for schedule(static)
    for (Index j = 0; j < static_cast<Index>(cols_); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < rows_; ++i)
            s += a_[i * cols_ + static_cast<std::size_t>(j)] * g[i];
        out[j] = s;
    }
}

void DenseOperator::gram_diagonal_kernel(std::span<const double> w, std::span<double> out) const
{
#pragma omp parallel for schedule(static)
    for (Index j = 0; j < static_cast<Index>(cols_); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < rows_; ++i) {
            const double h = a_[i * cols_ + static_cast<std::size_t>(j)];
            s += w[i] * h * h;
        }
        out[j] = s;
    }
}

void DenseOperator::row_square_sum_kernel(std::span<const double> v, std::span<double> out) const
{
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(rows_); ++i) {
        const double* row = a_.data() + static_cast<std::size_t>(i) * cols_;
        double s = 0.0;
        for (std::size_t j = 0; j < cols_; ++j)
            s += row[j] * row[j] * v[j];
        out[i] = s;
    }
}

void DenseOperator::absolute_apply_kernel(std::span<const double> f, std::span<double> out) const
{
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(rows_); ++i) {
        const double* row = a_.data() + static_cast<std::size_t>(i) * cols_;
        double s = 0.0;
        for (std::size_t j = 0; j < cols_; ++j)
            s += std::abs(row[j]) * f[j];
        out[i] = s;
    }
}

void DenseOperator::absolute_adjoint_kernel(std::span<const double> g, std::span<double> out) const
{
#pragma omp parallel for schedule(static)
    for (Index j = 0; j < static_cast<Index>(cols_); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < rows_; ++i)
            s += std::abs(a_[i * cols_ + static_cast<std::size_t>(j)]) * g[i];
        out[j] = s;
    }
}

DenseOperator densify(const LinearOperator& op)
{
    const std::size_t m = op.range_size();
    const std::size_t n = op.domain_size();
    std::vector<double> a(m * n, 0.0);
    std::vector<double> unit(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        unit[j] = 1.0;
        const auto column = op.apply(unit);
        for (std::size_t i = 0; i < m; ++i)
            a[i * n + j] = column[i];
        unit[j] = 0.0;
    }
    return DenseOperator(m, n, std::move(a));
}

// ---------------------------------------------------------------------------
// Sparse

SparseOperator::SparseOperator(std::size_t rows, std::size_t cols, std::vector<Triplet> entries)
    : rows_(rows), cols_(cols)
{
    for (const auto& t : entries) {
        if (t.row >= rows_ || t.col >= cols_)
            throw std::out_of_range("sparse entry (" + std::to_string(t.row) + ", " + std::to_string(t.col) +
                                    ") outside " + std::to_string(rows_) + " x " + std::to_string(cols_));
    }
    auto by_row = [](const Triplet& a, const Triplet& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; };
    std::sort(entries.begin(), entries.end(), by_row);
    // Repeated coordinates are summed; the squared-coefficient queries need one entry per (row, col).
    std::size_t kept = 0;
    for (std::size_t p = 0; p < entries.size(); ++p) {
        if (kept > 0 && entries[kept - 1].row == entries[p].row && entries[kept - 1].col == entries[p].col)
            entries[kept - 1].value += entries[p].value;
        else
            entries[kept++] = entries[p];
    }
    entries.resize(kept);

    row_ptr_.assign(rows_ + 1, 0);
    for (const auto& t : entries)
        ++row_ptr_[t.row + 1];
    for (std::size_t i = 0; i < rows_; ++i)
        row_ptr_[i + 1] += row_ptr_[i];
    row_cols_.reserve(entries.size());
    row_values_.reserve(entries.size());
    for (const auto& t : entries) {
        row_cols_.push_back(t.col);
        row_values_.push_back(t.value);
    }

    // Column form; a stable counting pass keeps rows ascending within a column.
    col_ptr_.assign(cols_ + 1, 0);
    for (const auto& t : entries)
        ++col_ptr_[t.col + 1];
    for (std::size_t j = 0; j < cols_; ++j)
        col_ptr_[j + 1] += col_ptr_[j];
    col_rows_.resize(entries.size());
    col_values_.resize(entries.size());
    std::vector<std::size_t> fill(col_ptr_.begin(), col_ptr_.end() - 1);
    for (const auto& t : entries) {
        const std::size_t p = fill[t.col]++;
        col_rows_[p] = t.row;
        col_values_[p] = t.value;
    }
}

void SparseOperator::apply_kernel(std::span<const double> f, std::span<double> out) const
{
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(rows_); ++i) {
        double s = 0.0;
        for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
            s += row_values_[p] * f[row_cols_[p]];
        out[i] = s;
    }
}

void SparseOperator::adjoint_kernel(std::span<const double> g, std::span<double> out) const
{
#pragma omp parallel for schedule(static)
    for (Index j = 0; j < static_cast<Index>(cols_); ++j) {
        double s = 0.0;
        for (std::size_t p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p)
            s += col_values_[p] * g[col_rows_[p]];
        out[j] = s;
    }
}

void SparseOperator::gram_diagonal_kernel(std::span<const double> w, std::span<double> out) const
{
#pragma omp parallel for schedule(static)
    for (Index j = 0; j < static_cast<Index>(cols_); ++j) {
        double s = 0.0;
        for (std::size_t p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p)
            s += w[col_rows_[p]] * col_values_[p] * col_values_[p];
        out[j] = s;
    }
}

void SparseOperator::row_square_sum_kernel(std::span<const double> v, std::span<double> out) const
{
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(rows_); ++i) {
        double s = 0.0;
        for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
            s += row_values_[p] * row_values_[p] * v[row_cols_[p]];
        out[i] = s;
    }
}

void SparseOperator::absolute_apply_kernel(std::span<const double> f, std::span<double> out) const
{
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(rows_); ++i) {
        double s = 0.0;
        for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
            s += std::abs(row_values_[p]) * f[row_cols_[p]];
        out[i] = s;
    }
}

void SparseOperator::absolute_adjoint_kernel(std::span<const double> g, std::span<double> out) const
{
#pragma omp parallel for schedule(static)
    for (Index j = 0; j < static_cast<Index>(cols_); ++j) {
        double s = 0.0;
        for (std::size_t p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p)
            s += std::abs(col_values_[p]) * g[col_rows_[p]];
        out[j] = s;
    }
}

// ---------------------------------------------------------------------------
// Convolution

Convolution2D::Convolution2D(GridShape shape, std::size_t kernel_nx, std::size_t kernel_ny, std::vector<double> kernel)
    : shape_(shape), rx_(static_cast<int>(kernel_nx / 2)), ry_(static_cast<int>(kernel_ny / 2)), kernel_(std::move(kernel))
{
    if (shape_.nz != 1)
        throw std::invalid_argument("Convolution2D requires a 2D grid, got " + to_string(shape_));
    if (kernel_nx % 2 == 0 || kernel_ny % 2 == 0)
        throw std::invalid_argument("convolution kernel sides must be odd");
    if (kernel_.size() != kernel_nx * kernel_ny)
        throw DimensionError("convolution kernel taps", kernel_nx * kernel_ny, kernel_.size());
}

Convolution2D Convolution2D::box(GridShape shape, std::size_t size)
{
    const double tap = 1.0 / static_cast<double>(size * size);
    return Convolution2D(shape, size, size, std::vector<double>(size * size, tap));
}

template <class Tap>
void Convolution2D::correlate(std::span<const double> in, std::span<double> out, int sign, Tap&& tap) const
{
    const int nx = static_cast<int>(shape_.nx);
    const int ny = static_cast<int>(shape_.ny);
    const int kx = 2 * rx_ + 1;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < ny; ++y) {
        for (int x = 0; x < nx; ++x) {
            double s = 0.0;
            for (int dy = -ry_; dy <= ry_; ++dy) {
                const int yy = y + sign * dy;
                if (yy < 0 || yy >= ny)
                    continue;
                for (int dx = -rx_; dx <= rx_; ++dx) {
                    const int xx = x + sign * dx;
                    if (xx < 0 || xx >= nx)
                        continue;
                    s += tap(kernel_[static_cast<std::size_t>((dy + ry_) * kx + dx + rx_)]) *
                         in[static_cast<std::size_t>(yy * nx + xx)];
                }
            }
            out[static_cast<std::size_t>(y * nx + x)] = s;
        }
    }
}

void Convolution2D::apply_kernel(std::span<const double> f, std::span<double> out) const
{
    correlate(f, out, +1, [](double k) { return k; });
}

void Convolution2D::adjoint_kernel(std::span<const double> g, std::span<double> out) const
{
    correlate(g, out, -1, [](double k) { return k; });
}

void Convolution2D::gram_diagonal_kernel(std::span<const double> w, std::span<double> out) const
{
    correlate(w, out, -1, [](double k) { return k * k; });
}

void Convolution2D::row_square_sum_kernel(std::span<const double> v, std::span<double> out) const
{
    correlate(v, out, +1, [](double k) { return k * k; });
}

void Convolution2D::absolute_apply_kernel(std::span<const double> f, std::span<double> out) const
{
    correlate(f, out, +1, [](double k) { return std::abs(k); });
}

void Convolution2D::absolute_adjoint_kernel(std::span<const double> g, std::span<double> out) const
{
    correlate(g, out, -1, [](double k) { return std::abs(k); });
}

// ---------------------------------------------------------------------------
// Parallel-beam projector

namespace {

std::vector<Triplet> build_projector(const GridShape& shape, const ParallelBeamGeometry& geometry)
{
    if (shape.nz != 1)
        throw std::invalid_argument("parallel-beam projector requires a 2D grid, got " + to_string(shape));
    if (geometry.num_angles == 0 || geometry.num_bins == 0 || !(geometry.bin_spacing > 0.0))
        throw std::invalid_argument("projector geometry needs angles > 0, bins > 0 and spacing > 0");
    const std::size_t rays = geometry.num_angles * geometry.num_bins;
    std::vector<std::vector<Triplet>> per_ray(rays);
#pragma omp parallel for schedule(dynamic, 16)
    for (Index r = 0; r < static_cast<Index>(rays); ++r) {
        const std::size_t a = static_cast<std::size_t>(r) / geometry.num_bins;
        const std::size_t b = static_cast<std::size_t>(r) % geometry.num_bins;
        const double angle = std::numbers::pi * static_cast<double>(a) / static_cast<double>(geometry.num_angles);
        const double offset =
            (static_cast<double>(b) - 0.5 * static_cast<double>(geometry.num_bins - 1)) * geometry.bin_spacing;
        per_ray[static_cast<std::size_t>(r)] =
            ParallelBeamProjector::trace_ray(shape, angle, offset, static_cast<std::size_t>(r));
    }
    std::vector<Triplet> entries;
    for (auto& ray : per_ray)
        entries.insert(entries.end(), ray.begin(), ray.end());
    return entries;
}

}  // namespace

ParallelBeamProjector::ParallelBeamProjector(GridShape shape, ParallelBeamGeometry geometry)
    : SparseOperator(geometry.num_angles * geometry.num_bins, shape.size(), build_projector(shape, geometry)),
      shape_(shape),
      geometry_(geometry)
{
}

std::vector<Triplet> ParallelBeamProjector::trace_ray(const GridShape& shape, double angle, double offset,
                                                      std::size_t row)
{
    const double dx = std::cos(angle);
    const double dy = std::sin(angle);
    // Point of the ray closest to the grid center, which sits at the origin.
    const double px = -offset * dy;
    const double py = offset * dx;
    const double half_x = 0.5 * static_cast<double>(shape.nx);
    const double half_y = 0.5 * static_cast<double>(shape.ny);
    constexpr double eps = 1e-12;

    // Parametric interval inside the bounding box.
    double t_min = -std::numeric_limits<double>::infinity();
    double t_max = std::numeric_limits<double>::infinity();
    auto clip = [&](double p, double d, double half) {
        if (std::abs(d) < eps)
            return std::abs(p) < half;
        double t0 = (-half - p) / d;
        double t1 = (half - p) / d;
        if (t0 > t1)
            std::swap(t0, t1);
        t_min = std::max(t_min, t0);
        t_max = std::min(t_max, t1);
        return true;
    };
    if (!clip(px, dx, half_x) || !clip(py, dy, half_y) || !(t_max > t_min))
        return {};

    std::vector<double> crossings{t_min, t_max};
    if (std::abs(dx) >= eps) {
        for (std::size_t i = 0; i <= shape.nx; ++i) {
            const double t = (static_cast<double>(i) - half_x - px) / dx;
            if (t > t_min && t < t_max)
                crossings.push_back(t);
        }
    }
    if (std::abs(dy) >= eps) {
        for (std::size_t i = 0; i <= shape.ny; ++i) {
            const double t = (static_cast<double>(i) - half_y - py) / dy;
            if (t > t_min && t < t_max)
                crossings.push_back(t);
        }
    }
    std::sort(crossings.begin(), crossings.end());

    std::vector<Triplet> out;
    for (std::size_t s = 0; s + 1 < crossings.size(); ++s) {
        const double length = crossings[s + 1] - crossings[s];
        if (length <= eps)
            continue;
        const double tm = 0.5 * (crossings[s] + crossings[s + 1]);
        const double x = px + tm * dx + half_x;
        const double y = py + tm * dy + half_y;
        const auto ix = static_cast<std::ptrdiff_t>(std::floor(x));
        const auto iy = static_cast<std::ptrdiff_t>(std::floor(y));
        if (ix < 0 || iy < 0 || ix >= static_cast<std::ptrdiff_t>(shape.nx) ||
            iy >= static_cast<std::ptrdiff_t>(shape.ny))
            continue;
        out.push_back({row, shape.index(static_cast<std::size_t>(ix), static_cast<std::size_t>(iy)), length});
    }
    std::sort(out.begin(), out.end(), [](const Triplet& a, const Triplet& b) { return a.col < b.col; });
    return out;
}

double dot(std::span<const double> a, std::span<const double> b)
{
    require_size(b, a.size(), "dot operand");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

}  // namespace gmpvba
