#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "gmpvba/grid.hpp"

namespace gmpvba {

/// Matrix-free forward operator H : R^N -> R^M.
///
/// Besides H f and H^T g the solver needs two diagonal queries that would
/// otherwise require the explicit matrix:
///   weighted_gram_diagonal(w)_j  = sum_i w_i H_ij^2   ([H^T W H]_jj)
///   row_weighted_square_sum(v)_i = sum_j H_ij^2 v_j   ([H V H^T]_ii)
/// and, for the damped volume step, products with |H| (entrywise
/// absolute values):
///   separable_curvature(w)_j = sum_i |H_ij| w_i sum_l |H_il|
/// which bounds [H^T W H]_jj from above and makes diag(c) - H^T W H
/// positive semidefinite.
///
/// The public calls validate sizes and signs and then dispatch to the
/// per-kind kernels. Operators are immutable once built, so a single
/// instance may be queried from several threads.
class LinearOperator {
public:
    virtual ~LinearOperator() = default;

    virtual std::size_t domain_size() const noexcept = 0;
    virtual std::size_t range_size() const noexcept = 0;
    virtual std::string kind() const = 0;

    std::vector<double> apply(std::span<const double> f) const;
    std::vector<double> adjoint(std::span<const double> g) const;
    std::vector<double> weighted_gram_diagonal(std::span<const double> w) const;
    std::vector<double> row_weighted_square_sum(std::span<const double> v) const;
    std::vector<double> absolute_apply(std::span<const double> f) const;
    std::vector<double> absolute_adjoint(std::span<const double> g) const;
    std::vector<double> separable_curvature(std::span<const double> w) const;

protected:
    virtual void apply_kernel(std::span<const double> f, std::span<double> out) const = 0;
    virtual void adjoint_kernel(std::span<const double> g, std::span<double> out) const = 0;
    virtual void gram_diagonal_kernel(std::span<const double> w, std::span<double> out) const = 0;
    virtual void row_square_sum_kernel(std::span<const double> v, std::span<double> out) const = 0;
    virtual void absolute_apply_kernel(std::span<const double> f, std::span<double> out) const = 0;
    virtual void absolute_adjoint_kernel(std::span<const double> g, std::span<double> out) const = 0;
};

class IdentityOperator final : public LinearOperator {
public:
    explicit IdentityOperator(std::size_t n) : n_(n) {}
    std::size_t domain_size() const noexcept override { return n_; }
    std::size_t range_size() const noexcept override { return n_; }
    std::string kind() const override { return "identity"; }

protected:
    void apply_kernel(std::span<const double> f, std::span<double> out) const override;
    void adjoint_kernel(std::span<const double> g, std::span<double> out) const override;
    void gram_diagonal_kernel(std::span<const double> w, std::span<double> out) const override;
    void row_square_sum_kernel(std::span<const double> v, std::span<double> out) const override;
    void absolute_apply_kernel(std::span<const double> f, std::span<double> out) const override;
    void absolute_adjoint_kernel(std::span<const double> g, std::span<double> out) const override;

private:
    std::size_t n_;
};

/// H = diag(d), square.
class DiagonalOperator final : public LinearOperator {
public:
    explicit DiagonalOperator(std::vector<double> diagonal) : d_(std::move(diagonal)) {}
    std::size_t domain_size() const noexcept override { return d_.size(); }
    std::size_t range_size() const noexcept override { return d_.size(); }
    std::string kind() const override { return "diagonal"; }
    const std::vector<double>& diagonal() const noexcept { return d_; }

protected:
    void apply_kernel(std::span<const double> f, std::span<double> out) const override;
    void adjoint_kernel(std::span<const double> g, std::span<double> out) const override;
    void gram_diagonal_kernel(std::span<const double> w, std::span<double> out) const override;
    void row_square_sum_kernel(std::span<const double> v, std::span<double> out) const override;
    void absolute_apply_kernel(std::span<const double> f, std::span<double> out) const override;
    void absolute_adjoint_kernel(std::span<const double> g, std::span<double> out) const override;

private:
    std::vector<double> d_;
};

/// Explicit M x N matrix, row-major.
class DenseOperator final : public LinearOperator {
public:
    DenseOperator(std::size_t rows, std::size_t cols, std::vector<double> row_major);

    /// Reads a CSV whose first line is "M,N" followed by M rows of N values.
    static DenseOperator from_csv(const std::filesystem::path& path);

    std::size_t domain_size() const noexcept override { return cols_; }
    std::size_t range_size() const noexcept override { return rows_; }
    std::string kind() const override { return "dense"; }

    double operator()(std::size_t i, std::size_t j) const noexcept { return a_[i * cols_ + j]; }
    std::span<const double> data() const noexcept { return a_; }

protected:
    void apply_kernel(std::span<const double> f, std::span<double> out) const override;
    void adjoint_kernel(std::span<const double> g, std::span<double> out) const override;
    void gram_diagonal_kernel(std::span<const double> w, std::span<double> out) const override;
    void row_square_sum_kernel(std::span<const double> v, std::span<double> out) const override;
    void absolute_apply_kernel(std::span<const double> f, std::span<double> out) const override;
    void absolute_adjoint_kernel(std::span<const double> g, std::span<double> out) const override;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> a_;
};

/// Materializes any operator column by column. Test and oracle sizes only.
DenseOperator densify(const LinearOperator& op);

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Sparse matrix held in both row-compressed and column-compressed form so
/// that every query is a gather and parallelizes without write conflicts.
class SparseOperator : public LinearOperator {
public:
    SparseOperator(std::size_t rows, std::size_t cols, std::vector<Triplet> entries);

    std::size_t domain_size() const noexcept override { return cols_; }
    std::size_t range_size() const noexcept override { return rows_; }
    std::string kind() const override { return "sparse"; }
    std::size_t nonzeros() const noexcept { return row_values_.size(); }

    template <class Visit>
    void for_each_in_row(std::size_t i, Visit&& visit) const
    {
        for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
            visit(row_cols_[p], row_values_[p]);
    }

protected:
    void apply_kernel(std::span<const double> f, std::span<double> out) const override;
    void adjoint_kernel(std::span<const double> g, std::span<double> out) const override;
    void gram_diagonal_kernel(std::span<const double> w, std::span<double> out) const override;
    void row_square_sum_kernel(std::span<const double> v, std::span<double> out) const override;
    void absolute_apply_kernel(std::span<const double> f, std::span<double> out) const override;
    void absolute_adjoint_kernel(std::span<const double> g, std::span<double> out) const override;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<std::size_t> row_ptr_;
    std::vector<std::size_t> row_cols_;
    std::vector<double> row_values_;
    std::vector<std::size_t> col_ptr_;
    std::vector<std::size_t> col_rows_;
    std::vector<double> col_values_;
};

/// 2D correlation with a (2 ry + 1) x (2 rx + 1) kernel and zero padding:
/// (H f)(x, y) = sum_{dx, dy} k(dx, dy) f(x + dx, y + dy). Output grid equals
/// the input grid.
class Convolution2D final : public LinearOperator {
public:
    /// kernel is row-major with kernel_ny rows of kernel_nx taps; both odd.
    Convolution2D(GridShape shape, std::size_t kernel_nx, std::size_t kernel_ny, std::vector<double> kernel);

    /// Uniform size x size kernel with taps 1 / size^2.
    static Convolution2D box(GridShape shape, std::size_t size);

    std::size_t domain_size() const noexcept override { return shape_.size(); }
    std::size_t range_size() const noexcept override { return shape_.size(); }
    std::string kind() const override { return "convolution"; }
    const GridShape& shape() const noexcept { return shape_; }

protected:
    void apply_kernel(std::span<const double> f, std::span<double> out) const override;
    void adjoint_kernel(std::span<const double> g, std::span<double> out) const override;
    void gram_diagonal_kernel(std::span<const double> w, std::span<double> out) const override;
    void row_square_sum_kernel(std::span<const double> v, std::span<double> out) const override;
    void absolute_apply_kernel(std::span<const double> f, std::span<double> out) const override;
    void absolute_adjoint_kernel(std::span<const double> g, std::span<double> out) const override;

private:
    template <class Tap>
    void correlate(std::span<const double> in, std::span<double> out, int sign, Tap&& tap) const;

    GridShape shape_;
    int rx_;
    int ry_;
    std::vector<double> kernel_;
};

struct ParallelBeamGeometry {
    std::size_t num_angles = 0;
    std::size_t num_bins = 0;
    double bin_spacing = 1.0;
};

/// 2D parallel-beam projector. Ray (a, b) has direction (cos t_a, sin t_a)
/// with t_a = a * pi / num_angles, and passes at signed distance
/// (b - (num_bins - 1) / 2) * bin_spacing from the grid center. Coefficients
/// are exact ray/pixel intersection lengths for unit pixels (Siddon).
/// Measurement index is a * num_bins + b.
class ParallelBeamProjector final : public SparseOperator {
public:
    ParallelBeamProjector(GridShape shape, ParallelBeamGeometry geometry);

    std::string kind() const override { return "projector"; }
    const ParallelBeamGeometry& geometry() const noexcept { return geometry_; }
    const GridShape& shape() const noexcept { return shape_; }

    /// Intersection lengths of one ray with the pixel grid, sorted by pixel.
    static std::vector<Triplet> trace_ray(const GridShape& shape, double angle, double offset, std::size_t row);

private:
    GridShape shape_;
    ParallelBeamGeometry geometry_;
};

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace gmpvba
