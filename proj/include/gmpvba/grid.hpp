#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gmpvba {

/// Regular voxel grid. Voxel (x, y, z) is stored at x + nx * (y + ny * z).
struct GridShape {
    std::size_t nx = 0;
    std::size_t ny = 1;
    std::size_t nz = 1;

    std::size_t size() const noexcept { return nx * ny * nz; }
    int dims() const noexcept { return nz > 1 ? 3 : 2; }
    std::size_t index(std::size_t x, std::size_t y, std::size_t z = 0) const noexcept
    {
        return x + nx * (y + ny * z);
    }
    bool operator==(const GridShape&) const = default;
};

std::string to_string(const GridShape& shape);

struct Volume {
    GridShape shape;
    std::vector<double> values;

    Volume() = default;
    explicit Volume(GridShape s, double fill = 0.0) : shape(s), values(s.size(), fill) {}
    Volume(GridShape s, std::vector<double> v);

    std::size_t size() const noexcept { return values.size(); }
    double& operator[](std::size_t j) { return values[j]; }
    double operator[](std::size_t j) const { return values[j]; }
};

/// Class indices are zero-based in memory (0..K-1); files use 1..K.
struct LabelField {
    GridShape shape;
    int num_classes = 1;
    std::vector<int> labels;

    LabelField() = default;
    LabelField(GridShape s, int k, int fill = 0) : shape(s), num_classes(k), labels(s.size(), fill) {}
    LabelField(GridShape s, int k, std::vector<int> l);

    std::size_t size() const noexcept { return labels.size(); }
    int& operator[](std::size_t j) { return labels[j]; }
    int operator[](std::size_t j) const { return labels[j]; }

    /// Throws if any label is outside [0, num_classes) or sizes disagree.
    void validate() const;
    std::vector<std::size_t> counts() const;
};

using MeasurementVector = std::vector<double>;

class DimensionError : public std::invalid_argument {
public:
    DimensionError(const std::string& what, std::size_t expected, std::size_t actual);
};

inline void require_size(std::span<const double> v, std::size_t expected, const char* what)
{
    if (v.size() != expected)
        throw DimensionError(what, expected, v.size());
}

}  // namespace gmpvba
