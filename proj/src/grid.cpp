#include "gmpvba/grid.hpp"

#include <algorithm>

namespace gmpvba {

std::string to_string(const GridShape& shape)
{
    std::string s = std::to_string(shape.nx) + "x" + std::to_string(shape.ny);
    if (shape.nz > 1)
        s += "x" + std::to_string(shape.nz);
    return s;
}

Volume::Volume(GridShape s, std::vector<double> v) : shape(s), values(std::move(v))
{
    if (values.size() != shape.size())
        throw DimensionError("volume values for grid " + to_string(shape), shape.size(), values.size());
}

LabelField::LabelField(GridShape s, int k, std::vector<int> l) : shape(s), num_classes(k), labels(std::move(l))
{
    validate();
}

void LabelField::validate() const
{
    if (num_classes < 1)
        throw std::invalid_argument("label field needs at least one class");
    if (labels.size() != shape.size())
        throw DimensionError("labels for grid " + to_string(shape), shape.size(), labels.size());
    auto bad = std::find_if(labels.begin(), labels.end(), [&](int z) { return z < 0 || z >= num_classes; });
    if (bad != labels.end())
        throw std::invalid_argument("label " + std::to_string(*bad + 1) + " outside 1.." + std::to_string(num_classes));
}

std::vector<std::size_t> LabelField::counts() const
{
    std::vector<std::size_t> n(static_cast<std::size_t>(num_classes), 0);
    for (int z : labels)
        ++n[static_cast<std::size_t>(z)];
    return n;
}

DimensionError::DimensionError(const std::string& what, std::size_t expected, std::size_t actual)
    : std::invalid_argument("dimension mismatch for " + what + ": expected " + std::to_string(expected) + ", got " +
                            std::to_string(actual))
{
}

}  // namespace gmpvba
