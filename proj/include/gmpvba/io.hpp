#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "gmpvba/grid.hpp"

namespace gmpvba {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Parses comma-separated numeric rows. Blank lines are skipped; a first
/// line containing non-numeric text is treated as a header and dropped.
std::vector<std::vector<double>> read_csv_rows(const std::filesystem::path& path);

/// Values laid out as ny * nz rows of nx columns.
void write_volume_csv(const std::filesystem::path& path, const Volume& volume);
Volume read_volume_csv(const std::filesystem::path& path, const GridShape& shape);

/// Labels written 1-based.
void write_labels_csv(const std::filesystem::path& path, const LabelField& labels);
LabelField read_labels_csv(const std::filesystem::path& path, const GridShape& shape, int num_classes);

void write_vector_csv(const std::filesystem::path& path, const std::string& header, std::span<const double> values);
std::vector<double> read_vector_csv(const std::filesystem::path& path);

/// Binary P5 graymap, values mapped linearly from [lo, hi] to [0, 255].
/// 3D grids are written as their z slices stacked vertically.
void write_pgm(const std::filesystem::path& path, const Volume& volume, double lo, double hi);
void write_pgm(const std::filesystem::path& path, const Volume& volume);
void write_labels_pgm(const std::filesystem::path& path, const LabelField& labels);

/// Reads a P5 or P2 graymap into a volume of gray levels.
Volume read_pgm(const std::filesystem::path& path);

/// Opens for writing or throws with the path in the message.
std::ofstream open_output(const std::filesystem::path& path, bool binary = false);

}  // namespace gmpvba
