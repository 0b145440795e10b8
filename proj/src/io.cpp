#include "gmpvba/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gmpvba {

namespace {

std::ifstream open_input(const std::filesystem::path& path, bool binary = false)
{
    if (!std::filesystem::exists(path))
        throw std::runtime_error("file not found: " + path.string());
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in)
        throw std::runtime_error("cannot open " + path.string());
    return in;
}

bool parse_double(std::string_view text, double& out)
{
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t'))
        text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
        text.remove_suffix(1);
    if (text.empty())
        return false;
    if (text.front() == '+')
        text.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size();
}

void write_grid_rows(std::ostream& out, const GridShape& shape, auto&& value)
{
    for (std::size_t z = 0; z < shape.nz; ++z) {
        for (std::size_t y = 0; y < shape.ny; ++y) {
            for (std::size_t x = 0; x < shape.nx; ++x) {
                if (x > 0)
                    out << ',';
                out << value(shape.index(x, y, z));
            }
            out << '\n';
        }
    }
}

std::vector<double> flatten(const std::vector<std::vector<double>>& rows)
{
    std::vector<double> v;
    for (const auto& r : rows)
        v.insert(v.end(), r.begin(), r.end());
    return v;
}

}  // namespace

std::string format_double(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc())
        throw std::runtime_error("format_double failed");
    return std::string(buf, ptr);
}

std::ofstream open_output(const std::filesystem::path& path, bool binary)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    return out;
}

std::vector<std::vector<double>> read_csv_rows(const std::filesystem::path& path)
{
    auto in = open_input(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        std::vector<double> row;
        bool numeric = true;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            const std::string_view cell(line.data() + start,
                                        (comma == std::string::npos ? line.size() : comma) - start);
            double v = 0.0;
            if (!parse_double(cell, v)) {
                numeric = false;
                break;
            }
            row.push_back(v);
            if (comma == std::string::npos)
                break;
            start = comma + 1;
        }
        if (!numeric) {
            if (rows.empty() && line_no == 1)
                continue;
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": non-numeric value");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_volume_csv(const std::filesystem::path& path, const Volume& volume)
{
    auto out = open_output(path);
    write_grid_rows(out, volume.shape, [&](std::size_t j) { return format_double(volume[j]); });
}

Volume read_volume_csv(const std::filesystem::path& path, const GridShape& shape)
{
    auto values = flatten(read_csv_rows(path));
    if (values.size() != shape.size())
        throw DimensionError(path.string() + " for grid " + to_string(shape), shape.size(), values.size());
    return Volume(shape, std::move(values));
}

void write_labels_csv(const std::filesystem::path& path, const LabelField& labels)
{
    auto out = open_output(path);
    write_grid_rows(out, labels.shape, [&](std::size_t j) { return labels[j] + 1; });
}

LabelField read_labels_csv(const std::filesystem::path& path, const GridShape& shape, int num_classes)
{
    const auto values = flatten(read_csv_rows(path));
    if (values.size() != shape.size())
        throw DimensionError(path.string() + " for grid " + to_string(shape), shape.size(), values.size());
    std::vector<int> labels(values.size());
    for (std::size_t j = 0; j < values.size(); ++j)
        labels[j] = static_cast<int>(values[j]) - 1;
    return LabelField(shape, num_classes, std::move(labels));
}

void write_vector_csv(const std::filesystem::path& path, const std::string& header, std::span<const double> values)
{
    auto out = open_output(path);
    if (!header.empty())
        out << header << '\n';
    for (double v : values)
        out << format_double(v) << '\n';
}

std::vector<double> read_vector_csv(const std::filesystem::path& path)
{
    return flatten(read_csv_rows(path));
}

void write_pgm(const std::filesystem::path& path, const Volume& volume, double lo, double hi)
{
    const auto& s = volume.shape;
    auto out = open_output(path, true);
    out << "P5\n" << s.nx << ' ' << s.ny * s.nz << "\n255\n";
    const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    std::vector<unsigned char> bytes(volume.size());
    for (std::size_t j = 0; j < volume.size(); ++j) {
        const double level = std::round((volume[j] - lo) * scale);
        bytes[j] = static_cast<unsigned char>(std::clamp(level, 0.0, 255.0));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_pgm(const std::filesystem::path& path, const Volume& volume)
{
    const auto [lo, hi] = std::minmax_element(volume.values.begin(), volume.values.end());
    write_pgm(path, volume, volume.size() ? *lo : 0.0, volume.size() ? *hi : 1.0);
}

void write_labels_pgm(const std::filesystem::path& path, const LabelField& labels)
{
    Volume v(labels.shape);
    for (std::size_t j = 0; j < labels.size(); ++j)
        v[j] = labels[j];
    write_pgm(path, v, 0.0, std::max(1, labels.num_classes - 1));
}

Volume read_pgm(const std::filesystem::path& path)
{
    auto in = open_input(path, true);
    auto next_token = [&]() {
        std::string token;
        char c = 0;
        while (in.get(c)) {
            if (c == '#') {
                std::string comment;
                std::getline(in, comment);
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!token.empty())
                    break;
                continue;
            }
            token.push_back(c);
        }
        return token;
    };
    const std::string magic = next_token();
    if (magic != "P5" && magic != "P2")
        throw std::runtime_error(path.string() + ": not a PGM file");
    const std::size_t nx = std::stoul(next_token());
    const std::size_t ny = std::stoul(next_token());
    const unsigned long maxval = std::stoul(next_token());
    if (maxval == 0 || maxval > 255)
        throw std::runtime_error(path.string() + ": only 8-bit PGM is supported");
    Volume v(GridShape{nx, ny, 1});
    if (magic == "P5") {
        std::vector<unsigned char> bytes(nx * ny);
        in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (static_cast<std::size_t>(in.gcount()) != bytes.size())
            throw std::runtime_error(path.string() + ": truncated pixel data");
        std::copy(bytes.begin(), bytes.end(), v.values.begin());
    } else {
        for (auto& value : v.values)
            value = std::stod(next_token());
    }
    return v;
}

}  // namespace gmpvba
