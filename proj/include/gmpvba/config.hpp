#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gmpvba/grid.hpp"
#include "gmpvba/linops.hpp"
#include "gmpvba/model.hpp"

namespace gmpvba {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct OperatorSpec {
    std::string kind = "identity";  ///< identity, diagonal, dense, convolution, projector
    std::size_t kernel_size = 5;    ///< convolution: normalized box kernel width
    std::vector<double> diagonal;   ///< diagonal: one entry per voxel, or one shared value
    std::filesystem::path matrix;   ///< dense: CSV with an "M,N" header line
    std::size_t angles = 0;         ///< projector
    std::size_t bins = 0;
    double bin_spacing = 1.0;
};

/// Measured data instead of a simulated phantom.
struct DataSpec {
    std::filesystem::path measurements;
    std::filesystem::path initial_volume;  ///< optional; fallback H^T g otherwise
    std::filesystem::path true_labels;     ///< optional; enables the accuracy summary
};

struct PottsSimulationSpec {
    std::vector<double> gamma0_list{0.5, 0.7, 0.8, 1.6};
    int sweeps = 200;
    int num_classes = 2;
};

struct OracleSpec {
    double pinned_shape = 1e6;
    double pinned_v0 = 1e-8;
    int label_sweeps = 50;    ///< Gibbs sweeps used to draw the true labels
    int gibbs_samples = 0;    ///< 0 skips the sampler comparison
    int gibbs_burn_in = 500;
};

/// Everything a run depends on. The echo written into every run directory
/// parses back to the same value.
struct RunConfig {
    std::uint64_t seed = 0;
    GridShape grid{16, 16, 1};
    int num_classes = 2;
    double snr_db = 30.0;
    bool noiseless = false;
    double gamma0 = 1.0;
    double tol = 1e-6;
    int max_iter = 200;
    std::string init = "kmeans";  ///< kmeans or otsu
    int kmeans_max_iter = 100;
    std::string volume_step = "damped";  ///< damped or jacobi

    OperatorSpec op;
    std::optional<PhantomSpec> phantom;
    std::optional<DataSpec> data;
    PottsSimulationSpec potts;
    OracleSpec oracle;

    std::filesystem::path output_dir = "out";
    bool write_timings = false;
};

/// Parses an INI file. Throws ConfigError naming the file when it is
/// missing and naming the key when a value is invalid. `seed` is required.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text);

/// INI text holding every field of the config with its effective value.
std::string to_ini(const RunConfig& config);

/// Throws ConfigError unless the referenced files exist and the sizes agree.
void validate(const RunConfig& config);

std::unique_ptr<LinearOperator> build_operator(const OperatorSpec& spec, const GridShape& grid);

}  // namespace gmpvba
