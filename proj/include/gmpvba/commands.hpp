#pragma once

#include <filesystem>
#include <optional>

#include "gmpvba/config.hpp"
#include "gmpvba/initseg.hpp"
#include "gmpvba/model.hpp"
#include "gmpvba/oracle.hpp"
#include "gmpvba/vba.hpp"

namespace gmpvba {

enum ExitCode : int {
    kExitConverged = 0,
    kExitError = 1,
    kExitMaxIter = 2,
};

/// Writes one PGM and one label CSV per gamma0 of the list plus
/// compactness.csv (gamma0, like-neighbor fraction). Returns 0.
int cmd_simulate_potts(const RunConfig& config, const std::filesystem::path& out_dir);

/// Everything produced by one reconstruction.
struct ReconstructionRun {
    std::optional<Phantom> truth;
    MeasurementVector g;
    std::vector<double> rho_zeta_true;  ///< empty unless simulated
    Volume f0;
    InitialClasses init;
    Hyperparameters hyper;
    IterateResult result;
    Estimates estimates;
};

/// Phantom or loaded data, simulation, initialization, iteration and
/// estimates, without touching the file system beyond the inputs.
ReconstructionRun run_reconstruction(const RunConfig& config);

/// run_reconstruction plus every artifact under out_dir. Returns 0 when
/// converged and 2 when max_iter was reached. A non-finite free energy
/// writes diagnostic.txt and returns 1.
int cmd_reconstruct(const RunConfig& config, const std::filesystem::path& out_dir);

/// Pinned VBA run against exact enumeration (and the Gibbs sampler when
/// oracle.gibbs_samples > 0) on an instance drawn from the config. Writes
/// oracle_compare.csv and oracle_summary.csv. Returns 0 or 2 as above.
int cmd_oracle_compare(const RunConfig& config, const std::filesystem::path& out_dir);

/// config.ini holding the effective configuration.
void write_config_echo(const RunConfig& config, const std::filesystem::path& out_dir);

/// Fraction of voxels where the two label fields agree.
double label_accuracy(const LabelField& a, const LabelField& b);

}  // namespace gmpvba
