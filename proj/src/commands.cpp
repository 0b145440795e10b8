#include "gmpvba/commands.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "gmpvba/io.hpp"
#include "gmpvba/potts.hpp"

namespace gmpvba {

namespace fs = std::filesystem;

namespace {

std::string gamma_tag(double gamma0)
{
    std::string s = format_double(gamma0);
    for (char& c : s)
        if (c == '.')
            c = 'p';
    return s;
}

void write_volume_artifacts(const fs::path& out_dir, const std::string& stem, const Volume& v)
{
    write_volume_csv(out_dir / (stem + ".csv"), v);
    write_pgm(out_dir / (stem + ".pgm"), v);
}

void write_label_artifacts(const fs::path& out_dir, const std::string& stem, const LabelField& z)
{
    write_labels_csv(out_dir / (stem + ".csv"), z);
    write_labels_pgm(out_dir / (stem + ".pgm"), z);
}

void write_trace(const fs::path& path, const FreeEnergyTrace& trace, bool timings)
{
    auto out = open_output(path);
    out << "iteration,entropy,expected_log_joint,free_energy";
    if (timings)
        out << ",wall_ms_volume,wall_ms_labels,wall_ms_auxiliaries,wall_ms_noise_precisions,"
               "wall_ms_class_means,wall_ms_class_precisions,wall_ms_free_energy";
    out << '\n';
    out << 0 << ',' << format_double(trace.initial_entropy) << ',' << format_double(trace.initial_expected_log_joint)
        << ',' << format_double(trace.initial_free_energy);
    if (timings)
        out << ",0,0,0,0,0,0,0";
    out << '\n';
    for (const auto& r : trace.records) {
        out << r.iteration << ',' << format_double(r.entropy) << ',' << format_double(r.expected_log_joint) << ','
            << format_double(r.free_energy);
        if (timings) {
            const auto& t = r.wall_ms;
            for (double v : {t.volume, t.labels, t.auxiliaries, t.noise_precisions, t.class_means, t.class_precisions,
                             t.free_energy})
                out << ',' << format_double(v);
        }
        out << '\n';
    }
}

void write_key_values(const fs::path& path, const std::vector<std::pair<std::string, std::string>>& rows)
{
    auto out = open_output(path);
    out << "key,value\n";
    for (const auto& [k, v] : rows)
        out << k << ',' << v << '\n';
}

std::shared_ptr<const LinearOperator> make_operator(const RunConfig& config)
{
    return std::shared_ptr<const LinearOperator>(build_operator(config.op, config.grid));
}

}  // namespace

void write_config_echo(const RunConfig& config, const fs::path& out_dir)
{
    auto out = open_output(out_dir / "config.ini");
    out << to_ini(config);
}

double label_accuracy(const LabelField& a, const LabelField& b)
{
    if (a.size() != b.size() || a.size() == 0)
        throw DimensionError("label fields", a.size(), b.size());
    std::size_t same = 0;
    for (std::size_t j = 0; j < a.size(); ++j)
        same += a[j] == b[j];
    return static_cast<double>(same) / static_cast<double>(a.size());
}

int cmd_simulate_potts(const RunConfig& config, const fs::path& out_dir)
{
    validate(config);
    write_config_echo(config, out_dir);
    auto table = open_output(out_dir / "compactness.csv");
    table << "gamma0,like_neighbor_fraction\n";
    for (double gamma0 : config.potts.gamma0_list) {
        const auto params = PottsParams::uniform(config.potts.num_classes, gamma0);
        const auto z = sample_potts(config.grid, params, config.potts.sweeps, config.seed);
        const double fraction = like_neighbor_fraction(z);
        spdlog::info("gamma0 = {}: like-neighbor fraction {:.4f}", gamma0, fraction);
        write_label_artifacts(out_dir, "potts_gamma_" + gamma_tag(gamma0), z);
        table << format_double(gamma0) << ',' << format_double(fraction) << '\n';
    }
    return kExitConverged;
}

ReconstructionRun run_reconstruction(const RunConfig& config)
{
    validate(config);
    if (config.phantom.has_value() == config.data.has_value())
        throw ConfigError("reconstruct needs exactly one of a [phantom] or a [data] section");
    const auto op = make_operator(config);
    ReconstructionRun run;

    if (config.phantom) {
        auto phantom = generate_phantom(*config.phantom, config.seed);
        auto data = simulate_data(*op, phantom.f, config.noiseless ? kNoiseless : config.snr_db, config.seed + 1);
        run.g = std::move(data.g);
        run.rho_zeta_true = std::move(data.rho_zeta);
        run.truth = std::move(phantom);
    } else {
        run.g = read_vector_csv(config.data->measurements);
        require_size(run.g, op->range_size(), "measurements file");
        if (!config.data->true_labels.empty())
            run.truth = Phantom{Volume(config.grid),
                                read_labels_csv(config.data->true_labels, config.grid, config.num_classes), 0};
    }

    if (config.data && !config.data->initial_volume.empty()) {
        const auto& path = config.data->initial_volume;
        run.f0 = path.extension() == ".pgm" ? read_pgm(path) : read_volume_csv(path, config.grid);
        if (run.f0.shape != config.grid)
            throw DimensionError("initial volume", config.grid.size(), run.f0.size());
    } else {
        run.f0 = fallback_initial_volume(*op, run.g, config.grid);
    }

    run.init = config.init == "otsu" ? otsu_segment(run.f0)
                                     : kmeans_segment(run.f0, config.num_classes, config.kmeans_max_iter);
    run.hyper = fix_hyperparameters(run.f0, run.init.z0, config.num_classes, config.snr_db, config.gamma0);
    auto state = initialize_state(run.f0, run.init, *op, run.hyper, run.g);

    IterateOptions options;
    options.tol = config.tol;
    options.max_iter = config.max_iter;
    options.volume_step = config.volume_step == "jacobi" ? VolumeStep::Jacobi : VolumeStep::Damped;
    run.result = iterate(std::move(state), *op, run.g, run.hyper, options);
    run.estimates = extract_estimates(run.result.state);
    spdlog::info("reconstruct: {} after {} iterations, F = {}", run.result.converged ? "converged" : "stopped",
                 run.result.trace.records.size(),
                 run.result.trace.records.empty() ? run.result.trace.initial_free_energy
                                                  : run.result.trace.records.back().free_energy);
    return run;
}

int cmd_reconstruct(const RunConfig& config, const fs::path& out_dir)
{
    validate(config);
    write_config_echo(config, out_dir);
    ReconstructionRun run;
    try {
        run = run_reconstruction(config);
    } catch (const NonFiniteFreeEnergy& e) {
        auto out = open_output(out_dir / "diagnostic.txt");
        out << e.what() << '\n' << e.diagnostic();
        std::cerr << e.what() << '\n' << e.diagnostic();
        return kExitError;
    }

    if (run.truth && config.phantom) {
        write_volume_artifacts(out_dir, "f_true", run.truth->f);
        write_vector_csv(out_dir / "rho_zeta_true.csv", "rho_zeta", run.rho_zeta_true);
    }
    if (run.truth)
        write_label_artifacts(out_dir, "z_true", run.truth->z);
    write_vector_csv(out_dir / "g.csv", "g", run.g);
    write_volume_artifacts(out_dir, "f0", run.f0);
    write_label_artifacts(out_dir, "z0", run.init.z0);
    {
        auto out = open_output(out_dir / "init_classes.csv");
        out << "class,mean,variance,count\n";
        for (std::size_t k = 0; k < run.init.means.size(); ++k)
            out << k + 1 << ',' << format_double(run.init.means[k]) << ',' << format_double(run.init.variances[k])
                << ',' << run.init.counts[k] << '\n';
    }

    const auto& est = run.estimates;
    write_volume_artifacts(out_dir, "f_hat", est.f_hat);
    write_volume_artifacts(out_dir, "uncertainty", est.uncertainty);
    write_volume_artifacts(out_dir, "confidence", est.confidence);
    write_label_artifacts(out_dir, "z_hat", est.z_hat);
    write_vector_csv(out_dir / "rho_zeta_hat.csv", "rho_zeta_hat", est.rho_zeta_hat);
    {
        auto out = open_output(out_dir / "classes.csv");
        out << "class,m_hat,rho_hat,expected_count\n";
        for (std::size_t k = 0; k < est.m_hat.size(); ++k)
            out << k + 1 << ',' << format_double(est.m_hat[k]) << ',' << format_double(est.rho_hat[k]) << ','
                << format_double(est.expected_counts[k]) << '\n';
    }
    write_trace(out_dir / "trace.csv", run.result.trace, config.write_timings);

    const auto& trace = run.result.trace;
    std::vector<std::pair<std::string, std::string>> summary{
        {"seed", std::to_string(config.seed)},
        {"converged", run.result.converged ? "true" : "false"},
        {"iterations", std::to_string(trace.records.size())},
        {"initial_free_energy", format_double(trace.initial_free_energy)},
        {"final_free_energy",
         format_double(trace.records.empty() ? trace.initial_free_energy : trace.records.back().free_energy)},
        {"free_energy_decreases", std::to_string(trace.decreases(1e-6).size())},
    };
    if (run.truth)
        summary.emplace_back("label_accuracy", format_double(label_accuracy(est.z_hat, run.truth->z)));
    write_key_values(out_dir / "summary.csv", summary);
    return run.result.converged ? kExitConverged : kExitMaxIter;
}

int cmd_oracle_compare(const RunConfig& config, const fs::path& out_dir)
{
    validate(config);
    if (!config.phantom)
        throw ConfigError("oracle-compare needs a [phantom] section for the class means and variance");
    const auto& spec = *config.phantom;
    for (double v : spec.variances)
        if (v != spec.variances.front() || !(v > 0.0))
            throw ConfigError("oracle-compare needs one positive class variance shared by all classes");
    write_config_echo(config, out_dir);

    const auto op = make_operator(config);
    auto instance = simulate_pinned_instance(op, config.grid, spec.means, spec.variances.front(), config.gamma0,
                                             config.snr_db, config.oracle.label_sweeps, config.seed);
    const auto& pm = instance.model;
    const auto exact = exact_posterior(pm);
    const auto hyper = pinned_hyperparameters(pm, config.oracle.pinned_shape, config.oracle.pinned_v0);
    IterateOptions options;
    options.tol = config.tol;
    options.max_iter = config.max_iter;
    options.volume_step = config.volume_step == "jacobi" ? VolumeStep::Jacobi : VolumeStep::Damped;
    const auto result = iterate(pinned_initial_state(pm, hyper), *pm.op, pm.g, hyper, options);
    const auto cmp = compare_with_exact(result.state, exact);

    std::optional<GibbsEstimate> gibbs;
    if (config.oracle.gibbs_samples > 0)
        gibbs = gibbs_reference(pm, config.oracle.gibbs_samples, config.oracle.gibbs_burn_in, config.seed + 2);

    write_label_artifacts(out_dir, "z_true", instance.z_true);
    write_volume_csv(out_dir / "f_true.csv", instance.f_true);
    write_vector_csv(out_dir / "g.csv", "g", pm.g);

    const std::size_t n = pm.shape.size();
    const auto K = static_cast<std::size_t>(pm.num_classes());
    {
        auto out = open_output(out_dir / "oracle_compare.csv");
        out << "voxel,pm_exact,pm_vba,abs_diff_pm";
        for (std::size_t k = 0; k < K; ++k)
            out << ",marginal_exact_" << k + 1 << ",marginal_vba_" << k + 1;
        out << ",max_abs_diff_marginal";
        if (gibbs) {
            out << ",pm_gibbs,pm_gibbs_se";
            for (std::size_t k = 0; k < K; ++k)
                out << ",marginal_gibbs_" << k + 1 << ",marginal_gibbs_se_" << k + 1;
        }
        out << '\n';
        for (std::size_t j = 0; j < n; ++j) {
            double pm_vba = 0.0;
            for (std::size_t k = 0; k < K; ++k)
                pm_vba += result.state.qz[j * K + k] * result.state.m_tilde[j * K + k];
            out << j << ',' << format_double(exact.mean[j]) << ',' << format_double(pm_vba) << ','
                << format_double(cmp.mean_abs_diff[j]);
            for (std::size_t k = 0; k < K; ++k)
                out << ',' << format_double(exact.marginals[j * K + k]) << ','
                    << format_double(result.state.qz[j * K + k]);
            out << ',' << format_double(cmp.marginal_abs_diff[j]);
            if (gibbs) {
                out << ',' << format_double(gibbs->mean[j]) << ',' << format_double(gibbs->mean_se[j]);
                for (std::size_t k = 0; k < K; ++k)
                    out << ',' << format_double(gibbs->marginals[j * K + k]) << ','
                        << format_double(gibbs->marginal_se[j * K + k]);
            }
            out << '\n';
        }
    }
    write_key_values(out_dir / "oracle_summary.csv",
                     {{"seed", std::to_string(config.seed)},
                      {"configurations", std::to_string(exact.configurations)},
                      {"total_probability", format_double(exact.total_probability)},
                      {"converged", result.converged ? "true" : "false"},
                      {"iterations", std::to_string(result.trace.records.size())},
                      {"max_abs_diff_pm", format_double(cmp.max_mean_diff)},
                      {"mean_abs_diff_pm", format_double(cmp.mean_mean_diff)},
                      {"max_abs_diff_marginal", format_double(cmp.max_marginal_diff)},
                      {"mean_abs_diff_marginal", format_double(cmp.mean_marginal_diff)}});
    spdlog::info("oracle-compare: max |dPM| = {:.3g}, max |dmarginal| = {:.3g}", cmp.max_mean_diff,
                 cmp.max_marginal_diff);
    return result.converged ? kExitConverged : kExitMaxIter;
}

}  // namespace gmpvba
