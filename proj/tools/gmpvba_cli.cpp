#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "gmpvba/commands.hpp"
#include "gmpvba/config.hpp"
#include "gmpvba/parallel.hpp"

int main(int argc, char** argv)
{
    spdlog::set_default_logger(spdlog::stderr_color_mt("gmpvba"));

    CLI::App app{"Variational Bayesian reconstruction with a Gauss-Markov-Potts prior"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    int threads = 0;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "INI run configuration")->required();
        sub->add_option("--threads", threads, "OpenMP thread count (0 keeps the default)")->check(CLI::NonNegativeNumber);
        sub->add_option("--out", out_dir, "Output directory (overrides output.dir)");
    };
    auto* simulate = app.add_subcommand("simulate-potts", "Draw Potts fields for a list of gamma0 values");
    auto* reconstruct = app.add_subcommand("reconstruct", "Run the full reconstruction pipeline");
    auto* compare = app.add_subcommand("oracle-compare", "Compare a pinned VBA run with exact enumeration");
    for (auto* sub : {simulate, reconstruct, compare})
        add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : gmpvba::kExitError;
    }

    try {
        gmpvba::set_num_threads(threads);
        auto config = gmpvba::load_config(config_path);
        if (!out_dir.empty())
            config.output_dir = out_dir;
        const std::filesystem::path out = config.output_dir;
        std::filesystem::create_directories(out);
        spdlog::info("seed {}, {} thread(s), output {}", config.seed, gmpvba::max_threads(), out.string());
        if (*simulate)
            return gmpvba::cmd_simulate_potts(config, out);
        if (*reconstruct)
            return gmpvba::cmd_reconstruct(config, out);
        return gmpvba::cmd_oracle_compare(config, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return gmpvba::kExitError;
    }
}
