#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "gmpvba/config.hpp"
#include "gmpvba/io.hpp"
#include "helpers.hpp"

using namespace gmpvba;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, const fs::path& log)
{
    const std::string cmd = std::string(GMPVBA_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text(const fs::path& p, const std::string& text)
{
    std::ofstream out(p);
    out << text;
}

std::map<std::string, std::string> key_values(const fs::path& p)
{
    std::map<std::string, std::string> kv;
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        kv[line.substr(0, comma)] = line.substr(comma + 1);
    }
    return kv;
}

const char* kSmallReconstruction = R"([run]
seed = 3
classes = 2
snr_db = 25
gamma0 = 1.0
max_iter = 200

[grid]
nx = 16
ny = 16

[operator]
kind = convolution
kernel_size = 3

[phantom]
means = 1,3
variances = 0.001,0.001
shapes = disk 2 8 8 5
)";

}  // namespace

TEST_CASE("reconstruct writes every artifact and reruns byte-identically")
{
    const auto dir = testing::scratch_dir("cli_reconstruct");
    write_text(dir / "run.ini", kSmallReconstruction);
    const auto a = dir / "a", b = dir / "b";
    CHECK(run_cli("reconstruct --config " + (dir / "run.ini").string() + " --out " + a.string(), dir / "a.log") == 0);
    CHECK(run_cli("reconstruct --config " + (dir / "run.ini").string() + " --out " + b.string() + " --threads 3",
                  dir / "b.log") == 0);
    for (const char* name : {"config.ini", "f_true.csv", "z_true.csv", "g.csv", "f0.csv", "f_hat.csv", "z_hat.csv",
                             "uncertainty.csv", "confidence.csv", "rho_zeta_hat.csv", "classes.csv", "trace.csv",
                             "summary.csv", "f_hat.pgm", "z_hat.pgm"}) {
        CAPTURE(name);
        CHECK(fs::exists(a / name));
    }
    std::size_t csvs = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
        if (entry.path().extension() != ".csv" && entry.path().extension() != ".pgm")
            continue;
        CAPTURE(entry.path().filename().string());
        CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));
        ++csvs;
    }
    CHECK(csvs > 10);

    const auto echo = load_config(a / "config.ini");
    CHECK(echo.seed == 3);
    CHECK(echo.output_dir == a);
    CHECK(to_ini(parse_config(to_ini(echo))) == to_ini(echo));
}

TEST_CASE("reconstruct reports max_iter with exit code 2")
{
    const auto dir = testing::scratch_dir("cli_max_iter");
    std::string text = kSmallReconstruction;
    text.replace(text.find("max_iter = 200"), 14, "max_iter = 2");
    write_text(dir / "run.ini", text);
    CHECK(run_cli("reconstruct --config " + (dir / "run.ini").string() + " --out " + (dir / "o").string(),
                  dir / "log") == 2);
    CHECK(key_values(dir / "o" / "summary.csv").count("converged"));
}

TEST_CASE("missing files produce a clean error naming the path")
{
    const auto dir = testing::scratch_dir("cli_missing");
    const auto missing = dir / "nope.ini";
    CHECK(run_cli("reconstruct --config " + missing.string(), dir / "log") == 1);
    const auto log = slurp(dir / "log");
    CHECK(log.find("file not found") != std::string::npos);
    CHECK(log.find(missing.string()) != std::string::npos);

    write_text(dir / "data.ini", "[run]\nseed = 1\n[grid]\nnx = 4\nny = 4\n[data]\nmeasurements = " +
                                     (dir / "g_missing.csv").string() + "\n");
    CHECK(run_cli("reconstruct --config " + (dir / "data.ini").string() + " --out " + (dir / "o").string(),
                  dir / "log2") == 1);
    CHECK(slurp(dir / "log2").find("g_missing.csv") != std::string::npos);

    CHECK(run_cli("reconstruct", dir / "log3") == 1);
    CHECK(run_cli("frobnicate --config x", dir / "log4") == 1);
}

TEST_CASE("invalid config values name the key")
{
    const auto dir = testing::scratch_dir("cli_bad_key");
    write_text(dir / "bad.ini", "[run]\nseed = 1\nvolume_step = sideways\n");
    CHECK(run_cli("reconstruct --config " + (dir / "bad.ini").string(), dir / "log") == 1);
    CHECK(slurp(dir / "log").find("run.volume_step") != std::string::npos);
    CHECK_THROWS_AS(parse_config("[run]\nseed = 1\ngamma0 = abc\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[run]\nclasses = 2\n"), ConfigError);
    CHECK(parse_config("[run]\nseed = 1\nvolume_step = jacobi\n").volume_step == "jacobi");
    auto c = parse_config("[run]\nseed = 1\ngamma0 = -1\n");
    CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("config echo round trips every field")
{
    const auto c = parse_config(std::string(kSmallReconstruction) +
                                "[potts]\ngamma0_list = 0.25,1.5\nsweeps = 7\n[oracle]\ngibbs_samples = 2000\n"
                                "[output]\ndir = somewhere\ntimings = true\n");
    const auto text = to_ini(c);
    const auto back = parse_config(text);
    CHECK(to_ini(back) == text);
    CHECK(back.potts.gamma0_list == std::vector<double>{0.25, 1.5});
    CHECK(back.oracle.gibbs_samples == 2000);
    CHECK(back.write_timings);
    CHECK(back.phantom->shapes.size() == 1);
    CHECK(back.phantom->means == std::vector<double>{1.0, 3.0});
}

TEST_CASE("simulate-potts writes one field per gamma0 and a compactness table")
{
    const auto dir = testing::scratch_dir("cli_potts");
    write_text(dir / "p.ini", "[run]\nseed = 5\n[grid]\nnx = 128\nny = 128\n");
    CHECK(run_cli("simulate-potts --config " + (dir / "p.ini").string() + " --out " + (dir / "a").string(),
                  dir / "log") == 0);
    std::size_t pgms = 0;
    for (const auto& entry : fs::directory_iterator(dir / "a"))
        pgms += entry.path().extension() == ".pgm";
    CHECK(pgms == 4);
    const auto rows = read_csv_rows(dir / "a" / "compactness.csv");
    REQUIRE(rows.size() == 4);
    for (std::size_t i = 1; i < rows.size(); ++i)
        CHECK(rows[i][1] > rows[i - 1][1]);
    CHECK(run_cli("simulate-potts --config " + (dir / "p.ini").string() + " --out " + (dir / "b").string(),
                  dir / "log") == 0);
    CHECK(slurp(dir / "a" / "compactness.csv") == slurp(dir / "b" / "compactness.csv"));

    write_text(dir / "bad.ini", "[run]\nseed = 5\n[potts]\ngamma0_list = 0.5,-1\n");
    CHECK(run_cli("simulate-potts --config " + (dir / "bad.ini").string() + " --out " + (dir / "c").string(),
                  dir / "log") == 1);
}

TEST_CASE("oracle-compare on small instances")
{
    const auto dir = testing::scratch_dir("cli_oracle");
    const auto config = [](int classes, const std::string& phantom) {
        return "[run]\nseed = 4\nclasses = " + std::to_string(classes) +
               "\nsnr_db = 20\ngamma0 = 0.5\ntol = 1e-10\nmax_iter = 500\n"
               "[grid]\nnx = 3\nny = 3\n[operator]\nkind = identity\n[phantom]\n" +
               phantom;
    };
    write_text(dir / "k2.ini", config(2, "means = 1,2\nvariances = 0.05,0.05\n"));
    CHECK(run_cli("oracle-compare --config " + (dir / "k2.ini").string() + " --out " + (dir / "k2").string(),
                  dir / "log") == 0);
    auto kv = key_values(dir / "k2" / "oracle_summary.csv");
    CHECK(kv["configurations"] == "512");
    CHECK(std::stod(kv["max_abs_diff_marginal"]) < 0.05);

    write_text(dir / "k1.ini", config(1, "means = 1\nvariances = 0.05\n[oracle]\npinned_shape = 1e14\npinned_v0 = 1e-16\n"));
    CHECK(run_cli("oracle-compare --config " + (dir / "k1.ini").string() + " --out " + (dir / "k1").string(),
                  dir / "log") == 0);
    kv = key_values(dir / "k1" / "oracle_summary.csv");
    CHECK(std::stod(kv["max_abs_diff_pm"]) < 1e-8);
    CHECK(run_cli("oracle-compare --config " + (dir / "k1.ini").string() + " --out " + (dir / "k1b").string(),
                  dir / "log") == 0);
    CHECK(slurp(dir / "k1" / "oracle_compare.csv") == slurp(dir / "k1b" / "oracle_compare.csv"));

    write_text(dir / "big.ini", "[run]\nseed = 1\n[grid]\nnx = 5\nny = 5\n[phantom]\nmeans = 1,2\n"
                                "variances = 0.05,0.05\n");
    CHECK(run_cli("oracle-compare --config " + (dir / "big.ini").string() + " --out " + (dir / "big").string(),
                  dir / "log") == 1);
}
