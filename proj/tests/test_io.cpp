#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "topograd/io.hpp"

using namespace topograd;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    fs::path d = fs::temp_directory_path() / "topograd_io_test";
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(TOPOGRAD_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("pgm encoding of uniform fields") {
    fs::path p = temp_dir() / "u.pgm";
    write_pgm(Tensor::full({4, 4}, 0.3), p.string());
    std::string bytes = slurp(p);
    std::string header = "P5\n4 4\n255\n";
    REQUIRE(bytes.substr(0, header.size()) == header);
    for (size_t i = header.size(); i < bytes.size(); ++i)
        CHECK(static_cast<unsigned char>(bytes[i]) == 179);

    write_pgm(Tensor::full({4, 4}, 1.0), p.string());
    bytes = slurp(p);
    for (size_t i = header.size(); i < bytes.size(); ++i)
        CHECK(static_cast<unsigned char>(bytes[i]) == 0);
}

TEST_CASE("pgm header and payload size for a 48x24 field") {
    fs::path p = temp_dir() / "s.pgm";
    write_pgm(Tensor::full({24, 48}, 0.5), p.string());
    std::string bytes = slurp(p);
    std::string header = "P5\n48 24\n255\n";
    CHECK(bytes.substr(0, header.size()) == header);
    CHECK(bytes.size() == header.size() + 48 * 24);
}

TEST_CASE("pgm round-trips its quantized densities") {
    Rng rng(101);
    Tensor x = Tensor::zeros({6, 9});
    for (double& v : x.data) v = rng.uniform(0.0, 1.0);
    fs::path p1 = temp_dir() / "r1.pgm";
    fs::path p2 = temp_dir() / "r2.pgm";
    write_pgm(x, p1.string());
    Tensor back = read_pgm(p1.string());
    write_pgm(back, p2.string());
    CHECK(slurp(p1) == slurp(p2));

    CHECK_THROWS_AS(write_pgm(x, "/nonexistent-dir/x.pgm"), std::runtime_error);
}

TEST_CASE("csv layout and precision") {
    RunHistory hist;
    for (int i = 1; i <= 100; ++i)
        hist.records.push_back({i, 0.123456789012 * i, 0.3, 0.001 * i});
    fs::path p = temp_dir() / "h.csv";
    write_csv(hist, p.string());

    std::ifstream f(p);
    std::string line;
    int lines = 0;
    std::getline(f, line);
    CHECK(line == "iter,objective,volfrac,seconds");
    ++lines;
    std::string first;
    while (std::getline(f, line)) {
        if (lines == 1) first = line;
        ++lines;
    }
    CHECK(lines == 101);
    CHECK(first.substr(0, 2) == "1,");
    CHECK(first.find("0.123456789") != std::string::npos);  // >= 9 significant digits

    RunHistory empty;
    write_csv(empty, p.string());
    CHECK(slurp(p) == "iter,objective,volfrac,seconds\n");
}

TEST_CASE("run configuration validation") {
    RunConfig cfg;
    CHECK_NOTHROW(cfg.validate());

    RunConfig bad = cfg;
    bad.volfrac = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.method = "magic";
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = cfg;
    bad.method = "neural";
    bad.nx = 50;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    RunConfig inv = cfg;
    inv.problem = "inverter";
    inv.target = -100.0;
    ProblemSpec pr = inv.to_problem();
    CHECK(pr.objective == ObjectiveKind::InverterTarget);
    CHECK(pr.target.value() == -100.0);

    RunConfig wrong = cfg;  // target on a non-inverter problem
    wrong.target = -10.0;
    CHECK_THROWS_AS(wrong.to_problem(), std::invalid_argument);
}

TEST_CASE("cli usage errors exit with code 1") {
    CHECK(run_cli("run --volfrac 1.5 --iters 1") == 1);
    CHECK(run_cli("run --problem arch --iters 1") == 1);
    CHECK(run_cli("run --unknown-flag 3") != 0);
    CHECK(run_cli("bogus-subcommand") != 0);
}

TEST_CASE("cli run produces artifacts and honors config precedence") {
    fs::path dir = temp_dir() / "cli_run";
    fs::remove_all(dir);

    // config file sets volfrac 0.4; the flag overrides it with 0.3
    fs::path cfgfile = temp_dir() / "run.cfg";
    {
        std::ofstream f(cfgfile);
        f << "problem = mbb\n";
        f << "nx = 16\nny = 8\n";
        f << "volfrac = 0.4\n";
        f << "iters = 2\n";
        f << "method = simp\n";
    }
    int rc = run_cli("run --config " + cfgfile.string() + " --volfrac 0.3 --out " + dir.string());
    REQUIRE(rc == 0);
    REQUIRE(fs::exists(dir / "density.pgm"));
    REQUIRE(fs::exists(dir / "history.csv"));

    // the flag value won: the first recorded volume fraction is 0.3
    std::ifstream f(dir / "history.csv");
    std::string line;
    std::getline(f, line);
    std::getline(f, line);
    CHECK(line.find(",0.3,") != std::string::npos);

    // unknown keys in the config file are rejected
    fs::path badcfg = temp_dir() / "bad.cfg";
    {
        std::ofstream g(badcfg);
        g << "volfrac = 0.4\nunknown_knob = 3\n";
    }
    CHECK(run_cli("run --config " + badcfg.string()) != 0);
}

TEST_CASE("cli gradcheck exits cleanly on a small scale") {
    CHECK(run_cli("gradcheck --scale 1 --seed 3") == 0);
}
