#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>

#include "topograd/problems.hpp"

namespace topograd {

/// Validated batch-run configuration (one CLI invocation).
struct RunConfig {
    std::string problem = "mbb";
    int nx = 48;
    int ny = 24;
    double volfrac = 0.3;
    double penalty = 3.0;
    int iters = 100;
    std::string method = "neural";
    std::uint64_t seed = 0;
    double lr = 0.01;
    double w = 0.01;
    std::optional<double> target;
    double rmin = 1.5;
    OCParams oc;
    std::string out_dir = "out";

    void validate() const {
        if (problem != "mbb" && problem != "cantilever" && problem != "bridge" &&
            problem != "inverter")
            throw std::invalid_argument("config: unknown problem '" + problem + "'");
        if (method != "neural" && method != "simp")
            throw std::invalid_argument("config: method must be 'neural' or 'simp', got '" +
                                        method + "'");
        if (nx < 2 || ny < 2 || nx > 4096 || ny > 4096)
            throw std::invalid_argument("config: mesh dimensions out of range");
        if (!(volfrac > 0.0) || !(volfrac < 1.0))
            throw std::invalid_argument("config: volfrac must be in (0,1)");
        if (!(penalty >= 1.0)) throw std::invalid_argument("config: penalty must be >= 1");
        if (iters < 1) throw std::invalid_argument("config: iters must be >= 1");
        if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
        if (!(rmin >= 1.0)) throw std::invalid_argument("config: rmin must be >= 1");
        if (method == "neural" && (nx % 4 != 0 || ny % 4 != 0))
            throw std::invalid_argument("config: neural method needs nx, ny divisible by 4");
        if (method == "simp" && problem == "inverter")
            throw std::invalid_argument("config: the simp baseline does not support the inverter");
        oc.validate();
    }

    ProblemSpec to_problem() const {
        ProblemSpec pr = make_problem(problem, nx, ny, volfrac, penalty);
        pr.w = w;
        if (target) {
            if (problem != "inverter")
                throw std::invalid_argument("config: --target applies to the inverter only");
            pr.target = target;
            pr.objective = ObjectiveKind::InverterTarget;
        }
        return pr;
    }
};

/// Plain `key = value` run configuration file. Blank lines and lines
/// starting with # are skipped. Returns entries in file order.
inline std::vector<std::pair<std::string, std::string>> parse_config_file(
    const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("config: cannot open '" + path + "'");
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    auto trim = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#') continue;
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected key = value at " + path + ":" +
                                        std::to_string(lineno));
        entries.emplace_back(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    return entries;
}

/// Apply one config entry to the fields of `cfg`, skipping keys listed in
/// `overridden` (flags take precedence over file values). Keys match the
/// long flag names. Unknown keys are rejected.
inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value,
                               const std::set<std::string>& overridden) {
    if (overridden.count(key)) return;
    auto as_int = [&](const char* what) {
        try {
            size_t pos = 0;
            int v = std::stoi(value, &pos);
            if (pos != value.size()) throw std::invalid_argument(value);
            return v;
        } catch (const std::exception&) {
            throw std::invalid_argument("config: bad integer for " + std::string(what) + ": '" +
                                        value + "'");
        }
    };
    auto as_double = [&](const char* what) {
        try {
            size_t pos = 0;
            double v = std::stod(value, &pos);
            if (pos != value.size()) throw std::invalid_argument(value);
            return v;
        } catch (const std::exception&) {
            throw std::invalid_argument("config: bad number for " + std::string(what) + ": '" +
                                        value + "'");
        }
    };
    if (key == "problem")
        cfg.problem = value;
    else if (key == "nx")
        cfg.nx = as_int("nx");
    else if (key == "ny")
        cfg.ny = as_int("ny");
    else if (key == "volfrac")
        cfg.volfrac = as_double("volfrac");
    else if (key == "penalty")
        cfg.penalty = as_double("penalty");
    else if (key == "iters")
        cfg.iters = as_int("iters");
    else if (key == "method")
        cfg.method = value;
    else if (key == "seed")
        cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
    else if (key == "lr")
        cfg.lr = as_double("lr");
    else if (key == "w")
        cfg.w = as_double("w");
    else if (key == "target")
        cfg.target = as_double("target");
    else if (key == "rmin")
        cfg.rmin = as_double("rmin");
    else if (key == "out")
        cfg.out_dir = value;
    else
        throw std::invalid_argument("config: unknown key '" + key + "'");
}

/// Binary PGM (P5), one byte per element, row 0 at the top of the domain.
/// Solid material renders black: pixel = round(255 * (1 - x)).
inline void write_pgm(const Tensor& x, const std::string& path) {
    if (x.ndim() != 2)
        throw std::invalid_argument("write_pgm: expected a 2-D density field, got " +
                                    Tensor::shape_str(x.shape));
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_pgm: cannot open '" + path + "' for writing");
    const int ny = x.shape[0], nx = x.shape[1];
    f << "P5\n" << nx << " " << ny << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(nx));
    for (int y = 0; y < ny; ++y) {
        for (int xx = 0; xx < nx; ++xx) {
            double v = x.data[static_cast<size_t>(y) * nx + xx];
            long pix = std::lround(255.0 - 255.0 * v);  // round(255 * (1 - v))
            row[static_cast<size_t>(xx)] =
                static_cast<unsigned char>(std::min(255L, std::max(0L, pix)));
        }
        f.write(reinterpret_cast<const char*>(row.data()), nx);
    }
    if (!f) throw std::runtime_error("write_pgm: write to '" + path + "' failed");
}

/// Read back a P5 file written by write_pgm. Returns quantized densities.
inline Tensor read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_pgm: cannot open '" + path + "'");
    std::string magic;
    int nx = 0, ny = 0, maxval = 0;
    f >> magic >> nx >> ny >> maxval;
    if (magic != "P5" || maxval != 255 || nx < 1 || ny < 1)
        throw std::runtime_error("read_pgm: '" + path + "' is not a P5/255 file");
    f.get();  // single whitespace after the header
    std::vector<unsigned char> bytes(static_cast<size_t>(nx) * ny);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("read_pgm: truncated file '" + path + "'");
    Tensor x = Tensor::zeros({ny, nx});
    for (size_t i = 0; i < bytes.size(); ++i) x.data[i] = 1.0 - bytes[i] / 255.0;
    return x;
}

/// Convergence history as CSV: header iter,objective,volfrac,seconds and one
/// row per iteration, floats at 12 significant digits.
inline void write_csv(const RunHistory& hist, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_csv: cannot open '" + path + "' for writing");
    f << "iter,objective,volfrac,seconds\n";
    f << std::setprecision(12);
    for (const IterationRecord& r : hist.records)
        f << r.iter << "," << r.objective << "," << r.volfrac << "," << r.seconds << "\n";
    if (!f) throw std::runtime_error("write_csv: write to '" + path + "' failed");
}

/// Emit density.pgm and history.csv into the output directory.
inline void save_run_artifacts(const RunHistory& hist, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_pgm(hist.final_density, (std::filesystem::path(out_dir) / "density.pgm").string());
    write_csv(hist, (std::filesystem::path(out_dir) / "history.csv").string());
}

}  // namespace topograd
