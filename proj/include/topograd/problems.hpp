#pragma once

#include <chrono>
#include <optional>

#include "topograd/generator.hpp"
#include "topograd/optim.hpp"

namespace topograd {

enum class ObjectiveKind {
    LoadPointDisplacement,  // F.u at the loaded dof, single load case
    InverterRatio,          // geometry advantage plus stiffness regularizer
    InverterTarget,         // |output - target| plus stiffness regularizer
};

struct LoadCase {
    PointLoads forces;
};

/// Complete description of one benchmark: domain, supports, loads, monitored
/// dofs, volume fraction, penalty, and objective.
struct ProblemSpec {
    std::string name;
    int nx = 0, ny = 0;
    std::vector<int> fixed_dofs;  // sorted, unique
    std::vector<LoadCase> load_cases;
    int input_dof = -1;   // loaded dof of case 0
    int output_dof = -1;  // monitored output dof (compliant mechanisms)
    double volfrac = 0.3;
    double penalty = 3.0;
    ObjectiveKind objective = ObjectiveKind::LoadPointDisplacement;
    double w = 0.01;
    std::optional<double> target;

    Mesh mesh() const { return Mesh(nx, ny); }
    Material material() const {
        Material m;
        m.p = penalty;
        return m;
    }
    std::vector<int> free_dofs() const { return complement_dofs(mesh().ndof(), fixed_dofs); }
};

namespace detail {
inline void sort_unique(std::vector<int>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}
}  // namespace detail

/// Benchmark catalogue.
///
///   mbb        half MBB beam: symmetry plane on the left edge (x fixed),
///              vertical roller at the bottom-right corner, unit downward
///              load at the top-left corner.
///   cantilever left edge fully fixed, unit downward tip load at the
///              right-edge midpoint.
///   bridge     pinned at bottom-left, vertical roller at bottom-right,
///              unit downward load at the bottom-edge midpoint.
///   inverter   force inverter: left corner nodes pinned, unit horizontal
///              input load at the left-edge midpoint, output monitored at
///              the right-edge midpoint; a second load case applies a unit
///              horizontal force at the output.
inline ProblemSpec make_problem(const std::string& name, int nx, int ny, double volfrac,
                                double p) {
    if (nx < 2 || ny < 2 || nx > 4096 || ny > 4096)
        throw std::invalid_argument("make_problem: mesh dimensions " + std::to_string(nx) + "x" +
                                    std::to_string(ny) + " out of range");
    if (!(volfrac > 0.0) || !(volfrac < 1.0))
        throw std::invalid_argument("make_problem: volume fraction must be in (0,1)");
    if (!(p >= 1.0)) throw std::invalid_argument("make_problem: penalty must be >= 1");

    ProblemSpec pr;
    pr.name = name;
    pr.nx = nx;
    pr.ny = ny;
    pr.volfrac = volfrac;
    pr.penalty = p;
    Mesh m(nx, ny);

    if (name == "mbb") {
        for (int y = 0; y <= ny; ++y) pr.fixed_dofs.push_back(2 * m.node(0, y));
        pr.fixed_dofs.push_back(2 * m.node(nx, ny) + 1);
        pr.input_dof = 2 * m.node(0, 0) + 1;
        pr.load_cases.push_back({{{pr.input_dof, -1.0}}});
    } else if (name == "cantilever") {
        for (int y = 0; y <= ny; ++y) {
            pr.fixed_dofs.push_back(2 * m.node(0, y));
            pr.fixed_dofs.push_back(2 * m.node(0, y) + 1);
        }
        pr.input_dof = 2 * m.node(nx, ny / 2) + 1;
        pr.load_cases.push_back({{{pr.input_dof, -1.0}}});
    } else if (name == "bridge") {
        pr.fixed_dofs.push_back(2 * m.node(0, ny));
        pr.fixed_dofs.push_back(2 * m.node(0, ny) + 1);
        pr.fixed_dofs.push_back(2 * m.node(nx, ny) + 1);
        pr.input_dof = 2 * m.node(nx / 2, ny) + 1;
        pr.load_cases.push_back({{{pr.input_dof, -1.0}}});
    } else if (name == "inverter") {
        for (int corner : {m.node(0, 0), m.node(0, ny)}) {
            pr.fixed_dofs.push_back(2 * corner);
            pr.fixed_dofs.push_back(2 * corner + 1);
        }
        pr.input_dof = 2 * m.node(0, ny / 2);
        pr.output_dof = 2 * m.node(nx, ny / 2);
        pr.load_cases.push_back({{{pr.input_dof, 1.0}}});
        pr.load_cases.push_back({{{pr.output_dof, 1.0}}});
        pr.objective = ObjectiveKind::InverterRatio;
    } else {
        throw std::invalid_argument("make_problem: unknown problem '" + name +
                                    "' (expected mbb, cantilever, bridge, or inverter)");
    }
    detail::sort_unique(pr.fixed_dofs);
    return pr;
}

/// Displacement field for one load case of a problem.
inline Tensor displacements(const ProblemSpec& pr, const Tensor& x, int load_case) {
    if (load_case < 0 || load_case >= static_cast<int>(pr.load_cases.size()))
        throw std::invalid_argument("displacements: load case " + std::to_string(load_case) +
                                    " out of range");
    return displacements(pr.mesh(), pr.material(), x, pr.fixed_dofs,
                         pr.load_cases[static_cast<size_t>(load_case)].forces);
}

/// F.u at the loaded dof. For the unit point loads used here this is the
/// magnitude of the displacement along the load, and coincides with the
/// compliance.
inline Tensor objective_displacement(const Tensor& u, const ProblemSpec& pr) {
    if (pr.input_dof < 0) throw std::invalid_argument("objective_displacement: no monitored dof");
    double fval = 0.0;
    for (auto [dof, val] : pr.load_cases.at(0).forces)
        if (dof == pr.input_dof) fval = val;
    return smul(fval, gather(u, pr.input_dof));
}

namespace detail {
/// Shared stiffness regularizer of the mechanism objectives:
/// w * (output displacement under case II + input displacement under case I),
/// both work-conjugate (F.u at the loaded dof, positive).
inline Tensor inverter_terms(const Tensor& u_in, const Tensor& u_out, const ProblemSpec& pr,
                             double w, Tensor& work_in) {
    if (pr.input_dof < 0 || pr.output_dof < 0)
        throw std::invalid_argument("inverter objective: monitored dofs missing");
    work_in = gather(u_in, pr.input_dof);       // case I: unit load at the input
    Tensor work_out = gather(u_out, pr.output_dof);  // case II: unit load at the output
    return smul(w, add(work_out, work_in));
}
}  // namespace detail

/// Mechanism objective: signed ratio of output to input displacement under
/// the input load (geometry advantage; negative once the mechanism inverts)
/// plus the stiffness regularizer.
inline Tensor objective_inverter(const Tensor& u_case1, const Tensor& u_case2,
                                 const ProblemSpec& pr, double w) {
    Tensor work_in;
    Tensor stiff = detail::inverter_terms(u_case1, u_case2, pr, w, work_in);
    if (work_in.value() == 0.0)
        throw std::runtime_error("objective_inverter: zero input displacement, cannot form the "
                                 "geometry-advantage ratio");
    Tensor out_disp = gather(u_case1, pr.output_dof);
    return add(div(out_disp, work_in), stiff);
}

/// Mechanism objective with |output - target| replacing the ratio term.
inline Tensor objective_target(const Tensor& u_case1, const Tensor& u_case2,
                               const ProblemSpec& pr, double w, double target) {
    Tensor work_in;
    Tensor stiff = detail::inverter_terms(u_case1, u_case2, pr, w, work_in);
    Tensor out_disp = gather(u_case1, pr.output_dof);
    return add(abs(sub(out_disp, Tensor::full({1}, target))), stiff);
}

struct IterationRecord {
    int iter = 0;
    double objective = 0.0;
    double volfrac = 0.0;
    double seconds = 0.0;
};

struct RunHistory {
    std::vector<IterationRecord> records;
    Tensor final_density;
};

/// Hyperparameters of the proposed method. The projection sharpness follows
/// a continuation schedule: it ramps geometrically from beta_start to
/// beta_end over the first 70% of the run and then holds, so early
/// iterations explore topology through a soft projection and late ones
/// binarize against a stable objective.
struct NeuralHyper {
    AdamParams adam;
    double beta_start = 3.0;
    double beta_end = 10.0;

    double beta_at(int iter, int total) const {
        if (total <= 1) return beta_end;
        double ramp = 0.7 * static_cast<double>(total - 1);
        double q = std::min(1.0, static_cast<double>(iter - 1) / ramp);
        return beta_start * std::pow(beta_end / beta_start, q);
    }
};

namespace detail {

inline Tensor problem_objective(const ProblemSpec& pr, const SparseMatrix& k,
                                const std::vector<int>& free) {
    Mesh mesh = pr.mesh();
    switch (pr.objective) {
        case ObjectiveKind::LoadPointDisplacement: {
            Tensor u = solve(k, load_vector(mesh, pr.load_cases[0].forces), free);
            return objective_displacement(u, pr);
        }
        case ObjectiveKind::InverterRatio:
        case ObjectiveKind::InverterTarget: {
            Tensor u1 = solve(k, load_vector(mesh, pr.load_cases.at(0).forces), free);
            Tensor u2 = solve(k, load_vector(mesh, pr.load_cases.at(1).forces), free);
            if (pr.objective == ObjectiveKind::InverterTarget) {
                if (!pr.target)
                    throw std::invalid_argument("objective_target: no target displacement set");
                return objective_target(u1, u2, pr, pr.w, *pr.target);
            }
            return objective_inverter(u1, u2, pr, pr.w);
        }
    }
    throw std::logic_error("problem_objective: unhandled objective kind");
}

}  // namespace detail

/// Proposed optimization loop: every iteration regenerates the design from
/// the current generator weights, projects it onto the mass constraint,
/// solves the load cases, differentiates the objective back to the weights,
/// and takes one Adam step. Deterministic for a given seed.
inline RunHistory run_neural(const ProblemSpec& pr, int iters, std::uint64_t seed,
                             const NeuralHyper& hyper = {}) {
    if (iters < 1) throw std::invalid_argument("run_neural: need at least one iteration");
    Mesh mesh = pr.mesh();
    Material mat = pr.material();
    std::vector<int> free = pr.free_dofs();

    GeneratorParams params = init_params(pr.nx, pr.ny, seed);
    SeedVector seedvec = make_seed_vector(seed ^ 0xd1b54a32d192ed03ULL, params.seed_len);
    std::vector<AdamState> states(params.tensors().size());

    RunHistory hist;
    hist.records.reserve(static_cast<size_t>(iters));
    for (int it = 1; it <= iters; ++it) {
        auto t0 = std::chrono::steady_clock::now();

        Tape tape;
        GeneratorParams tracked = track(tape, params);
        Tensor raw = generate_raw(tracked, seedvec);
        Tensor x = project_mass(raw, pr.volfrac, hyper.beta_at(it, iters));

        SparseMatrix k = assemble_sparse(assemble_K(mesh, x, mat));
        Tensor loss = detail::problem_objective(pr, k, free);
        if (!all_finite(loss))
            throw std::runtime_error("run_neural: non-finite objective at iteration " +
                                     std::to_string(it));

        GradientMap grads = backward(loss);
        auto live = tracked.tensors();
        auto dest = params.tensors();
        for (size_t i = 0; i < live.size(); ++i) {
            Tensor g = grads.has(*live[i]) ? grads.grad(*live[i]).detached()
                                           : Tensor::zeros(live[i]->shape);
            adam_step(*dest[i], g, states[i], hyper.adam);
        }

        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        hist.records.push_back({it, loss.value(), mean_of(x), secs});
        if (it == iters) hist.final_density = x.detached();
    }
    return hist;
}

/// Classical density-based baseline: analytic sensitivity, cone filter,
/// optimality-criteria update, starting from a uniform field at the target
/// volume fraction. No tape involved.
inline RunHistory run_simp(const ProblemSpec& pr, int iters, const OCParams& oc = {},
                           double rmin = 1.5) {
    if (iters < 1) throw std::invalid_argument("run_simp: need at least one iteration");
    if (pr.objective != ObjectiveKind::LoadPointDisplacement)
        throw std::invalid_argument("run_simp: baseline supports the load-point displacement "
                                    "objective only");
    Mesh mesh = pr.mesh();
    Material mat = pr.material();
    std::vector<int> free = pr.free_dofs();

    Tensor x = Tensor::full({pr.ny, pr.nx}, pr.volfrac);
    RunHistory hist;
    hist.records.reserve(static_cast<size_t>(iters));
    for (int it = 1; it <= iters; ++it) {
        auto t0 = std::chrono::steady_clock::now();

        SparseMatrix k = assemble_sparse(assemble_K(mesh, x, mat));
        Tensor u = solve(k, load_vector(mesh, pr.load_cases[0].forces), free);
        Tensor loss = objective_displacement(u, pr);
        if (!all_finite(loss))
            throw std::runtime_error("run_simp: non-finite objective at iteration " +
                                     std::to_string(it));

        Tensor dc = sensitivity(x, u, mesh, mat);
        Tensor dcf = density_filter(dc, rmin);
        Tensor xnext = oc_update(x, dcf, pr.volfrac, oc);

        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        hist.records.push_back({it, loss.value(), mean_of(x), secs});
        if (it == iters) hist.final_density = x.detached();
        x = std::move(xnext);
    }
    return hist;
}

}  // namespace topograd
