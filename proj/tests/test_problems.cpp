#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "topograd/checks.hpp"
#include "topograd/problems.hpp"

using namespace topograd;

TEST_CASE("problem catalogue wiring") {
    SECTION("mbb loads the y dof of the top-left corner") {
        ProblemSpec pr = make_problem("mbb", 48, 24, 0.3, 3.0);
        Mesh m = pr.mesh();
        CHECK(pr.load_cases.size() == 1);
        CHECK(pr.input_dof == 2 * m.node(0, 0) + 1);
        CHECK(pr.load_cases[0].forces.at(0).second == -1.0);
        // left-edge symmetry plane: one x dof per left node, plus the roller
        CHECK(pr.fixed_dofs.size() == static_cast<size_t>(24 + 1 + 1));
    }
    SECTION("inverter carries exactly two load cases") {
        ProblemSpec pr = make_problem("inverter", 32, 32, 0.3, 3.0);
        CHECK(pr.load_cases.size() == 2);
        CHECK(pr.objective == ObjectiveKind::InverterRatio);
        CHECK(pr.output_dof == 2 * pr.mesh().node(32, 16));
    }
    SECTION("cantilever fixes the whole left edge") {
        ProblemSpec pr = make_problem("cantilever", 12, 6, 0.4, 3.0);
        CHECK(pr.fixed_dofs.size() == static_cast<size_t>(2 * (6 + 1)));
    }
    SECTION("unknown names and bad ranges are rejected") {
        CHECK_THROWS_AS(make_problem("arch", 8, 8, 0.3, 3.0), std::invalid_argument);
        CHECK_THROWS_AS(make_problem("mbb", 1, 8, 0.3, 3.0), std::invalid_argument);
        CHECK_THROWS_AS(make_problem("mbb", 8, 8, 1.3, 3.0), std::invalid_argument);
        CHECK_THROWS_AS(make_problem("mbb", 8, 8, 0.3, 0.5), std::invalid_argument);
    }
}

TEST_CASE("load-point displacement equals compliance for a unit point load") {
    ProblemSpec pr = make_problem("mbb", 6, 4, 0.3, 3.0);
    Rng rng(81);
    Tensor x = Tensor::zeros({4, 6});
    for (double& v : x.data) v = rng.uniform(0.2, 1.0);
    Tensor u = displacements(pr, x, 0);
    double obj = objective_displacement(u, pr).value();
    double comp = compliance(u, load_vector(pr.mesh(), pr.load_cases[0].forces)).value();
    CHECK(obj == Catch::Approx(comp).margin(1e-12));
    CHECK(obj > 0.0);
}

TEST_CASE("objective decreases when material is added") {
    ProblemSpec pr = make_problem("bridge", 6, 4, 0.3, 3.0);
    Rng rng(83);
    Tensor x = Tensor::zeros({4, 6});
    for (double& v : x.data) v = rng.uniform(0.2, 0.7);
    double base = objective_displacement(displacements(pr, x, 0), pr).value();
    for (int rep = 0; rep < 4; ++rep) {
        Tensor xp = x.detached();
        long e = rng.index(xp.numel());
        xp.data[static_cast<size_t>(e)] = std::min(1.0, xp.data[static_cast<size_t>(e)] + 0.2);
        CHECK(objective_displacement(displacements(pr, xp, 0), pr).value() <= base + 1e-12);
    }
}

TEST_CASE("a solid block does not invert: positive geometry advantage") {
    ProblemSpec pr = make_problem("inverter", 12, 12, 0.3, 3.0);
    Tensor x = Tensor::full({12, 12}, 1.0);
    Tensor u1 = displacements(pr, x, 0);
    Tensor u2 = displacements(pr, x, 1);
    // pushing at the input moves the output away (same direction)
    CHECK(u1.data[static_cast<size_t>(pr.output_dof)] > 0.0);
    double loss = objective_inverter(u1, u2, pr, 0.01).value();
    CHECK(loss > 0.0);
}

TEST_CASE("zero stiffness weight recovers the pure ratio objective") {
    ProblemSpec pr = make_problem("inverter", 8, 8, 0.4, 3.0);
    Rng rng(87);
    Tensor x = Tensor::zeros({8, 8});
    for (double& v : x.data) v = rng.uniform(0.3, 1.0);
    Tensor u1 = displacements(pr, x, 0);
    Tensor u2 = displacements(pr, x, 1);
    double full = objective_inverter(u1, u2, pr, 0.0).value();
    double ratio = u1.data[static_cast<size_t>(pr.output_dof)] /
                   u1.data[static_cast<size_t>(pr.input_dof)];
    CHECK(full == Catch::Approx(ratio).margin(1e-14));
}

TEST_CASE("target objective vanishes at the target and degenerate ratios throw") {
    ProblemSpec pr = make_problem("inverter", 8, 8, 0.4, 3.0);
    int nd = pr.mesh().ndof();
    Tensor u1 = Tensor::zeros({nd});
    Tensor u2 = Tensor::zeros({nd});
    u1.data[static_cast<size_t>(pr.output_dof)] = -100.0;
    u1.data[static_cast<size_t>(pr.input_dof)] = 2.0;
    u2.data[static_cast<size_t>(pr.output_dof)] = 3.0;

    double lt = objective_target(u1, u2, pr, 0.0, -100.0).value();
    CHECK(lt == Catch::Approx(0.0).margin(1e-14));
    // with the stiffness term: w * (u2_out + u1_in)
    double lw = objective_target(u1, u2, pr, 0.01, -100.0).value();
    CHECK(lw == Catch::Approx(0.01 * 5.0).margin(1e-14));

    Tensor uz = Tensor::zeros({nd});
    CHECK_THROWS_AS(objective_inverter(uz, u2, pr, 0.01), std::runtime_error);
}

TEST_CASE("inverter weight gradients match finite differences on an 8x4 mesh") {
    ProblemSpec pr = make_problem("inverter", 8, 4, 0.4, 3.0);
    const double beta = 5.0;
    GeneratorParams params = init_params(8, 4, 91);
    SeedVector seedvec = make_seed_vector(91 * 13 + 2, params.seed_len);
    Tensor packed = checks_detail::pack_params(params);

    auto loss_at = [&](const Tensor& theta) {
        GeneratorParams p = checks_detail::unpack_params(theta, params);
        Tensor raw = generate_raw(p, seedvec);
        Tensor x = project_mass(raw, pr.volfrac, beta);
        SparseMatrix k = assemble_sparse(assemble_K(pr.mesh(), x, pr.material()));
        std::vector<int> free = pr.free_dofs();
        Tensor u1 = solve(k, load_vector(pr.mesh(), pr.load_cases[0].forces), free);
        Tensor u2 = solve(k, load_vector(pr.mesh(), pr.load_cases[1].forces), free);
        return objective_inverter(u1, u2, pr, pr.w);
    };

    Tape tape;
    Tensor theta = tape.leaf(packed.detached());
    GradientMap gm = backward(loss_at(theta));
    const Tensor& ad = gm.grad(theta);

    Rng rng(93);
    const double h = 1e-5;
    double max_err = 0.0;
    for (int c = 0; c < 25; ++c) {
        long i = rng.index(packed.numel());
        Tensor tp = packed.detached(), tm = packed.detached();
        tp.data[static_cast<size_t>(i)] += h;
        tm.data[static_cast<size_t>(i)] -= h;
        double central = (loss_at(tp).value() - loss_at(tm).value()) / (2.0 * h);
        max_err = std::max(max_err, std::fabs(ad.data[static_cast<size_t>(i)] - central) /
                                        std::max(1.0, std::fabs(central)));
    }
    CHECK(max_err <= 1e-4);
}

TEST_CASE("run_neural bookkeeping") {
    ProblemSpec pr = make_problem("mbb", 16, 8, 0.3, 3.0);
    SECTION("a one-iteration run returns exactly one record") {
        RunHistory h = run_neural(pr, 1, 5);
        CHECK(h.records.size() == 1);
        CHECK(h.records[0].iter == 1);
        CHECK(h.final_density.shape == std::vector<int>{8, 16});
    }
    SECTION("the mass constraint holds at every iteration") {
        RunHistory h = run_neural(pr, 6, 5);
        for (const auto& r : h.records) CHECK(r.volfrac == Catch::Approx(0.3).margin(1e-3));
    }
    SECTION("identical seeds give identical histories") {
        RunHistory a = run_neural(pr, 4, 9);
        RunHistory b = run_neural(pr, 4, 9);
        REQUIRE(a.records.size() == b.records.size());
        for (size_t i = 0; i < a.records.size(); ++i) {
            CHECK(a.records[i].objective == b.records[i].objective);
            CHECK(a.records[i].volfrac == b.records[i].volfrac);
        }
        CHECK(a.final_density.data == b.final_density.data);
    }
    SECTION("iteration counts are validated") {
        CHECK_THROWS_AS(run_neural(pr, 0, 1), std::invalid_argument);
    }
}

TEST_CASE("run_simp bookkeeping and behavior") {
    ProblemSpec pr = make_problem("mbb", 24, 12, 0.4, 3.0);
    RunHistory h = run_simp(pr, 30, OCParams{}, 1.5);
    REQUIRE(h.records.size() == 30);

    SECTION("volume fraction tracks the target after every update") {
        for (const auto& r : h.records) CHECK(r.volfrac == Catch::Approx(0.4).margin(1e-3));
    }
    SECTION("the best objective decreases") {
        double first = h.records.front().objective;
        double best = first;
        for (const auto& r : h.records) best = std::min(best, r.objective);
        CHECK(best < first);
    }
    SECTION("higher penalty yields a less gray design") {
        ProblemSpec p1 = make_problem("mbb", 24, 12, 0.4, 1.0);
        ProblemSpec p3 = make_problem("mbb", 24, 12, 0.4, 3.0);
        RunHistory h1 = run_simp(p1, 30, OCParams{}, 1.5);
        RunHistory h3 = run_simp(p3, 30, OCParams{}, 1.5);
        auto grayness = [](const Tensor& x) {
            double s = 0.0;
            for (double v : x.data) s += 4.0 * v * (1.0 - v);
            return s / static_cast<double>(x.numel());
        };
        CHECK(grayness(h3.final_density) < grayness(h1.final_density));
    }
    SECTION("the baseline rejects the inverter") {
        ProblemSpec inv = make_problem("inverter", 8, 8, 0.3, 3.0);
        CHECK_THROWS_AS(run_simp(inv, 3, OCParams{}, 1.5), std::invalid_argument);
    }
}

TEST_CASE("neural runs keep the projection ahead of the solve") {
    // every recorded volume fraction comes from the density that was solved,
    // so meeting the constraint in the record means projection preceded FEM
    ProblemSpec pr = make_problem("cantilever", 16, 8, 0.5, 3.0);
    RunHistory h = run_neural(pr, 3, 21);
    for (const auto& r : h.records) CHECK(r.volfrac == Catch::Approx(0.5).margin(1e-3));
}
