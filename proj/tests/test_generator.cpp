#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "topograd/checks.hpp"
#include "topograd/generator.hpp"

using namespace topograd;

TEST_CASE("parameter initialization is deterministic and shaped by the mesh") {
    GeneratorParams a = init_params(48, 24, 7);
    GeneratorParams b = init_params(48, 24, 7);
    auto ta = a.tensors(), tb = b.tensors();
    for (size_t i = 0; i < ta.size(); ++i) CHECK(ta[i]->data == tb[i]->data);

    CHECK(a.dense_w.shape == std::vector<int>{12 * 6 * 32, 128});
    CHECK(a.dense_b.numel() == 12 * 6 * 32);
    CHECK(a.k1.shape == std::vector<int>{32, 16, 4, 4});
    CHECK(a.k2.shape == std::vector<int>{16, 1, 4, 4});

    GeneratorParams c = init_params(48, 24, 8);
    CHECK(c.dense_w.data != a.dense_w.data);
}

TEST_CASE("mesh dimensions must be divisible by four") {
    CHECK_THROWS_WITH(init_params(50, 24, 1), Catch::Matchers::ContainsSubstring("divisible"));
    CHECK_THROWS_AS(init_params(48, 25, 1), std::invalid_argument);
}

TEST_CASE("zero weights generate the zero field") {
    GeneratorParams p = init_params(16, 8, 3);
    for (Tensor* t : p.tensors())
        for (double& v : t->data) v = 0.0;
    SeedVector seed = make_seed_vector(3);
    Tensor raw = generate_raw(p, seed);
    CHECK(raw.shape == std::vector<int>{8, 16});
    for (double v : raw.data) CHECK(v == 0.0);
}

TEST_CASE("output shape tracks the mesh through both doublings") {
    for (auto [nx, ny] : {std::pair{48, 24}, std::pair{96, 48}, std::pair{192, 96}}) {
        GeneratorParams p = init_params(nx, ny, 11);
        Tensor raw = generate_raw(p, make_seed_vector(11));
        CHECK(raw.shape == std::vector<int>{ny, nx});
    }
}

TEST_CASE("raw output stays within the tanh bounds under smoothing") {
    GeneratorParams p = init_params(24, 12, 19);
    Tensor raw = generate_raw(p, make_seed_vector(19));
    for (double v : raw.data) {
        CHECK(v <= 1.0);
        CHECK(v >= -1.0);
    }
}

TEST_CASE("smoothing is a convex neighborhood average") {
    // constant image is a fixed point of the boundary-renormalized filter
    Tensor ones = Tensor::full({1, 5, 7}, 0.37);
    Tensor norm = smoothing_norm(5, 7);
    Tensor sm = mul(conv2d(ones, Tensor::full({1, 1, 3, 3}, 1.0), 1), norm);
    for (double v : sm.data) CHECK(v == Catch::Approx(0.37).epsilon(1e-14));
}

TEST_CASE("mass projection hits the target mean") {
    SECTION("constant raw maps to a uniform field at the volume fraction") {
        Tensor raw = Tensor::full({4, 6}, 0.42);
        Tensor x = project_mass(raw, 0.3, 5.0);
        for (double v : x.data) CHECK(v == Catch::Approx(0.3).margin(2e-5));
    }
    SECTION("random raw, volfrac 0.3") {
        Rng rng(41);
        Tensor raw = Tensor::zeros({8, 12});
        for (double& v : raw.data) v = rng.uniform(-1.0, 1.0);
        Tensor x = project_mass(raw, 0.3, 5.0);
        CHECK(mean_of(x) == Catch::Approx(0.3).margin(1e-4));
        for (double v : x.data) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }
    SECTION("order preservation") {
        Rng rng(43);
        Tensor raw = Tensor::zeros({30});
        for (double& v : raw.data) v = rng.uniform(-1.0, 1.0);
        Tensor x = project_mass(raw, 0.4, 5.0);
        for (long i = 0; i < raw.numel(); ++i)
            for (long j = 0; j < raw.numel(); ++j)
                if (raw.data[static_cast<size_t>(i)] > raw.data[static_cast<size_t>(j)])
                    CHECK(x.data[static_cast<size_t>(i)] > x.data[static_cast<size_t>(j)]);
    }
    SECTION("invalid volume fractions are rejected") {
        Tensor raw = Tensor::zeros({2, 2});
        CHECK_THROWS_AS(project_mass(raw, 0.0, 5.0), std::invalid_argument);
        CHECK_THROWS_AS(project_mass(raw, 1.5, 5.0), std::invalid_argument);
    }
}

TEST_CASE("generate and project satisfy the mass constraint end to end") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        GeneratorParams p = init_params(16, 8, seed);
        Tensor raw = generate_raw(p, make_seed_vector(seed * 31 + 1));
        for (double vf : {0.3, 0.5}) {
            Tensor x = project_mass(raw, vf, 5.0);
            CHECK(mean_of(x) == Catch::Approx(vf).margin(1e-4));
        }
    }
}

TEST_CASE("weight gradients pass the end-to-end finite-difference check") {
    GradCheckResult r = theta_gradient_check(5);
    INFO(r.name << " max_rel_err=" << r.max_rel_err);
    CHECK(r.passed);
    CHECK(r.max_rel_err <= 1e-4);
}

TEST_CASE("the detached-offset gradient is a descent direction") {
    GradCheckResult r = theta_descent_check(5);
    CHECK(r.passed);
}
