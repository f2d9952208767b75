// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <numbers>
#include <sstream>

#include "gtdsgd/error.hpp"
#include "gtdsgd/topology.hpp"
#include "support.hpp"

using namespace gtdsgd;

TEST_SUITE("topology") {

TEST_CASE("path-3 Metropolis-Hastings weights and lambda") {
    const auto w = metropolis_hastings(generate_graph(GraphKind::path, 3, 0));
    Eigen::Matrix3d expected;
    expected << 2.0 / 3, 1.0 / 3, 0, 1.0 / 3, 1.0 / 3, 1.0 / 3, 0, 1.0 / 3, 2.0 / 3;
    CHECK((w.w - expected).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(w.lambda == doctest::Approx(2.0 / 3).epsilon(1e-12));
    CHECK(testing::power_lambda(w.w) == doctest::Approx(2.0 / 3).epsilon(1e-9));
}

TEST_CASE("ring-3 is the complete graph, so W is the averaging matrix") {
    const auto w = metropolis_hastings(generate_graph(GraphKind::ring, 3, 0));
    CHECK((w.w.array() - 1.0 / 3).abs().maxCoeff() < 1e-15);
    CHECK(w.lambda <= 1e-12);
}

TEST_CASE("ring lambda matches the circulant spectrum") {
    for (std::size_t n : {4u, 5u, 8u, 13u}) {
        const auto w = metropolis_hastings(generate_graph(GraphKind::ring, n, 0));
        double expected = 0.0;
        for (std::size_t k = 1; k < n; ++k)
            expected = std::max(expected, std::abs(1.0 / 3 + 2.0 / 3 * std::cos(2 * std::numbers::pi * k / n)));
        CHECK(w.lambda == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("complete graph gives lambda zero") {
    const auto w = metropolis_hastings(generate_graph(GraphKind::complete, 7, 0));
    CHECK(w.lambda < 1e-12);
}

TEST_CASE("random connected graphs yield doubly stochastic symmetric W with lambda in [0,1)") {
    Xoshiro256 rng(42);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 2 + rng.below(60);
        const double p = 0.05 + 0.9 * rng.uniform();
        const auto g = generate_graph(GraphKind::erdos_renyi, n, 1000 + trial, p);
        REQUIRE(g.connected());
        const auto w = metropolis_hastings(g);
        const auto rep = stochasticity(w.w);
        CHECK(rep.row_dev <= 1e-12);
        CHECK(rep.col_dev <= 1e-12);
        CHECK(rep.asymmetry <= 1e-15);
        CHECK(w.w.minCoeff() >= 0.0);
        CHECK(w.lambda >= 0.0);
        CHECK(w.lambda < 1.0);
        if (n <= 20) CHECK(w.lambda == doctest::Approx(testing::power_lambda(w.w)).epsilon(1e-6));
    }
}

TEST_CASE("generated graphs have the expected edge sets") {
    CHECK(generate_graph(GraphKind::ring, 6, 0).edges().size() == 6);
    CHECK(generate_graph(GraphKind::path, 6, 0).edges().size() == 5);
    CHECK(generate_graph(GraphKind::complete, 6, 0).edges().size() == 15);
    const auto deg = generate_graph(GraphKind::ring, 6, 0).degrees();
    for (auto k : deg) CHECK(k == 2);
}

TEST_CASE("same seed gives the same Erdos-Renyi graph") {
    const auto a = generate_graph(GraphKind::erdos_renyi, 30, 7, 0.2);
    const auto b = generate_graph(GraphKind::erdos_renyi, 30, 7, 0.2);
    CHECK(a.edges() == b.edges());
}

TEST_CASE("bad graph arguments are rejected") {
    CHECK_THROWS_AS(generate_graph(GraphKind::erdos_renyi, 10, 0, 1.5), InvalidArgument);
    CHECK_THROWS_AS(generate_graph(GraphKind::ring, 0, 0), InvalidArgument);
    CHECK_THROWS_AS(parse_graph_kind("torus"), InvalidArgument);
    CHECK_THROWS_AS(WeightedGraph(3, {{0, 3}}), InvalidArgument);
    CHECK_THROWS_AS(metropolis_hastings(WeightedGraph(4, {{0, 1}, {2, 3}})), InvalidArgument);
}

TEST_CASE("spectral gap rejects non-doubly-stochastic input") {
    Eigen::MatrixXd w(2, 2);
    w << 0.9, 0.2, 0.1, 0.8;
    CHECK_THROWS_AS(spectral_gap(w), InvalidArgument);
}

TEST_CASE("tuning the edge probability reaches the target lambda") {
    for (std::size_t n : {10u, 25u}) {
        const auto r = tune_er_probability(n, 0.9, 0.05, 11);
        CHECK(r.reached);
        CHECK(std::abs(r.matrix.lambda - 0.9) <= 0.05);
        CHECK(r.p > 0.0);
        CHECK(r.p <= 1.0);
    }
}

TEST_CASE("unreachable lambda targets report the achievable range") {
    CHECK_THROWS_AS(tune_er_probability(10, 0.999999, 1e-9, 3), TargetUnreachable);
}

TEST_CASE("mixing matrix CSV round-trips exactly") {
    const auto w = metropolis_hastings(generate_graph(GraphKind::erdos_renyi, 12, 5, 0.4));
    std::stringstream ss;
    write_mixing_csv(ss, w);
    const auto back = read_mixing_csv(ss);
    CHECK(back.w == w.w);
    CHECK(back.lambda == doctest::Approx(w.lambda).epsilon(1e-14));
}

}  // TEST_SUITE
