// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "gtdsgd/costs.hpp"
#include "gtdsgd/datasets.hpp"
#include "gtdsgd/error.hpp"
#include "support.hpp"

using namespace gtdsgd;

namespace {

template <class F>
Eigen::VectorXd numeric_grad(F&& f, const Eigen::VectorXd& x, double h = 1e-6) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        Eigen::VectorXd a = x, b = x;
        a[k] += h;
        b[k] -= h;
        g[k] = (f(a) - f(b)) / (2 * h);
    }
    return g;
}

// Dense re-derivation of the regularized logistic loss for one shard.
double logistic_oracle(const LabeledDataset& ds, const Eigen::VectorXd& x, double eta) {
    double loss = 0.0;
    for (const auto& r : ds.rows) {
        double m = 0.0;
        for (auto [j, v] : r.features) m += v * x[j];
        loss += std::log1p(std::exp(-r.label * m));
    }
    double pen = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) pen += x[k] * x[k] / (1 + x[k] * x[k]);
    return loss / double(ds.size()) + eta * pen;
}

std::vector<LabeledDataset> small_shards() {
    std::ifstream is(testing::fixture("small.svm"));
    return split_uniform(parse_libsvm(is), 2, 1);
}

}  // namespace

TEST_SUITE("costs") {

TEST_CASE("quadratic gradients match finite differences") {
    const auto e = testing::hetero_quadratics(4, 6, 3);
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(6, -1.0, 2.0);
    for (std::size_t i = 0; i < 4; ++i) {
        const auto fd = numeric_grad([&](const Eigen::VectorXd& z) { return e->value_local(i, z); }, x);
        CHECK((e->grad_local(i, x) - fd).norm() < 1e-6);
    }
    const auto fd = numeric_grad([&](const Eigen::VectorXd& z) { return e->value(z); }, x);
    CHECK((e->grad_global_avg(x) - fd).norm() < 1e-6);
}

TEST_CASE("quadratic optimum solves the averaged normal equations") {
    const auto e = testing::hetero_quadratics(5, 4, 8);
    REQUIRE(e->x_star);
    CHECK(e->grad_global_avg(*e->x_star).norm() < 1e-10);
    CHECK(e->value(*e->x_star) == doctest::Approx(*e->f_star).epsilon(1e-12));
    CHECK(*e->mu > 0.0);
    CHECK(e->L == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("PL inequality holds for strongly convex quadratics") {
    const auto e = testing::hetero_quadratics(3, 5, 12);
    Xoshiro256 rng(2);
    for (int k = 0; k < 50; ++k) {
        Eigen::VectorXd x(5);
        rng.fill_normal(x, 3.0);
        CHECK(2 * *e->mu * (e->value(x) - *e->f_star) <= e->grad_global_avg(x).squaredNorm() * (1 + 1e-12) + 1e-12);
    }
}

TEST_CASE("non-symmetric or mismatched quadratics are rejected") {
    QuadraticEnsemble q;
    Eigen::MatrixXd a(2, 2);
    a << 1, 2, 0, 1;
    q.a = {a};
    q.b = {Eigen::VectorXd::Zero(2)};
    CHECK_THROWS_AS(CostEnsemble::quadratic(q), InvalidArgument);
    q.a = {Eigen::MatrixXd::Identity(2, 2)};
    q.b = {Eigen::VectorXd::Zero(3)};
    CHECK_THROWS_AS(CostEnsemble::quadratic(q), InvalidArgument);
}

TEST_CASE("non-finite models raise a numerical fault") {
    const auto e = testing::hetero_quadratics(2, 3, 1);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
    x[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(e->grad_local(1, x), NumericalFault);
}

TEST_CASE("logistic loss and gradient match a dense oracle") {
    const auto shards = small_shards();
    const auto e = CostEnsemble::logistic(make_logistic_ensemble(shards, 0.1));
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(4, -0.7, 0.9);
    for (std::size_t i = 0; i < shards.size(); ++i) {
        CHECK(e.value_local(i, x) == doctest::Approx(logistic_oracle(shards[i], x, 0.1)).epsilon(1e-12));
        const auto fd = numeric_grad([&](const Eigen::VectorXd& z) { return logistic_oracle(shards[i], z, 0.1); }, x);
        CHECK((e.grad_local(i, x) - fd).norm() < 1e-7);
    }
    CHECK_FALSE(e.x_star.has_value());
    CHECK(e.L > 0.2);
}

TEST_CASE("batched global gradients agree with the single-point version") {
    const auto logistic = CostEnsemble::logistic(make_logistic_ensemble(small_shards(), 0.3));
    const auto quad = testing::hetero_quadratics(3, 4, 5);
    Xoshiro256 rng(4);
    Eigen::MatrixXd xs(5, 4);
    for (Eigen::Index k = 0; k < xs.size(); ++k) xs.data()[k] = rng.normal();
    for (const CostEnsemble* e : {&logistic, quad.get()}) {
        const auto g = e->grad_global_avg_rows(xs);
        for (Eigen::Index r = 0; r < xs.rows(); ++r)
            CHECK((g.row(r).transpose() - e->grad_global_avg(xs.row(r).transpose())).norm() < 1e-12);
    }
}

TEST_CASE("mini-batch gradients over all rows equal the full local gradient") {
    const auto shards = small_shards();
    const auto e = CostEnsemble::logistic(make_logistic_ensemble(shards, 0.1));
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(4, 0.3);
    std::vector<std::size_t> rows(e.local_samples(0));
    for (std::size_t k = 0; k < rows.size(); ++k) rows[k] = k;
    CHECK((e.grad_rows(0, rows, x) - e.grad_local(0, x)).norm() < 1e-13);
    const std::vector<std::size_t> bad{99};
    CHECK_THROWS_AS(e.grad_rows(0, bad, x), InvalidArgument);
}

TEST_CASE("labels outside {+1,-1} and empty shards are rejected") {
    auto shards = small_shards();
    shards[0].rows[0].label = 0;
    CHECK_THROWS_AS(make_logistic_ensemble(shards, 0.1), InvalidArgument);
    shards = small_shards();
    shards[1].rows.clear();
    CHECK_THROWS_AS(make_logistic_ensemble(shards, 0.1), InvalidArgument);
}

TEST_CASE("penalty gradient matches finite differences") {
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(7, -3.0, 3.0);
    const auto fd = numeric_grad([](const Eigen::VectorXd& z) { return nonconvex_penalty(z, 0.25); }, x);
    CHECK((nonconvex_penalty_grad(x, 0.25) - fd).norm() < 1e-8);
}

TEST_CASE("independent-offset profile draws one matrix and offset per agent") {
    SyntheticQuadraticSpec spec;
    spec.n = 6;
    spec.d = 8;
    spec.seed = 21;
    const auto q = make_synthetic_quadratics(spec);
    REQUIRE(q.agents() == 6);
    CHECK((q.a[0] - q.a[1]).norm() > 1e-6);
    for (const auto& a : q.a) {
        CHECK((a - a.transpose()).norm() < 1e-14);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
        CHECK(es.eigenvalues().minCoeff() >= spec.mu0 - 1e-12);
    }
    const auto again = make_synthetic_quadratics(spec);
    CHECK(again.a[3] == q.a[3]);
    CHECK(again.b[5] == q.b[5]);
}

TEST_CASE("shared-matrix profile uses one A and offsets beta*1 in equal proportion") {
    SyntheticQuadraticSpec spec;
    spec.n = 25;
    spec.d = 10;
    spec.profile = HeterogeneityProfile::shared_matrix;
    spec.mu0 = 1.0;
    spec.seed = 5;
    const auto q = make_synthetic_quadratics(spec);
    std::map<double, int> count;
    for (std::size_t i = 0; i < q.agents(); ++i) {
        CHECK(q.a[i] == q.a[0]);
        const double beta = q.b[i][0];
        CHECK((q.b[i].array() - beta).abs().maxCoeff() == 0.0);
        ++count[beta];
    }
    const std::map<double, int> expected{{-2, 5}, {-1, 5}, {0, 5}, {1, 5}, {3, 5}};
    CHECK(count == expected);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q.a[0]);
    CHECK(es.eigenvalues().minCoeff() >= 1.0 - 1e-12);

    // Same seed, larger network: the shared matrix is unchanged.
    spec.n = 50;
    CHECK(make_synthetic_quadratics(spec).a[0] == q.a[0]);
}

TEST_CASE("ensembles survive a JSON round trip") {
    const auto quad = testing::hetero_quadratics(3, 4, 9);
    std::stringstream ss;
    save_ensemble(ss, *quad);
    const auto back = load_ensemble(ss);
    CHECK((back.as_quadratic()->a[2] - quad->as_quadratic()->a[2]).norm() == 0.0);
    CHECK(back.L == quad->L);

    const auto logi = CostEnsemble::logistic(make_logistic_ensemble(small_shards(), 0.2));
    std::stringstream ls;
    save_ensemble(ls, logi);
    const auto lback = load_ensemble(ls);
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(4, 0.1);
    CHECK(lback.value(x) == logi.value(x));
}

}  // TEST_SUITE
