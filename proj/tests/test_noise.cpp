// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>

#include "gtdsgd/costs.hpp"
#include "gtdsgd/datasets.hpp"
#include "gtdsgd/error.hpp"
#include "gtdsgd/noise.hpp"
#include "support.hpp"

using namespace gtdsgd;

TEST_SUITE("noise") {

TEST_CASE("gaussian noise has zero mean and the configured per-coordinate variance") {
    const auto e = testing::hetero_quadratics(2, 3, 1);
    OracleSpec o = testing::gaussian(0.7);
    const Eigen::VectorXd x = Eigen::VectorXd::Ones(3);
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(3);
    double sq = 0.0;
    const int N = 200000;
    for (int k = 0; k < N; ++k) {
        const auto z = sample_noise(o, *e, 1, x, {5, 0, std::uint64_t(k), 0.0});
        sum += z;
        sq += z.squaredNorm();
    }
    CHECK((sum / N).norm() < 5 * 0.7 / std::sqrt(N) * std::sqrt(3.0));
    CHECK(sq / N / 3 == doctest::Approx(0.49).epsilon(0.01));
}

TEST_CASE("oracle output is exact gradient plus noise and is reproducible from its key") {
    const auto e = testing::hetero_quadratics(3, 4, 2);
    OracleSpec o = testing::gaussian(0.5);
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(4, 0, 1);
    const OracleKey key{9, 2, 17, 0.1};
    const auto g = sample_gradient(o, *e, 2, x, key);
    CHECK((g - e->grad_local(2, x) - sample_noise(o, *e, 2, x, key)).norm() < 1e-14);
    CHECK(sample_gradient(o, *e, 2, x, key) == g);
    CHECK(sample_gradient(o, *e, 2, x, {9, 2, 18, 0.1}) != g);
    CHECK(sample_gradient(o, *e, 1, x, key) - e->grad_local(1, x) != g - e->grad_local(2, x));
}

TEST_CASE("zero noise returns the exact local gradient") {
    const auto e = testing::hetero_quadratics(2, 3, 4);
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(3, -2);
    CHECK(sample_gradient(testing::gaussian(0.0), *e, 0, x, {}) == e->grad_local(0, x));
}

TEST_CASE("per-agent noise levels") {
    OracleSpec o;
    o.s = {0.1, 0.2, 0.3};
    CHECK(o.std_for(2) == 0.3);
    CHECK_THROWS_AS(o.std_for(3), InvalidArgument);
    o.s = {0.4};
    CHECK(o.std_for(17) == 0.4);
    o.s = {-1.0};
    CHECK_THROWS_AS(o.validate(), InvalidArgument);
}

TEST_CASE("relaxed noise inflates its scale with the gradient norm") {
    const auto e = testing::hetero_quadratics(2, 3, 6);
    OracleSpec o = testing::gaussian(0.3);
    o.flavor = OracleFlavor::relaxed_subgaussian;
    o.rho = 2.0;
    o.eps_exponent = 0.5;
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 4.0);
    const OracleKey key{1, 0, 3, 0.2};
    OracleSpec plain = testing::gaussian(0.3);
    const double factor = std::sqrt(1 + 2.0 * std::pow(0.2, 2.5) * e->grad_global_avg(x).norm());
    CHECK((sample_noise(o, *e, 0, x, key) - factor * sample_noise(plain, *e, 0, x, key)).norm() < 1e-12);
    o.rho = 0.0;
    CHECK(sample_noise(o, *e, 0, x, key) == sample_noise(plain, *e, 0, x, key));
}

TEST_CASE("mini-batch gradients are unbiased for the local gradient") {
    std::ifstream is(testing::fixture("small.svm"));
    const auto shards = split_uniform(parse_libsvm(is), 1, 0);
    const auto e = CostEnsemble::logistic(make_logistic_ensemble(shards, 0.1));
    OracleSpec o;
    o.flavor = OracleFlavor::minibatch;
    o.batch_size = 2;
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(4, -1, 1);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
    const int N = 40000;
    for (int k = 0; k < N; ++k) mean += sample_gradient(o, e, 0, x, {3, 0, std::uint64_t(k), 0.1});
    mean /= N;
    CHECK((mean - e.grad_local(0, x)).norm() < 0.01);
    const auto z = sample_noise(o, e, 0, x, {3, 0, 5, 0.1});
    CHECK((z - (sample_gradient(o, e, 0, x, {3, 0, 5, 0.1}) - e.grad_local(0, x))).norm() < 1e-14);
}

TEST_CASE("mini-batch sampling refuses full batches unless allowed and needs a dataset") {
    std::ifstream is(testing::fixture("small.svm"));
    const auto e = CostEnsemble::logistic(make_logistic_ensemble(split_uniform(parse_libsvm(is), 2, 0), 0.1));
    OracleSpec o;
    o.flavor = OracleFlavor::minibatch;
    o.batch_size = 3;
    const Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
    CHECK_THROWS_AS(sample_gradient(o, e, 0, x, {}), InvalidArgument);
    o.allow_full_batch = true;
    CHECK((sample_gradient(o, e, 0, x, {}) - e.grad_local(0, x)).norm() < 1e-14);
    const auto quad = testing::hetero_quadratics(2, 4, 1);
    o.batch_size = 1;
    CHECK_THROWS_AS(sample_gradient(o, *quad, 0, x, {}), InvalidArgument);
}

TEST_CASE("calibrated sigma satisfies the defining identity") {
    for (std::size_t d : {1u, 2u, 50u}) {
        for (double s : {0.1, 1.0, 3.0}) {
            const double sig = calibrate_sigma(s, d);
            // Gaussian MGF of the squared norm at 1/sigma^2 must equal e.
            CHECK(std::pow(1.0 - 2.0 * s * s / sig, -0.5 * double(d)) == doctest::Approx(std::exp(1.0)).epsilon(1e-10));
        }
    }
    CHECK(calibrate_sigma(0.0, 5) == 0.0);
}

TEST_CASE("Monte-Carlo MGF estimate agrees with the Gaussian closed form") {
    const auto e = testing::hetero_quadratics(1, 3, 1);
    OracleSpec o = testing::gaussian(1.0);
    const double sigma_sq = 20.0;
    const auto est = estimate_mgf(o, *e, 0, Eigen::VectorXd::Zero(3), sigma_sq, 100000, 7);
    const double exact = std::pow(1.0 - 2.0 / sigma_sq, -1.5);
    CHECK(std::abs(est.mean - exact) < 4 * est.std_error + 1e-3);
    CHECK(est.capped == 0);
    CHECK_THROWS_AS(estimate_mgf(o, *e, 0, Eigen::VectorXd::Zero(3), sigma_sq, 10), InvalidArgument);
}

}  // TEST_SUITE
