// SPDX-License-Identifier: Apache-2.0
//
// Shared builders for the unit and acceptance tests.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <string>

#include "gtdsgd/algorithms.hpp"
#include "gtdsgd/costs.hpp"
#include "gtdsgd/rng.hpp"
#include "gtdsgd/topology.hpp"

#ifndef GTDSGD_FIXTURE_DIR
#define GTDSGD_FIXTURE_DIR "tests/fixtures"
#endif

namespace testing {

inline std::string fixture(const std::string& name) { return std::string(GTDSGD_FIXTURE_DIR) + "/" + name; }

inline std::shared_ptr<const gtdsgd::MixingMatrix> mh(gtdsgd::GraphKind kind, std::size_t n, std::uint64_t seed = 0,
                                                      double p = 0.5) {
    return std::make_shared<gtdsgd::MixingMatrix>(gtdsgd::metropolis_hastings(gtdsgd::generate_graph(kind, n, seed, p)));
}

// Random SPD matrix with eigenvalues in [lo, hi].
inline Eigen::MatrixXd random_spd(std::size_t d, double lo, double hi, std::uint64_t seed) {
    gtdsgd::Xoshiro256 rng(seed);
    Eigen::MatrixXd g(d, d);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    const Eigen::MatrixXd q = qr.householderQ();
    Eigen::VectorXd ev(d);
    for (std::size_t k = 0; k < d; ++k) ev[k] = lo + (hi - lo) * (d == 1 ? 1.0 : double(k) / double(d - 1));
    return q * ev.asDiagonal() * q.transpose();
}

// Heterogeneous quadratics with independent A_i and offsets.
inline std::shared_ptr<const gtdsgd::CostEnsemble> hetero_quadratics(std::size_t n, std::size_t d, std::uint64_t seed,
                                                                     double lo = 0.5, double hi = 2.0) {
    gtdsgd::QuadraticEnsemble q;
    gtdsgd::Xoshiro256 rng(seed ^ 0x9e37u);
    for (std::size_t i = 0; i < n; ++i) {
        q.a.push_back(random_spd(d, lo, hi, seed * 131 + i));
        Eigen::VectorXd b(d);
        for (Eigen::Index k = 0; k < b.size(); ++k) b[k] = 2.0 * rng.normal();
        q.b.push_back(b);
    }
    return std::make_shared<gtdsgd::CostEnsemble>(gtdsgd::CostEnsemble::quadratic(std::move(q)));
}

inline gtdsgd::OracleSpec gaussian(double s) {
    gtdsgd::OracleSpec o;
    o.s = {s};
    return o;
}

inline gtdsgd::RunConfig run_config(std::shared_ptr<const gtdsgd::MixingMatrix> w,
                                    std::shared_ptr<const gtdsgd::CostEnsemble> cost, gtdsgd::OracleSpec oracle,
                                    gtdsgd::StepSchedule sched, std::size_t T, bool trace = false) {
    gtdsgd::RunConfig rc;
    rc.w = std::move(w);
    rc.cost = std::move(cost);
    rc.oracle = std::move(oracle);
    rc.schedule = sched;
    rc.T = T;
    rc.record_trace = trace;
    return rc;
}

// Largest |eigenvalue| of W - J by power iteration on its square; test-side oracle.
inline double power_lambda(const Eigen::MatrixXd& w) {
    const Eigen::Index n = w.rows();
    const Eigen::MatrixXd m = w - Eigen::MatrixXd::Constant(n, n, 1.0 / double(n));
    const Eigen::MatrixXd m2 = m.transpose() * m;
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(n, 1.0, 2.0);
    double est = 0.0;
    for (int k = 0; k < 20000; ++k) {
        Eigen::VectorXd nv = m2 * v;
        const double nrm = nv.norm();
        if (nrm == 0.0) return 0.0;
        nv /= nrm;
        const double next = std::sqrt(nv.dot(m2 * nv));
        v = nv;
        if (std::abs(next - est) < 1e-15) return next;
        est = next;
    }
    return est;
}

}  // namespace testing
