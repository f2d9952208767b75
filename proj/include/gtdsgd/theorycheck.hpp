// SPDX-License-Identifier: Apache-2.0
//
// Pathwise inequalities evaluated on recorded trajectories, and Monte-Carlo
// checks of the noise concentration bounds.
#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gtdsgd/algorithms.hpp"
#include "gtdsgd/costs.hpp"
#include "gtdsgd/noise.hpp"
#include "gtdsgd/topology.hpp"

namespace gtdsgd {

struct Violation {
    std::uint64_t run = 0;
    std::size_t t = 0;
    double slack = 0.0;
};

/// slack = right-hand side minus left-hand side; negative means violated.
struct CheckReport {
    std::string name;
    std::size_t instances = 0;
    double worst_slack = 0.0;
    double tolerance = -1e-9;
    std::vector<Violation> violations;
    bool passed = true;
    std::map<std::string, double> details;

    void record(std::uint64_t run, std::size_t t, double slack);
    /// Folds another report on the same check into this one.
    void merge(const CheckReport& other);
};

/// f(x_bar^{t+1}) against the descent bound for constant alpha <= 1/(4L).
CheckReport check_descent(const TrajectoryRecord& rec, const CostEnsemble& e);

/// Optimality-gap contraction for alpha_t <= 1/(2L); needs mu and f*.
CheckReport check_descent_pl(const TrajectoryRecord& rec, const CostEnsemble& e);

/// Summed consensus gap over every prefix T' >= 2 for GT-DSGD with constant
/// alpha <= (1-lambda^2)^2 / (16 lambda^2 L sqrt 3).
CheckReport check_consensus_bound(const TrajectoryRecord& rec, const MixingMatrix& w, const CostEnsemble& e);

/// One-step tracker dispersion recursion for GT-DSGD with constant
/// alpha <= (1-lambda^2)^{3/2} / (4 lambda^2 L sqrt 6).
CheckReport check_tracker_recursion(const TrajectoryRecord& rec, const MixingMatrix& w, const CostEnsemble& e);

/// Tail, even-moment and averaged-MGF bounds for Gaussian-type noise with
/// rho = 0, each allowed 3 Monte-Carlo standard errors. Needs samples >= 1e5.
CheckReport check_noise_properties(const OracleSpec& o, const CostEnsemble& e, const std::vector<Eigen::VectorXd>& grid,
                                   std::size_t samples, std::uint64_t seed = 0);

}  // namespace gtdsgd
