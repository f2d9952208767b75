// SPDX-License-Identifier: Apache-2.0
//
// GT-DSGD and DSGD over a fixed mixing matrix, plus the step-size calculators
// that come with the convergence guarantees.
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gtdsgd/costs.hpp"
#include "gtdsgd/noise.hpp"
#include "gtdsgd/topology.hpp"

namespace gtdsgd {

enum class Algorithm { gt_dsgd, dsgd };

Algorithm parse_algorithm(const std::string& name);
std::string to_string(Algorithm a);

/// Row i of each matrix belongs to agent i.
struct AlgorithmState {
    Eigen::MatrixXd x;
    Eigen::MatrixXd y;
    Eigen::MatrixXd g_prev;
    std::size_t t = 1;
};

/// x^1 = x0 for every agent, y^0 = g^0 = 0.
AlgorithmState initial_state(std::size_t n, const Eigen::VectorXd& x0);
AlgorithmState initial_state(const Eigen::MatrixXd& x1);

struct StepSchedule {
    enum class Kind { constant, inverse_time };
    Kind kind = Kind::constant;
    double alpha = 0.1;  // constant
    double a = 1.0;      // inverse_time: a / (mu (t + t0))
    double mu = 1.0;
    double t0 = 0.0;

    static StepSchedule constant(double alpha);
    static StepSchedule inverse_time(double a, double mu, double t0);

    double at(std::size_t t) const;
    void validate() const;
};

struct StepKey {
    std::uint64_t seed = 0;
    std::uint64_t run = 0;
};

/// Per-step byproducts, filled when the caller passes a non-null pointer.
struct StepDetail {
    Eigen::MatrixXd g;      // oracle outputs g^t
    Eigen::MatrixXd noise;  // g^t minus exact local gradients
    double alpha = 0.0;
};

AlgorithmState gt_dsgd_step(AlgorithmState s, const MixingMatrix& w, const OracleSpec& o, const CostEnsemble& e,
                            const StepSchedule& sched, const StepKey& key, StepDetail* detail = nullptr);
AlgorithmState dsgd_step(AlgorithmState s, const MixingMatrix& w, const OracleSpec& o, const CostEnsemble& e,
                         const StepSchedule& sched, const StepKey& key, StepDetail* detail = nullptr);

struct RunConfig {
    std::shared_ptr<const MixingMatrix> w;
    std::shared_ptr<const CostEnsemble> cost;
    OracleSpec oracle;
    StepSchedule schedule;
    std::size_t T = 0;
    Eigen::MatrixXd x_init;  // n x d; empty means all zeros
    // Stride for average-model snapshots; 0 picks 1 when n*d <= 1e4, else 10.
    std::size_t snapshot_stride = 0;
    bool full_snapshots = false;  // also keep x and y at the stride
    bool record_trace = false;    // keep everything the pathwise checks need
};

struct Snapshot {
    std::size_t t = 0;
    Eigen::VectorXd x_bar;
    Eigen::MatrixXd x;  // empty unless full_snapshots
    Eigen::MatrixXd y;
};

/// Iterates and noise of one run; x holds x^1..x^{T+1}, the rest t = 1..T.
struct NoiseTrace {
    std::vector<Eigen::MatrixXd> x;
    std::vector<Eigen::MatrixXd> y;
    std::vector<Eigen::MatrixXd> z;
    std::vector<double> alpha;
};

/// Series index k holds the value at t = k + 1, measured on x^t.
struct TrajectoryRecord {
    Algorithm algorithm = Algorithm::gt_dsgd;
    std::size_t n = 0, d = 0, T = 0;
    std::uint64_t seed = 0, run_id = 0;

    std::vector<double> alpha;
    std::vector<double> f_avg;             // f(x_bar^t)
    std::vector<double> mse_to_opt;        // (1/n) sum_i ||x_i^t - x*||^2, empty if x* unknown
    std::vector<double> consensus_gap;     // (1/n) sum_i ||x_i^t - x_bar^t||^2
    std::vector<double> tracker_gap;       // (1/n) sum_i ||y_i^t - y_bar^t||^2, zero for DSGD
    std::vector<double> stationarity_sum;  // sum_i ||grad f(x_i^t)||^2
    std::vector<Snapshot> snapshots;
    std::optional<NoiseTrace> trace;
    AlgorithmState final_state;
};

void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& rec);

/// Deterministic in (cfg, seed, run_id). Step errors are rethrown with run metadata.
TrajectoryRecord run(Algorithm alg, const RunConfig& cfg, std::uint64_t seed, std::uint64_t run_id);

struct TermBreakdown {
    std::string name;
    double value = 0.0;
};

struct NonconvexStepParams {
    double n = 1, T = 1, L = 1, lambda = 0, sigma_sq = 0, sigma_max_sq = 0, d = 1, rho = 0, eps_exponent = 1;
};

struct StepCapResult {
    double alpha = 0.0;  // min(sqrt(n/T), C)
    double C = 0.0;
    std::vector<TermBreakdown> terms;
};

/// Step-size recommendation for non-convex costs. Terms with a zero
/// denominator are +inf.
StepCapResult nonconvex_step_cap(const NonconvexStepParams& p);

struct PlT0Params {
    double n = 1, lambda = 0, a = 6, L = 1, mu = 1, sigma_sq = 0, sigma_max_sq = 0, rho = 0, eps_exponent = 1;
};

struct T0Result {
    double t0 = 0.0;
    std::vector<TermBreakdown> terms;
};

/// Smallest admissible t0 for the PL schedule a / (mu (t + t0)). Requires a >= 6.
T0Result pl_t0_floor(const PlT0Params& p);

}  // namespace gtdsgd
