// SPDX-License-Identifier: Apache-2.0
//
// Stochastic first-order oracles. Every draw is keyed by
// (seed, run, agent, iteration) so outputs never depend on call order.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gtdsgd/costs.hpp"

namespace gtdsgd {

enum class OracleFlavor { gaussian, minibatch, relaxed_subgaussian };

OracleFlavor parse_oracle_flavor(const std::string& name);
std::string to_string(OracleFlavor f);

struct OracleSpec {
    OracleFlavor flavor = OracleFlavor::gaussian;
    // Per-agent noise std. A single entry is broadcast to every agent.
    std::vector<double> s{0.0};
    std::size_t batch_size = 1;
    double rho = 0.0;
    double eps_exponent = 1.0;
    // Lets minibatch use the whole local dataset; tests only.
    bool allow_full_batch = false;

    double std_for(std::size_t agent) const;
    /// Throws InvalidArgument on negative std, rho < 0 or eps_exponent <= 0.
    void validate() const;
};

struct OracleKey {
    std::uint64_t seed = 0;
    std::uint64_t run = 0;
    std::uint64_t iteration = 0;
    double alpha = 0.0;  // step-size in force, read by the relaxed flavor
};

/// Stochastic gradient g_i(x) for agent i.
Eigen::VectorXd sample_gradient(const OracleSpec& o, const CostEnsemble& e, std::size_t i, const Eigen::VectorXd& x,
                                const OracleKey& key);

/// g_i(x) - grad f_i(x). For the Gaussian-type flavors this skips the
/// gradient evaluation entirely (except the relaxed amplitude).
Eigen::VectorXd sample_noise(const OracleSpec& o, const CostEnsemble& e, std::size_t i, const Eigen::VectorXd& x,
                             const OracleKey& key);

/// Smallest sigma^2 with E exp(||N(0, s^2 I_d)||^2 / sigma^2) <= e, i.e.
/// 2 s^2 / (1 - exp(-2/d)). Returns 0 for s = 0.
double calibrate_sigma(double s, std::size_t d);

struct MgfEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t capped = 0;  // samples whose exponent was clipped at 700
};

/// Monte-Carlo mean of exp(||z||^2 / sigma_sq) over `samples` oracle draws at x.
MgfEstimate estimate_mgf(const OracleSpec& o, const CostEnsemble& e, std::size_t i, const Eigen::VectorXd& x,
                         double sigma_sq, std::size_t samples, std::uint64_t seed = 0);

}  // namespace gtdsgd
