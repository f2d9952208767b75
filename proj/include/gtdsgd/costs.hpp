// SPDX-License-Identifier: Apache-2.0
//
// Per-agent cost ensembles: heterogeneous quadratics and logistic regression
// with the non-convex penalty eta * sum_k x_k^2 / (1 + x_k^2).
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "gtdsgd/datasets.hpp"

namespace gtdsgd {

/// f_i(x) = 0.5 x^T A_i x + b_i^T x.
struct QuadraticEnsemble {
    std::vector<Eigen::MatrixXd> a;
    std::vector<Eigen::VectorXd> b;

    std::size_t agents() const noexcept { return a.size(); }
    std::size_t dim() const noexcept { return b.empty() ? 0 : static_cast<std::size_t>(b.front().size()); }
};

using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct LogisticEnsemble {
    std::vector<SparseRows> features;     // per agent, m_i x d
    std::vector<Eigen::VectorXd> labels;  // per agent, entries in {+1, -1}
    double eta = 0.0;
    std::size_t d = 0;

    std::size_t agents() const noexcept { return features.size(); }
};

/// Builds per-agent design matrices from split shards.
LogisticEnsemble make_logistic_ensemble(const std::vector<LabeledDataset>& shards, double eta);

/// Penalty gradient eta * 2 x_k / (1 + x_k^2)^2, coordinate-wise.
Eigen::VectorXd nonconvex_penalty_grad(const Eigen::VectorXd& x, double eta);
double nonconvex_penalty(const Eigen::VectorXd& x, double eta);

class CostEnsemble {
public:
    /// Fills L = max_i lambda_max(A_i); when the average matrix is positive
    /// definite also mu = lambda_min(A_bar), x_star and f_star.
    static CostEnsemble quadratic(QuadraticEnsemble q);
    /// Fills L from the logistic curvature bound; mu and the optimum stay empty.
    static CostEnsemble logistic(LogisticEnsemble l);

    std::size_t agents() const noexcept { return agents_; }
    std::size_t dim() const noexcept { return dim_; }

    double value_local(std::size_t i, const Eigen::VectorXd& x) const;
    double value(const Eigen::VectorXd& x) const;
    Eigen::VectorXd grad_local(std::size_t i, const Eigen::VectorXd& x) const;
    /// Gradient of f = (1/n) sum_i f_i.
    Eigen::VectorXd grad_global_avg(const Eigen::VectorXd& x) const;
    /// grad_global_avg at every row of `xs`; row k of the result belongs to row k of `xs`.
    Eigen::MatrixXd grad_global_avg_rows(const Eigen::MatrixXd& xs) const;

    bool has_dataset() const noexcept { return std::holds_alternative<LogisticEnsemble>(data_); }
    std::size_t local_samples(std::size_t i) const;
    /// Mean sample-loss gradient over `rows` of agent i, penalty included once.
    Eigen::VectorXd grad_rows(std::size_t i, std::span<const std::size_t> rows, const Eigen::VectorXd& x) const;

    const QuadraticEnsemble* as_quadratic() const noexcept { return std::get_if<QuadraticEnsemble>(&data_); }
    const LogisticEnsemble* as_logistic() const noexcept { return std::get_if<LogisticEnsemble>(&data_); }

    double L = 0.0;
    std::optional<double> mu;
    std::optional<Eigen::VectorXd> x_star;
    std::optional<double> f_star;

private:
    CostEnsemble() = default;
    void check_agent(std::size_t i) const;
    void check_input(std::size_t i, const Eigen::VectorXd& x) const;

    std::variant<QuadraticEnsemble, LogisticEnsemble> data_;
    std::size_t agents_ = 0;
    std::size_t dim_ = 0;
    // Quadratic fast path for the global gradient.
    Eigen::MatrixXd a_bar_;
    Eigen::VectorXd b_bar_;
};

/// Smoothness constant as defined for each family (see CostEnsemble factories).
double smoothness_constant(const CostEnsemble& e);

struct QuadraticOptimum {
    Eigen::VectorXd x_star;
    double f_star = 0.0;
};

/// Solves A_bar x = -b_bar by Cholesky. Throws InvalidArgument("no unique
/// optimum") when A_bar is not positive definite.
QuadraticOptimum quadratic_optimum(const QuadraticEnsemble& q);

enum class HeterogeneityProfile {
    gaussian_offsets,  // independent A_i, b_i ~ N(0, i I) for agent i = 1..n
    shared_matrix,     // one A for all agents, b_i = beta_i 1 with beta from {-2,-1,0,1,3}
};

HeterogeneityProfile parse_profile(const std::string& name);
std::string to_string(HeterogeneityProfile p);

struct SyntheticQuadraticSpec {
    std::size_t n = 10;
    std::size_t d = 50;
    HeterogeneityProfile profile = HeterogeneityProfile::gaussian_offsets;
    double density = 0.1;  // Bernoulli keep-probability of the factor entries
    double mu0 = 0.1;      // ridge added to every A_i
    std::uint64_t seed = 0;
};

/// A_i = F_i F_i^T + mu0 I with masked Gaussian factors scaled so that
/// E[F F^T] = I.
QuadraticEnsemble make_synthetic_quadratics(const SyntheticQuadraticSpec& spec);

void save_ensemble(std::ostream& os, const CostEnsemble& e);
CostEnsemble load_ensemble(std::istream& is);

}  // namespace gtdsgd
