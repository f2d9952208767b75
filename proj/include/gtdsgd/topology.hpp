// SPDX-License-Identifier: Apache-2.0
//
// Communication graphs, Metropolis-Hastings mixing matrices and the
// connectivity parameter lambda = ||W - J||_2.
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gtdsgd/error.hpp"

namespace gtdsgd {

enum class GraphKind { ring, path, complete, erdos_renyi };

GraphKind parse_graph_kind(const std::string& name);
std::string to_string(GraphKind kind);

/// Undirected simple graph on agents 0..n-1. Edges are stored once with i < j,
/// sorted lexicographically.
class WeightedGraph {
public:
    using Edge = std::pair<std::size_t, std::size_t>;

    WeightedGraph(std::size_t n, std::vector<Edge> edges);

    std::size_t size() const noexcept { return n_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    std::vector<std::size_t> degrees() const;
    bool connected() const;

private:
    std::size_t n_;
    std::vector<Edge> edges_;
};

/// `p` is only read for erdos_renyi. Erdos-Renyi draws are resampled with
/// incremented sub-seeds until connected (at most 1000 attempts).
WeightedGraph generate_graph(GraphKind kind, std::size_t n, std::uint64_t seed, double p = 0.0);

struct MixingMatrix {
    Eigen::MatrixXd w;
    double lambda = 0.0;

    std::size_t size() const noexcept { return static_cast<std::size_t>(w.rows()); }
};

MixingMatrix metropolis_hastings(const WeightedGraph& g);

/// ||W - J||_2. Symmetric inputs use a dense eigensolver, others power
/// iteration on (W-J)^T (W-J). Throws InvalidArgument unless W is doubly
/// stochastic within 1e-9.
double spectral_gap(const Eigen::MatrixXd& w);

/// Largest row-sum, column-sum deviation from 1 and asymmetry.
struct StochasticityReport {
    double row_dev = 0.0;
    double col_dev = 0.0;
    double asymmetry = 0.0;
};
StochasticityReport stochasticity(const Eigen::MatrixXd& w);

class TargetUnreachable : public Error {
public:
    TargetUnreachable(double target, double lo, double hi, const std::string& what)
        : Error(what), target_(target), lo_(lo), hi_(hi) {}
    double target() const noexcept { return target_; }
    double achievable_lo() const noexcept { return lo_; }
    double achievable_hi() const noexcept { return hi_; }

private:
    double target_, lo_, hi_;
};

struct TuneResult {
    double p = 0.0;
    MixingMatrix matrix;
    bool reached = false;    // |matrix.lambda - target| <= tol
    int bisection_steps = 0;
    double mean_lambda = 0.0;  // average over the probe at `p`
};

/// Bisection on the Erdos-Renyi edge probability so that the Metropolis-Hastings
/// lambda approaches `target_lambda`. Each probe averages 16 sampled graphs.
/// Throws TargetUnreachable when the target lies outside the achievable range.
TuneResult tune_er_probability(std::size_t n, double target_lambda, double tol, std::uint64_t seed);

/// CSV exchange: first line "# n,lambda", second line "<n>,<lambda>", then n
/// rows of n comma-separated values printed with round-trip precision.
void write_mixing_csv(std::ostream& os, const MixingMatrix& m);
MixingMatrix read_mixing_csv(std::istream& is);

}  // namespace gtdsgd
