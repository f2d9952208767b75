// SPDX-License-Identifier: Apache-2.0
#include "gtdsgd/topology.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Eigenvalues>

#include "gtdsgd/format.hpp"
#include "gtdsgd/rng.hpp"

namespace gtdsgd {

namespace {

constexpr int kMaxConnectAttempts = 1000;
constexpr int kProbeSamples = 16;
constexpr int kMaxBisectionSteps = 40;
constexpr double kSpectralTol = 1e-10;
constexpr long kPowerIterationCap = 100000;

}  // namespace

GraphKind parse_graph_kind(const std::string& name) {
    if (name == "ring") return GraphKind::ring;
    if (name == "path") return GraphKind::path;
    if (name == "complete") return GraphKind::complete;
    if (name == "erdos_renyi" || name == "er") return GraphKind::erdos_renyi;
    throw InvalidArgument("unknown graph kind '" + name + "'");
}

std::string to_string(GraphKind kind) {
    switch (kind) {
        case GraphKind::ring: return "ring";
        case GraphKind::path: return "path";
        case GraphKind::complete: return "complete";
        case GraphKind::erdos_renyi: return "erdos_renyi";
    }
    return "unknown";
}

WeightedGraph::WeightedGraph(std::size_t n, std::vector<Edge> edges) : n_(n) {
    if (n == 0) throw InvalidArgument("graph needs at least one agent");
    for (auto& [i, j] : edges) {
        if (i >= n || j >= n) throw InvalidArgument("edge references agent outside [0, n)");
        if (i == j) throw InvalidArgument("self-loops are not stored");
        if (i > j) std::swap(i, j);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    edges_ = std::move(edges);
}

std::vector<std::size_t> WeightedGraph::degrees() const {
    std::vector<std::size_t> deg(n_, 0);
    for (const auto& [i, j] : edges_) {
        ++deg[i];
        ++deg[j];
    }
    return deg;
}

bool WeightedGraph::connected() const {
    std::vector<std::vector<std::size_t>> adj(n_);
    for (const auto& [i, j] : edges_) {
        adj[i].push_back(j);
        adj[j].push_back(i);
    }
    std::vector<bool> seen(n_, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    std::size_t reached = 1;
    while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        for (std::size_t v : adj[u]) {
            if (!seen[v]) {
                seen[v] = true;
                ++reached;
                stack.push_back(v);
            }
        }
    }
    return reached == n_;
}

WeightedGraph generate_graph(GraphKind kind, std::size_t n, std::uint64_t seed, double p) {
    if (n == 0) throw InvalidArgument("graph needs at least one agent");
    std::vector<WeightedGraph::Edge> edges;
    switch (kind) {
        case GraphKind::ring:
            for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
            if (n >= 3) edges.emplace_back(0, n - 1);
            return WeightedGraph(n, std::move(edges));
        case GraphKind::path:
            for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
            return WeightedGraph(n, std::move(edges));
        case GraphKind::complete:
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
            return WeightedGraph(n, std::move(edges));
        case GraphKind::erdos_renyi:
            break;
    }
    if (!(p > 0.0 && p <= 1.0)) throw InvalidArgument("erdos_renyi edge probability must lie in (0, 1]");
    for (int attempt = 0; attempt < kMaxConnectAttempts; ++attempt) {
        Xoshiro256 rng(hash_key({seed, static_cast<std::uint64_t>(attempt)}));
        edges.clear();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (rng.uniform() < p) edges.emplace_back(i, j);
        WeightedGraph g(n, edges);
        if (g.connected()) return g;
    }
    throw InvalidArgument("unconnectable configuration: no connected erdos_renyi graph with n=" +
                          std::to_string(n) + ", p=" + format_double(p) + " in " +
                          std::to_string(kMaxConnectAttempts) + " resamples");
}

StochasticityReport stochasticity(const Eigen::MatrixXd& w) {
    StochasticityReport r;
    if (w.size() == 0) return r;
    r.row_dev = (w.rowwise().sum().array() - 1.0).abs().maxCoeff();
    r.col_dev = (w.colwise().sum().array() - 1.0).abs().maxCoeff();
    r.asymmetry = (w - w.transpose()).cwiseAbs().maxCoeff();
    return r;
}

MixingMatrix metropolis_hastings(const WeightedGraph& g) {
    if (!g.connected()) throw InvalidArgument("graph not connected");
    const std::size_t n = g.size();
    const auto deg = g.degrees();
    MixingMatrix m;
    m.w = Eigen::MatrixXd::Zero(n, n);
    for (const auto& [i, j] : g.edges()) {
        const double wij = 1.0 / (1.0 + static_cast<double>(std::max(deg[i], deg[j])));
        m.w(i, j) = wij;
        m.w(j, i) = wij;
    }
    for (std::size_t i = 0; i < n; ++i) {
        double off = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) off += m.w(i, j);
        m.w(i, i) = 1.0 - off;
    }
    m.lambda = spectral_gap(m.w);
    return m;
}

double spectral_gap(const Eigen::MatrixXd& w) {
    if (w.rows() != w.cols() || w.rows() == 0) throw InvalidArgument("mixing matrix must be square and non-empty");
    if ((w.array() < 0.0).any()) throw InvalidArgument("mixing matrix has negative entries");
    const auto rep = stochasticity(w);
    if (rep.row_dev > 1e-9 || rep.col_dev > 1e-9)
        throw InvalidArgument("mixing matrix is not doubly stochastic");

    const auto n = w.rows();
    const Eigen::MatrixXd d = w - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
    if (rep.asymmetry <= 1e-12) {
        const Eigen::MatrixXd sym = 0.5 * (d + d.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
        return es.eigenvalues().cwiseAbs().maxCoeff();
    }

    // Power iteration on the Gram matrix; its top eigenvalue is ||W - J||^2.
    const Eigen::MatrixXd gram = d.transpose() * d;
    Xoshiro256 rng(0x5eed);
    Eigen::VectorXd v(n);
    rng.fill_normal(v, 1.0);
    v.normalize();
    double estimate = 0.0;
    for (long it = 0; it < kPowerIterationCap; ++it) {
        Eigen::VectorXd next = gram * v;
        const double norm = next.norm();
        if (norm == 0.0) return 0.0;
        const double rayleigh = v.dot(next);
        v = next / norm;
        if (std::abs(std::sqrt(std::max(rayleigh, 0.0)) - estimate) <= kSpectralTol && it > 0) {
            estimate = std::sqrt(std::max(rayleigh, 0.0));
            break;
        }
        estimate = std::sqrt(std::max(rayleigh, 0.0));
    }
    return estimate;
}

TuneResult tune_er_probability(std::size_t n, double target_lambda, double tol, std::uint64_t seed) {
    if (!(target_lambda > 0.0 && target_lambda < 1.0)) throw InvalidArgument("target lambda must lie in (0, 1)");
    if (!(tol > 0.0)) throw InvalidArgument("tolerance must be positive");

    struct Sample {
        double p;
        MixingMatrix m;
    };
    Sample best{1.0, {}};
    double best_err = std::numeric_limits<double>::infinity();
    double seen_lo = std::numeric_limits<double>::infinity();
    double seen_hi = -std::numeric_limits<double>::infinity();
    std::uint64_t probe_id = 0;

    // Mean lambda over a probe; throws InvalidArgument if p cannot be connected.
    auto probe = [&](double p) {
        const std::uint64_t id = probe_id++;
        double sum = 0.0;
        for (int j = 0; j < kProbeSamples; ++j) {
            auto g = generate_graph(GraphKind::erdos_renyi, n, hash_key({seed, id, static_cast<std::uint64_t>(j)}), p);
            auto m = metropolis_hastings(g);
            const double lam = m.lambda;
            seen_lo = std::min(seen_lo, lam);
            seen_hi = std::max(seen_hi, lam);
            const double err = std::abs(lam - target_lambda);
            if (err < best_err) {
                best_err = err;
                best = {p, std::move(m)};
            }
            sum += lam;
        }
        return sum / kProbeSamples;
    };

    // Walk p down until graphs stop connecting; sparser graphs mix worse.
    double p_lo = 1.0;
    double lambda_at_lo = probe(1.0);
    for (double p = 0.8; p > 1e-6; p *= 0.8) {
        double mean = 0.0;
        try {
            mean = probe(p);
        } catch (const InvalidArgument&) {
            break;
        }
        p_lo = p;
        lambda_at_lo = mean;
        if (mean > target_lambda + tol) break;
    }
    if (seen_hi < target_lambda - tol || seen_lo > target_lambda + tol) {
        throw TargetUnreachable(target_lambda, seen_lo, seen_hi,
                                "target lambda " + format_double(target_lambda) +
                                    " unreachable for n=" + std::to_string(n) + "; achieved range [" +
                                    format_double(seen_lo) + ", " + format_double(seen_hi) + "]");
    }

    TuneResult out;
    double lo = p_lo, hi = 1.0;
    double mean_at_best = lambda_at_lo;
    double mean_err = std::abs(lambda_at_lo - target_lambda);
    int steps = 0;
    while (steps < kMaxBisectionSteps && !(best_err <= tol && mean_err <= tol)) {
        const double mid = 0.5 * (lo + hi);
        const double mean = probe(mid);
        ++steps;
        if (std::abs(mean - target_lambda) < mean_err) {
            mean_err = std::abs(mean - target_lambda);
            mean_at_best = mean;
        }
        if (mean > target_lambda) lo = mid;
        else hi = mid;
    }
    out.p = best.p;
    out.matrix = std::move(best.m);
    out.reached = best_err <= tol;
    out.bisection_steps = steps;
    out.mean_lambda = mean_at_best;
    return out;
}

void write_mixing_csv(std::ostream& os, const MixingMatrix& m) {
    const auto n = m.w.rows();
    os << "# n,lambda\n" << n << ',' << format_double(m.lambda) << '\n';
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j) os << ',';
            os << format_double(m.w(i, j));
        }
        os << '\n';
    }
    if (!os) throw IoError("failed writing mixing matrix CSV");
}

MixingMatrix read_mixing_csv(std::istream& is) {
    std::string line;
    auto next_line = [&]() -> bool {
        while (std::getline(is, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line.front() == '#') continue;
            return true;
        }
        return false;
    };
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ',')) out.push_back(cell);
        return out;
    };
    if (!next_line()) throw InvalidArgument("mixing CSV: missing n,lambda line");
    auto head = split(line);
    if (head.size() != 2) throw InvalidArgument("mixing CSV: expected 'n,lambda'");
    const auto nval = parse_double(head[0]);
    const auto lam = parse_double(head[1]);
    if (!nval || !lam || *nval < 1 || std::floor(*nval) != *nval) throw InvalidArgument("mixing CSV: bad header values");
    const auto n = static_cast<Eigen::Index>(*nval);
    MixingMatrix m;
    m.w.resize(n, n);
    m.lambda = *lam;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!next_line()) throw InvalidArgument("mixing CSV: expected " + std::to_string(n) + " rows");
        auto cells = split(line);
        if (static_cast<Eigen::Index>(cells.size()) != n)
            throw InvalidArgument("mixing CSV: row " + std::to_string(i) + " has wrong width");
        for (Eigen::Index j = 0; j < n; ++j) {
            auto v = parse_double(cells[static_cast<std::size_t>(j)]);
            if (!v) throw InvalidArgument("mixing CSV: non-numeric entry in row " + std::to_string(i));
            m.w(i, j) = *v;
        }
    }
    // Validates double stochasticity as a side effect.
    const double recomputed = spectral_gap(m.w);
    if (std::abs(recomputed - m.lambda) > 1e-8)
        throw InvalidArgument("mixing CSV: stored lambda disagrees with matrix");
    return m;
}

}  // namespace gtdsgd
