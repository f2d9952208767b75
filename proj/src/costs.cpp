// SPDX-License-Identifier: Apache-2.0
#include "gtdsgd/costs.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "gtdsgd/error.hpp"
#include "gtdsgd/rng.hpp"

namespace gtdsgd {

namespace {

double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

double max_eigenvalue(const Eigen::MatrixXd& sym) {
    if (sym.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

double min_eigenvalue(const Eigen::MatrixXd& sym) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

// Logistic sample-loss gradient over selected rows (all rows when `rows` is empty
// and `all` is set), without the penalty.
Eigen::VectorXd logistic_data_grad(const SparseRows& h, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                                   std::span<const std::size_t> rows, bool all) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
    if (all) {
        const Eigen::VectorXd margins = h * x;
        Eigen::VectorXd coef(margins.size());
        for (Eigen::Index r = 0; r < margins.size(); ++r) coef[r] = -y[r] * sigmoid(-y[r] * margins[r]);
        g = h.transpose() * coef;
        return g / static_cast<double>(h.rows());
    }
    for (std::size_t r : rows) {
        const auto ri = static_cast<Eigen::Index>(r);
        double margin = 0.0;
        for (SparseRows::InnerIterator it(h, ri); it; ++it) margin += it.value() * x[it.col()];
        const double coef = -y[ri] * sigmoid(-y[ri] * margin);
        for (SparseRows::InnerIterator it(h, ri); it; ++it) g[it.col()] += coef * it.value();
    }
    return g / static_cast<double>(rows.size());
}

}  // namespace

Eigen::VectorXd nonconvex_penalty_grad(const Eigen::VectorXd& x, double eta) {
    return (eta * 2.0 * x.array() / (1.0 + x.array().square()).square()).matrix();
}

double nonconvex_penalty(const Eigen::VectorXd& x, double eta) {
    return eta * (x.array().square() / (1.0 + x.array().square())).sum();
}

LogisticEnsemble make_logistic_ensemble(const std::vector<LabeledDataset>& shards, double eta) {
    if (shards.empty()) throw InvalidArgument("logistic ensemble needs at least one agent");
    if (eta < 0.0) throw InvalidArgument("penalty eta must be non-negative");
    LogisticEnsemble out;
    out.eta = eta;
    out.d = 0;
    for (const auto& s : shards) out.d = std::max(out.d, s.d);
    for (const auto& shard : shards) {
        if (shard.rows.empty()) throw InvalidArgument("every agent must hold at least one sample");
        std::vector<Eigen::Triplet<double>> trips;
        Eigen::VectorXd y(static_cast<Eigen::Index>(shard.size()));
        for (std::size_t r = 0; r < shard.size(); ++r) {
            const auto& row = shard.rows[r];
            if (row.label != 1 && row.label != -1) throw InvalidArgument("labels must be +1 or -1");
            y[static_cast<Eigen::Index>(r)] = row.label;
            for (const auto& [idx, val] : row.features) {
                if (idx >= out.d) throw InvalidArgument("feature index exceeds dimension");
                trips.emplace_back(static_cast<int>(r), static_cast<int>(idx), val);
            }
        }
        SparseRows h(static_cast<Eigen::Index>(shard.size()), static_cast<Eigen::Index>(out.d));
        h.setFromTriplets(trips.begin(), trips.end());
        h.makeCompressed();
        out.features.push_back(std::move(h));
        out.labels.push_back(std::move(y));
    }
    return out;
}

CostEnsemble CostEnsemble::quadratic(QuadraticEnsemble q) {
    if (q.a.empty() || q.a.size() != q.b.size()) throw InvalidArgument("quadratic ensemble needs matching A_i and b_i");
    const auto d = q.b.front().size();
    for (std::size_t i = 0; i < q.a.size(); ++i) {
        if (q.a[i].rows() != d || q.a[i].cols() != d || q.b[i].size() != d)
            throw InvalidArgument("quadratic ensemble dimensions disagree at agent " + std::to_string(i));
        if ((q.a[i] - q.a[i].transpose()).cwiseAbs().maxCoeff() > 1e-12)
            throw InvalidArgument("A_" + std::to_string(i) + " is not symmetric");
    }
    CostEnsemble e;
    e.agents_ = q.a.size();
    e.dim_ = static_cast<std::size_t>(d);
    e.a_bar_ = Eigen::MatrixXd::Zero(d, d);
    e.b_bar_ = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < q.a.size(); ++i) {
        e.a_bar_ += q.a[i];
        e.b_bar_ += q.b[i];
    }
    e.a_bar_ /= static_cast<double>(e.agents_);
    e.b_bar_ /= static_cast<double>(e.agents_);
    e.data_ = std::move(q);
    e.L = smoothness_constant(e);

    const double mu = min_eigenvalue(e.a_bar_);
    if (mu > 0.0) {
        e.mu = mu;
        auto opt = quadratic_optimum(*e.as_quadratic());
        e.x_star = std::move(opt.x_star);
        e.f_star = opt.f_star;
    }
    return e;
}

CostEnsemble CostEnsemble::logistic(LogisticEnsemble l) {
    if (l.features.empty() || l.features.size() != l.labels.size()) throw InvalidArgument("logistic ensemble is empty");
    CostEnsemble e;
    e.agents_ = l.features.size();
    e.dim_ = l.d;
    e.data_ = std::move(l);
    e.L = smoothness_constant(e);
    return e;
}

void CostEnsemble::check_agent(std::size_t i) const {
    if (i >= agents_) throw InvalidArgument("agent index " + std::to_string(i) + " out of range");
}

void CostEnsemble::check_input(std::size_t i, const Eigen::VectorXd& x) const {
    check_agent(i);
    if (static_cast<std::size_t>(x.size()) != dim_) throw InvalidArgument("model dimension mismatch");
    if (!x.allFinite()) throw NumericalFault(0, i, "non-finite model passed to cost evaluation");
}

std::size_t CostEnsemble::local_samples(std::size_t i) const {
    check_agent(i);
    if (const auto* l = as_logistic()) return static_cast<std::size_t>(l->features[i].rows());
    return 0;
}

double CostEnsemble::value_local(std::size_t i, const Eigen::VectorXd& x) const {
    check_input(i, x);
    if (const auto* q = as_quadratic()) return 0.5 * x.dot(q->a[i] * x) + q->b[i].dot(x);
    const auto& l = *as_logistic();
    const Eigen::VectorXd margins = l.features[i] * x;
    double loss = 0.0;
    for (Eigen::Index r = 0; r < margins.size(); ++r) loss += softplus(-l.labels[i][r] * margins[r]);
    return loss / static_cast<double>(margins.size()) + nonconvex_penalty(x, l.eta);
}

double CostEnsemble::value(const Eigen::VectorXd& x) const {
    if (as_quadratic()) {
        check_input(0, x);
        return 0.5 * x.dot(a_bar_ * x) + b_bar_.dot(x);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < agents_; ++i) total += value_local(i, x);
    return total / static_cast<double>(agents_);
}

Eigen::VectorXd CostEnsemble::grad_local(std::size_t i, const Eigen::VectorXd& x) const {
    check_input(i, x);
    if (const auto* q = as_quadratic()) return q->a[i] * x + q->b[i];
    const auto& l = *as_logistic();
    return logistic_data_grad(l.features[i], l.labels[i], x, {}, true) + nonconvex_penalty_grad(x, l.eta);
}

Eigen::VectorXd CostEnsemble::grad_global_avg(const Eigen::VectorXd& x) const {
    if (as_quadratic()) {
        check_input(0, x);
        return a_bar_ * x + b_bar_;
    }
    Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
    for (std::size_t i = 0; i < agents_; ++i) g += grad_local(i, x);
    return g / static_cast<double>(agents_);
}

Eigen::MatrixXd CostEnsemble::grad_global_avg_rows(const Eigen::MatrixXd& xs) const {
    for (Eigen::Index k = 0; k < xs.rows(); ++k)
        if (!xs.row(k).allFinite()) throw NumericalFault(0, static_cast<std::size_t>(k), "non-finite model");
    if (as_quadratic()) return (xs * a_bar_).rowwise() + b_bar_.transpose();
    const auto& l = *as_logistic();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(xs.cols(), xs.rows());
    const Eigen::MatrixXd xt = xs.transpose();
    for (std::size_t i = 0; i < agents_; ++i) {
        const auto& h = l.features[i];
        const auto& y = l.labels[i];
        Eigen::MatrixXd coef = h * xt;
        for (Eigen::Index c = 0; c < coef.cols(); ++c)
            for (Eigen::Index r = 0; r < coef.rows(); ++r) coef(r, c) = -y[r] * sigmoid(-y[r] * coef(r, c));
        g.noalias() += (h.transpose() * coef) / static_cast<double>(h.rows());
    }
    g /= static_cast<double>(agents_);
    for (Eigen::Index k = 0; k < xs.rows(); ++k) g.col(k) += nonconvex_penalty_grad(xt.col(k), l.eta);
    return g.transpose();
}

Eigen::VectorXd CostEnsemble::grad_rows(std::size_t i, std::span<const std::size_t> rows,
                                        const Eigen::VectorXd& x) const {
    check_input(i, x);
    const auto* l = as_logistic();
    if (!l) throw InvalidArgument("no dataset: mini-batch sampling needs a dataset-backed ensemble");
    if (rows.empty()) throw InvalidArgument("mini-batch must contain at least one row");
    for (std::size_t r : rows)
        if (r >= static_cast<std::size_t>(l->features[i].rows())) throw InvalidArgument("row index out of range");
    return logistic_data_grad(l->features[i], l->labels[i], x, rows, false) + nonconvex_penalty_grad(x, l->eta);
}

double smoothness_constant(const CostEnsemble& e) {
    if (const auto* q = e.as_quadratic()) {
        double best = 0.0;
        for (const auto& a : q->a) best = std::max(best, max_eigenvalue(a));
        return best;
    }
    const auto& l = *e.as_logistic();
    double best = 0.0;
    for (const auto& h : l.features) {
        const Eigen::MatrixXd gram = Eigen::MatrixXd(h.transpose() * h);
        best = std::max(best, max_eigenvalue(gram) / (4.0 * static_cast<double>(h.rows())));
    }
    return best + 2.0 * l.eta;
}

QuadraticOptimum quadratic_optimum(const QuadraticEnsemble& q) {
    if (q.a.empty()) throw InvalidArgument("empty ensemble");
    const auto d = q.a.front().rows();
    Eigen::MatrixXd a_bar = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd b_bar = Eigen::VectorXd::Zero(d);
    for (std::size_t i = 0; i < q.a.size(); ++i) {
        a_bar += q.a[i];
        b_bar += q.b[i];
    }
    a_bar /= static_cast<double>(q.a.size());
    b_bar /= static_cast<double>(q.a.size());
    Eigen::LLT<Eigen::MatrixXd> llt(a_bar);
    if (llt.info() != Eigen::Success) throw InvalidArgument("no unique optimum: average matrix is not positive definite");
    QuadraticOptimum out;
    out.x_star = llt.solve(-b_bar);
    out.f_star = 0.5 * out.x_star.dot(a_bar * out.x_star) + b_bar.dot(out.x_star);
    return out;
}

HeterogeneityProfile parse_profile(const std::string& name) {
    if (name == "gaussian_offsets") return HeterogeneityProfile::gaussian_offsets;
    if (name == "shared_matrix") return HeterogeneityProfile::shared_matrix;
    throw InvalidArgument("unknown heterogeneity profile '" + name + "'");
}

std::string to_string(HeterogeneityProfile p) {
    return p == HeterogeneityProfile::gaussian_offsets ? "gaussian_offsets" : "shared_matrix";
}

QuadraticEnsemble make_synthetic_quadratics(const SyntheticQuadraticSpec& spec) {
    if (spec.n == 0 || spec.d == 0) throw InvalidArgument("synthetic quadratics need n >= 1 and d >= 1");
    if (!(spec.density > 0.0 && spec.density <= 1.0)) throw InvalidArgument("density must lie in (0, 1]");
    if (spec.mu0 < 0.0) throw InvalidArgument("mu0 must be non-negative");
    const auto d = static_cast<Eigen::Index>(spec.d);
    const double entry_std = 1.0 / std::sqrt(spec.density * static_cast<double>(spec.d));

    auto make_spd = [&](std::uint64_t stream) {
        Xoshiro256 rng(hash_key({spec.seed, 1, stream}));
        Eigen::MatrixXd f = Eigen::MatrixXd::Zero(d, d);
        for (Eigen::Index r = 0; r < d; ++r)
            for (Eigen::Index c = 0; c < d; ++c) {
                const bool keep = rng.uniform() < spec.density;
                const double v = rng.normal();
                if (keep) f(r, c) = entry_std * v;
            }
        Eigen::MatrixXd a = f * f.transpose();
        a = 0.5 * (a + a.transpose());
        a.diagonal().array() += spec.mu0;
        return a;
    };

    QuadraticEnsemble q;
    q.a.reserve(spec.n);
    q.b.reserve(spec.n);
    if (spec.profile == HeterogeneityProfile::gaussian_offsets) {
        for (std::size_t i = 0; i < spec.n; ++i) {
            q.a.push_back(make_spd(i));
            Xoshiro256 rng(hash_key({spec.seed, 2, i}));
            Eigen::VectorXd b(d);
            rng.fill_normal(b, std::sqrt(static_cast<double>(i + 1)));
            q.b.push_back(std::move(b));
        }
        return q;
    }

    static constexpr double kBetas[] = {-2.0, -1.0, 0.0, 1.0, 3.0};
    const Eigen::MatrixXd shared = make_spd(0);
    std::vector<std::size_t> order(spec.n);
    for (std::size_t i = 0; i < spec.n; ++i) order[i] = i;
    Xoshiro256 rng(hash_key({spec.seed, 3}));
    for (std::size_t k = spec.n; k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
    std::vector<double> beta(spec.n);
    for (std::size_t k = 0; k < spec.n; ++k) beta[order[k]] = kBetas[k % 5];
    for (std::size_t i = 0; i < spec.n; ++i) {
        q.a.push_back(shared);
        q.b.push_back(Eigen::VectorXd::Constant(d, beta[i]));
    }
    return q;
}

void save_ensemble(std::ostream& os, const CostEnsemble& e) {
    using nlohmann::json;
    json j;
    if (const auto* q = e.as_quadratic()) {
        j["kind"] = "quadratic";
        json a = json::array(), b = json::array();
        for (std::size_t i = 0; i < q->agents(); ++i) {
            json rows = json::array();
            for (Eigen::Index r = 0; r < q->a[i].rows(); ++r) {
                std::vector<double> row(q->a[i].cols());
                for (Eigen::Index c = 0; c < q->a[i].cols(); ++c) row[c] = q->a[i](r, c);
                rows.push_back(row);
            }
            a.push_back(rows);
            b.push_back(std::vector<double>(q->b[i].data(), q->b[i].data() + q->b[i].size()));
        }
        j["a"] = a;
        j["b"] = b;
    } else {
        const auto& l = *e.as_logistic();
        j["kind"] = "logistic";
        j["eta"] = l.eta;
        j["d"] = l.d;
        json agents = json::array();
        for (std::size_t i = 0; i < l.agents(); ++i) {
            json rows = json::array();
            const auto& h = l.features[i];
            for (Eigen::Index r = 0; r < h.rows(); ++r) {
                json feats = json::array();
                for (SparseRows::InnerIterator it(h, r); it; ++it) feats.push_back({it.col(), it.value()});
                rows.push_back({{"label", static_cast<int>(l.labels[i][r])}, {"features", feats}});
            }
            agents.push_back(rows);
        }
        j["agents"] = agents;
    }
    os << j.dump() << '\n';
    if (!os) throw IoError("failed writing ensemble JSON");
}

CostEnsemble load_ensemble(std::istream& is) {
    using nlohmann::json;
    json j;
    try {
        j = json::parse(is);
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "quadratic") {
            QuadraticEnsemble q;
            for (const auto& rows : j.at("a")) {
                const auto d = static_cast<Eigen::Index>(rows.size());
                Eigen::MatrixXd a(d, d);
                for (Eigen::Index r = 0; r < d; ++r) {
                    const auto row = rows.at(r).get<std::vector<double>>();
                    if (static_cast<Eigen::Index>(row.size()) != d) throw InvalidArgument("ensemble JSON: A_i must be square");
                    for (Eigen::Index c = 0; c < d; ++c) a(r, c) = row[c];
                }
                q.a.push_back(std::move(a));
            }
            for (const auto& bj : j.at("b")) {
                const auto v = bj.get<std::vector<double>>();
                q.b.push_back(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
            }
            return CostEnsemble::quadratic(std::move(q));
        }
        if (kind == "logistic") {
            std::vector<LabeledDataset> shards;
            const auto d = j.at("d").get<std::size_t>();
            for (const auto& rows : j.at("agents")) {
                LabeledDataset shard;
                shard.d = d;
                for (const auto& row : rows) {
                    Sample s;
                    s.label = row.at("label").get<int>();
                    for (const auto& f : row.at("features")) s.features.emplace_back(f.at(0).get<std::uint32_t>(), f.at(1).get<double>());
                    shard.rows.push_back(std::move(s));
                }
                shards.push_back(std::move(shard));
            }
            return CostEnsemble::logistic(make_logistic_ensemble(shards, j.at("eta").get<double>()));
        }
        throw InvalidArgument("ensemble JSON: unknown kind '" + kind + "'");
    } catch (const json::exception& ex) {
        throw InvalidArgument(std::string("ensemble JSON: ") + ex.what());
    }
}

}  // namespace gtdsgd
