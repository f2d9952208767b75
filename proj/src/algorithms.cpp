// SPDX-License-Identifier: Apache-2.0
#include "gtdsgd/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "gtdsgd/error.hpp"
#include "gtdsgd/format.hpp"

namespace gtdsgd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_dims(const AlgorithmState& s, const MixingMatrix& w, const CostEnsemble& e) {
    const auto n = static_cast<Eigen::Index>(e.agents());
    const auto d = static_cast<Eigen::Index>(e.dim());
    if (w.w.rows() != n) throw InvalidArgument("mixing matrix size does not match the agent count");
    if (s.x.rows() != n || s.x.cols() != d || s.y.rows() != n || s.y.cols() != d || s.g_prev.rows() != n ||
        s.g_prev.cols() != d)
        throw InvalidArgument("state dimensions do not match the cost ensemble");
    if (s.t < 1) throw InvalidArgument("iteration counter starts at 1");
}

// Oracle outputs for every agent at the current models.
Eigen::MatrixXd sample_all(const AlgorithmState& s, const OracleSpec& o, const CostEnsemble& e, double alpha,
                           const StepKey& key, Eigen::MatrixXd* noise) {
    const auto n = s.x.rows();
    Eigen::MatrixXd g(n, s.x.cols());
    if (noise) noise->resize(n, s.x.cols());
    const OracleKey okey{key.seed, key.run, s.t, alpha};
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd xi = s.x.row(i).transpose();
        const auto agent = static_cast<std::size_t>(i);
        if (o.flavor == OracleFlavor::minibatch) {
            g.row(i) = sample_gradient(o, e, agent, xi, okey).transpose();
            if (noise) noise->row(i) = g.row(i) - e.grad_local(agent, xi).transpose();
        } else {
            const Eigen::VectorXd z = sample_noise(o, e, agent, xi, okey);
            g.row(i) = (e.grad_local(agent, xi) + z).transpose();
            if (noise) noise->row(i) = z.transpose();
        }
        if (!g.row(i).allFinite()) throw NumericalFault(s.t, agent, "non-finite stochastic gradient");
    }
    return g;
}

void check_finite(const Eigen::MatrixXd& m, std::size_t t, const char* what) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        if (!m.row(i).allFinite()) throw NumericalFault(t, static_cast<std::size_t>(i), what);
}

double row_dispersion(const Eigen::MatrixXd& m) {
    const Eigen::RowVectorXd mean = m.colwise().mean();
    return (m.rowwise() - mean).squaredNorm() / static_cast<double>(m.rows());
}

double inf_if_zero_den(double num, double den) { return den == 0.0 ? kInf : num / den; }

}  // namespace

Algorithm parse_algorithm(const std::string& name) {
    if (name == "gt_dsgd") return Algorithm::gt_dsgd;
    if (name == "dsgd") return Algorithm::dsgd;
    throw InvalidArgument("unknown algorithm '" + name + "'");
}

std::string to_string(Algorithm a) { return a == Algorithm::gt_dsgd ? "gt_dsgd" : "dsgd"; }

AlgorithmState initial_state(std::size_t n, const Eigen::VectorXd& x0) {
    if (n == 0) throw InvalidArgument("need at least one agent");
    Eigen::MatrixXd x1(static_cast<Eigen::Index>(n), x0.size());
    x1.rowwise() = x0.transpose();
    return initial_state(x1);
}

AlgorithmState initial_state(const Eigen::MatrixXd& x1) {
    AlgorithmState s;
    s.x = x1;
    s.y = Eigen::MatrixXd::Zero(x1.rows(), x1.cols());
    s.g_prev = Eigen::MatrixXd::Zero(x1.rows(), x1.cols());
    s.t = 1;
    return s;
}

StepSchedule StepSchedule::constant(double alpha) {
    StepSchedule s;
    s.kind = Kind::constant;
    s.alpha = alpha;
    s.validate();
    return s;
}

StepSchedule StepSchedule::inverse_time(double a, double mu, double t0) {
    StepSchedule s;
    s.kind = Kind::inverse_time;
    s.a = a;
    s.mu = mu;
    s.t0 = t0;
    s.validate();
    return s;
}

double StepSchedule::at(std::size_t t) const {
    if (kind == Kind::constant) return alpha;
    return a / (mu * (static_cast<double>(t) + t0));
}

void StepSchedule::validate() const {
    if (kind == Kind::constant) {
        if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("constant step-size must be positive");
        return;
    }
    if (!(a > 0.0) || !(mu > 0.0)) throw InvalidArgument("inverse-time schedule needs a > 0 and mu > 0");
    if (!(t0 > -1.0)) throw InvalidArgument("inverse-time schedule needs t0 > -1");
}

AlgorithmState gt_dsgd_step(AlgorithmState s, const MixingMatrix& w, const OracleSpec& o, const CostEnsemble& e,
                            const StepSchedule& sched, const StepKey& key, StepDetail* detail) {
    check_dims(s, w, e);
    const double alpha = sched.at(s.t);
    Eigen::MatrixXd g = sample_all(s, o, e, alpha, key, detail ? &detail->noise : nullptr);
    s.y = w.w * (s.y + g - s.g_prev);
    check_finite(s.y, s.t, "non-finite tracker");
    s.x = w.w * (s.x - alpha * s.y);
    check_finite(s.x, s.t, "non-finite model");
    if (detail) {
        detail->g = g;
        detail->alpha = alpha;
    }
    s.g_prev = std::move(g);
    ++s.t;
    return s;
}

AlgorithmState dsgd_step(AlgorithmState s, const MixingMatrix& w, const OracleSpec& o, const CostEnsemble& e,
                         const StepSchedule& sched, const StepKey& key, StepDetail* detail) {
    check_dims(s, w, e);
    const double alpha = sched.at(s.t);
    Eigen::MatrixXd g = sample_all(s, o, e, alpha, key, detail ? &detail->noise : nullptr);
    s.x = w.w * (s.x - alpha * g);
    check_finite(s.x, s.t, "non-finite model");
    if (detail) {
        detail->g = g;
        detail->alpha = alpha;
    }
    s.g_prev = std::move(g);
    ++s.t;
    return s;
}

void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& rec) {
    const bool mse = !rec.mse_to_opt.empty();
    os << "t,alpha_t,f_avg";
    if (mse) os << ",mse_to_opt";
    os << ",consensus_gap,tracker_gap,stationarity_sum\n";
    for (std::size_t k = 0; k < rec.alpha.size(); ++k) {
        os << (k + 1) << ',' << format_double(rec.alpha[k]) << ',' << format_double(rec.f_avg[k]);
        if (mse) os << ',' << format_double(rec.mse_to_opt[k]);
        os << ',' << format_double(rec.consensus_gap[k]) << ',' << format_double(rec.tracker_gap[k]) << ','
           << format_double(rec.stationarity_sum[k]) << '\n';
    }
    if (!os) throw IoError("failed writing trajectory CSV");
}

TrajectoryRecord run(Algorithm alg, const RunConfig& cfg, std::uint64_t seed, std::uint64_t run_id) {
    if (!cfg.w || !cfg.cost) throw InvalidArgument("run config needs a mixing matrix and a cost ensemble");
    const auto& w = *cfg.w;
    const auto& e = *cfg.cost;
    cfg.oracle.validate();
    cfg.schedule.validate();
    const std::size_t n = e.agents(), d = e.dim();
    if (w.size() != n) throw InvalidArgument("mixing matrix size does not match the agent count");

    AlgorithmState state;
    if (cfg.x_init.size() == 0) {
        state = initial_state(n, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)));
    } else {
        if (cfg.x_init.rows() != static_cast<Eigen::Index>(n) || cfg.x_init.cols() != static_cast<Eigen::Index>(d))
            throw InvalidArgument("x_init must be n x d");
        state = initial_state(cfg.x_init);
    }

    TrajectoryRecord rec;
    rec.algorithm = alg;
    rec.n = n;
    rec.d = d;
    rec.T = cfg.T;
    rec.seed = seed;
    rec.run_id = run_id;
    rec.alpha.reserve(cfg.T);
    rec.f_avg.reserve(cfg.T);
    rec.consensus_gap.reserve(cfg.T);
    rec.tracker_gap.reserve(cfg.T);
    rec.stationarity_sum.reserve(cfg.T);
    if (e.x_star) rec.mse_to_opt.reserve(cfg.T);
    if (cfg.record_trace) rec.trace.emplace();

    const std::size_t stride = cfg.snapshot_stride > 0 ? cfg.snapshot_stride : (n * d <= 10000 ? 1 : 10);
    const StepKey key{seed, run_id};
    StepDetail detail;

    try {
        for (std::size_t t = 1; t <= cfg.T; ++t) {
            const Eigen::VectorXd x_bar = state.x.colwise().mean().transpose();
            rec.f_avg.push_back(e.value(x_bar));
            if (e.x_star) rec.mse_to_opt.push_back((state.x.rowwise() - e.x_star->transpose()).squaredNorm() / n);
            rec.consensus_gap.push_back(row_dispersion(state.x));
            rec.stationarity_sum.push_back(e.grad_global_avg_rows(state.x).squaredNorm());
            if ((t - 1) % stride == 0) {
                Snapshot snap{t, x_bar, {}, {}};
                if (cfg.full_snapshots) {
                    snap.x = state.x;
                    snap.y = state.y;
                }
                rec.snapshots.push_back(std::move(snap));
            }
            if (rec.trace) rec.trace->x.push_back(state.x);

            StepDetail* det = rec.trace ? &detail : nullptr;
            state = alg == Algorithm::gt_dsgd ? gt_dsgd_step(std::move(state), w, cfg.oracle, e, cfg.schedule, key, det)
                                              : dsgd_step(std::move(state), w, cfg.oracle, e, cfg.schedule, key, det);
            rec.alpha.push_back(cfg.schedule.at(t));
            rec.tracker_gap.push_back(alg == Algorithm::gt_dsgd ? row_dispersion(state.y) : 0.0);
            if (rec.trace) {
                rec.trace->y.push_back(state.y);
                rec.trace->z.push_back(detail.noise);
                rec.trace->alpha.push_back(detail.alpha);
            }
        }
    } catch (const NumericalFault& ex) {
        throw NumericalFault(ex.iteration(), ex.agent(),
                             to_string(alg) + " run " + std::to_string(run_id) + " (seed " + std::to_string(seed) +
                                 ") aborted: " + ex.what());
    }
    if (rec.trace) rec.trace->x.push_back(state.x);
    rec.final_state = std::move(state);
    return rec;
}

StepCapResult nonconvex_step_cap(const NonconvexStepParams& p) {
    if (!(p.L > 0.0)) throw InvalidArgument("L must be positive");
    if (!(p.lambda >= 0.0 && p.lambda < 1.0)) throw InvalidArgument("lambda must lie in [0, 1)");
    if (!(p.n >= 1.0) || !(p.T >= 1.0)) throw InvalidArgument("n and T must be at least 1");
    if (p.sigma_sq < 0.0 || p.sigma_max_sq < 0.0 || p.rho < 0.0 || !(p.eps_exponent > 0.0) || !(p.d >= 1.0))
        throw InvalidArgument("noise parameters out of range");

    const double l = p.lambda, l2 = l * l, gap = 1.0 - l2, L = p.L, n = p.n;
    const double sigma = std::sqrt(p.sigma_sq), sigma_max = std::sqrt(p.sigma_max_sq);
    StepCapResult out;
    auto add = [&](const char* name, double v) { out.terms.push_back({name, v}); };
    add("consensus", inf_if_zero_den(gap * gap, 16.0 * l2 * L * std::sqrt(3.0)));
    add("tracker_quartic", inf_if_zero_den(gap, 4.0 * l * L * std::pow(12.0, 0.25)));
    add("tracker_cubic", inf_if_zero_den(std::pow(gap, 4.0 / 3.0), 4.0 * std::pow(l, 4.0 / 3.0) * L * std::cbrt(12.0)));
    add("noise_network", inf_if_zero_den(std::cbrt(n) * std::pow(gap, 4.0 / 3.0),
                                         std::pow(l, 4.0 / 3.0) * std::pow(sigma_max, 2.0 / 3.0) *
                                             std::pow(L, 2.0 / 3.0) * std::cbrt(1614.0)));
    add("smoothness", 1.0 / (4.0 * L));
    add("noise_dimension", p.sigma_sq == 0.0 ? kInf
                                             : n / (9.0 * p.sigma_sq) *
                                                   std::sqrt(n / (282.0 * std::exp(1.0) * p.sigma_sq * p.d * L)));
    add("relaxed_scale", inf_if_zero_den(sigma * std::sqrt(32.0), p.rho));
    add("relaxed_power",
        p.rho == 0.0 ? kInf : std::pow(1.0 / (16.0 * n * p.rho * p.rho), 1.0 / (1.0 + p.eps_exponent)));

    out.C = kInf;
    for (const auto& t : out.terms) out.C = std::min(out.C, t.value);
    out.alpha = std::min(std::sqrt(n) / std::sqrt(p.T), out.C);
    return out;
}

T0Result pl_t0_floor(const PlT0Params& p) {
    if (!(p.a >= 6.0)) throw InvalidArgument("the PL schedule requires a >= 6");
    if (!(p.mu > 0.0) || !(p.L > 0.0)) throw InvalidArgument("mu and L must be positive");
    if (!(p.lambda >= 0.0 && p.lambda < 1.0)) throw InvalidArgument("lambda must lie in [0, 1)");
    if (!(p.n >= 1.0)) throw InvalidArgument("n must be at least 1");
    if (p.sigma_sq < 0.0 || p.sigma_max_sq < 0.0 || p.rho < 0.0 || !(p.eps_exponent > 0.0))
        throw InvalidArgument("noise parameters out of range");

    const double a = p.a, n = p.n, L = p.L, mu = p.mu, l = p.lambda, l2 = l * l, gap = 1.0 - l2, e = p.eps_exponent;
    const double kappa = L / mu, sigma = std::sqrt(p.sigma_sq), smax_sq = p.sigma_max_sq, rho = p.rho;
    T0Result out;
    auto add = [&](const char* name, double v) { out.terms.push_back({name, v}); };
    add("network", 12.0 / gap);
    add("network_kappa", 64.0 * n * a * a * a * kappa * kappa * kappa * l2 * L / std::pow(gap, 4.0));
    add("noise_max", 9216.0 * smax_sq * smax_sq * l2 * l2 / (n * n));
    add("kappa_quartic", 576.0 * std::pow(a, 4.0) * kappa * kappa / (mu * mu));
    add("noise_avg", 384.0 * a * a * p.sigma_sq * kappa / mu);
    add("relaxed_L", rho == 0.0 ? 0.0 : a * std::pow(12.0 * rho * rho * L, 1.0 / (4.0 + 2.0 * e)) / mu);
    add("relaxed_L2", rho == 0.0 ? 0.0 : a * std::pow(18.0 * rho * rho * L * L, 1.0 / (5.0 + 2.0 * e)) / mu);
    add("condition", 2.0 * a * kappa);
    add("mu", 6.0 * a / mu);
    add("speedup", 2.0 * a * std::sqrt(L) *
                       std::max({4.0 * sigma * std::sqrt(3.0), 3.0 * std::sqrt(2.0 * L),
                                 48.0 * sigma * l * std::sqrt(3.0 * L)}) /
                       (mu * std::sqrt(n)));
    double relaxed_sigma = 0.0;
    if (rho > 0.0) {
        const double inv = p.sigma_sq == 0.0 ? kInf : 1.0 / std::pow(32.0 * p.sigma_sq, 1.0 / (2.0 + e));
        relaxed_sigma = a * std::pow(rho, 1.0 / (2.0 + e)) * std::max(std::pow(smax_sq, 1.0 / (2.0 + e)), inv) / mu;
    }
    add("relaxed_sigma", relaxed_sigma);
    add("relaxed_n", rho == 0.0 ? 0.0
                                : a * std::pow(4.0 * n * rho, 1.0 / (1.0 + e)) *
                                      std::max({1.0, 1.0 / std::pow(mu, 1.0 / (1.0 + e)),
                                                std::pow(4.0 * kappa, 1.0 / (1.0 + e))}) /
                                      mu);
    add("condition_network", 2.0 * a * kappa * std::max(3.0 * L, 640.0 * l2));
    add("tracker", 2.0 * a * l * kappa * std::sqrt(3.0) *
                       std::max(std::sqrt(kappa), 8.0 * l * L * std::sqrt(5.0)) / (gap * gap));

    out.t0 = 0.0;
    for (const auto& t : out.terms) out.t0 = std::max(out.t0, t.value);
    return out;
}

}  // namespace gtdsgd
