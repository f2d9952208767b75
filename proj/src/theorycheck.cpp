// SPDX-License-Identifier: Apache-2.0
#include "gtdsgd/theorycheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "gtdsgd/error.hpp"
#include "gtdsgd/rng.hpp"

namespace gtdsgd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kAlphaSlack = 1e-12;

const NoiseTrace& require_trace(const TrajectoryRecord& rec) {
    if (!rec.trace) throw InvalidArgument("check needs a recorded noise trace");
    if (rec.trace->x.size() != rec.trace->z.size() + 1 || rec.trace->y.size() != rec.trace->z.size())
        throw InvalidArgument("noise trace is inconsistent");
    return *rec.trace;
}

double constant_alpha(const NoiseTrace& tr) {
    if (tr.alpha.empty()) return 0.0;
    const double a = tr.alpha.front();
    for (double v : tr.alpha)
        if (v != a) throw InvalidArgument("check requires a constant step-size");
    return a;
}

Eigen::VectorXd row_mean(const Eigen::MatrixXd& m) { return m.colwise().mean().transpose(); }

double dispersion_sum(const Eigen::MatrixXd& m) {
    const Eigen::RowVectorXd mean = m.colwise().mean();
    return (m.rowwise() - mean).squaredNorm();
}

// (1/n) sum_i grad f_i(x_i).
Eigen::VectorXd mean_local_grad(const CostEnsemble& e, const Eigen::MatrixXd& x) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) g += e.grad_local(static_cast<std::size_t>(i), x.row(i).transpose());
    return g / static_cast<double>(x.rows());
}

CheckReport make_report(const std::string& name) {
    CheckReport r;
    r.name = name;
    r.worst_slack = kInf;
    return r;
}

}  // namespace

void CheckReport::record(std::uint64_t run, std::size_t t, double slack) {
    ++instances;
    worst_slack = std::min(worst_slack, slack);
    if (!(slack >= tolerance)) {
        passed = false;
        if (violations.size() < 100) violations.push_back({run, t, slack});
    }
}

void CheckReport::merge(const CheckReport& other) {
    if (instances == 0 && violations.empty()) worst_slack = other.worst_slack;
    else worst_slack = std::min(worst_slack, other.worst_slack);
    instances += other.instances;
    passed = passed && other.passed;
    for (const auto& v : other.violations)
        if (violations.size() < 100) violations.push_back(v);
    for (const auto& [k, v] : other.details) details[k] = v;
}

CheckReport check_descent(const TrajectoryRecord& rec, const CostEnsemble& e) {
    const auto& tr = require_trace(rec);
    const double alpha = constant_alpha(tr), L = e.L;
    if (alpha > 1.0 / (4.0 * L) * (1.0 + kAlphaSlack))
        throw InvalidArgument("descent check needs alpha <= 1/(4L)");
    auto rep = make_report("descent");
    const double n = static_cast<double>(rec.n);
    for (std::size_t k = 0; k < tr.z.size(); ++k) {
        const Eigen::VectorXd xb = row_mean(tr.x[k]);
        const Eigen::VectorXd xb_next = row_mean(tr.x[k + 1]);
        const Eigen::VectorXd grad = e.grad_global_avg(xb);
        const Eigen::VectorXd zb = row_mean(tr.z[k]);
        const Eigen::VectorXd gbar = mean_local_grad(e, tr.x[k]);
        const double rhs = e.value(xb) - alpha / 2.0 * grad.squaredNorm() - alpha * grad.dot(zb) +
                           alpha * alpha * L * zb.squaredNorm() +
                           alpha * L * L / (2.0 * n) * dispersion_sum(tr.x[k]) - alpha / 4.0 * gbar.squaredNorm();
        rep.record(rec.run_id, k + 1, rhs - e.value(xb_next));
    }
    rep.details["alpha"] = alpha;
    rep.details["L"] = L;
    return rep;
}

CheckReport check_descent_pl(const TrajectoryRecord& rec, const CostEnsemble& e) {
    const auto& tr = require_trace(rec);
    if (!e.mu || !e.f_star) throw InvalidArgument("PL descent check needs mu and f*");
    const double L = e.L, mu = *e.mu, fs = *e.f_star;
    for (double a : tr.alpha)
        if (a > 1.0 / (2.0 * L) * (1.0 + kAlphaSlack)) throw InvalidArgument("PL descent check needs alpha_t <= 1/(2L)");
    auto rep = make_report("descent_pl");
    const double n = static_cast<double>(rec.n);
    for (std::size_t k = 0; k < tr.z.size(); ++k) {
        const double alpha = tr.alpha[k];
        const Eigen::VectorXd xb = row_mean(tr.x[k]);
        const Eigen::VectorXd xb_next = row_mean(tr.x[k + 1]);
        const Eigen::VectorXd grad = e.grad_global_avg(xb);
        const Eigen::VectorXd zb = row_mean(tr.z[k]);
        const double rhs = (1.0 - alpha * mu) * (e.value(xb) - fs) - alpha * grad.dot(zb) +
                           alpha * alpha * L * zb.squaredNorm() + alpha * L * L / (2.0 * n) * dispersion_sum(tr.x[k]);
        rep.record(rec.run_id, k + 1, rhs - (e.value(xb_next) - fs));
    }
    rep.details["mu"] = mu;
    rep.details["L"] = L;
    return rep;
}

CheckReport check_consensus_bound(const TrajectoryRecord& rec, const MixingMatrix& w, const CostEnsemble& e) {
    if (rec.algorithm != Algorithm::gt_dsgd) throw InvalidArgument("consensus bound applies to GT-DSGD trajectories");
    const auto& tr = require_trace(rec);
    const double alpha = constant_alpha(tr), L = e.L, l2 = w.lambda * w.lambda, gap = 1.0 - l2;
    const double cap = l2 == 0.0 ? kInf : gap * gap / (16.0 * l2 * L * std::sqrt(3.0));
    if (alpha > cap * (1.0 + kAlphaSlack)) throw InvalidArgument("consensus bound needs alpha within its cap");
    auto rep = make_report("consensus_bound");
    if (tr.z.empty()) return rep;
    const double n = static_cast<double>(rec.n);
    const double a2 = alpha * alpha, l4 = l2 * l2, gap3 = gap * gap * gap, gap4 = gap3 * gap;
    const double delta_x = dispersion_sum(tr.x[0]) / n;
    const double fixed = 4.0 * delta_x / gap + 32.0 * a2 * l2 / (n * gap3) * dispersion_sum(tr.y[0]);
    double lhs = 0.0, noise_sum = 0.0, grad_sum = 0.0;
    for (std::size_t k = 0; k < tr.z.size(); ++k) {
        lhs += dispersion_sum(tr.x[k]) / n;
        noise_sum += tr.z[k].squaredNorm();
        grad_sum += mean_local_grad(e, tr.x[k]).squaredNorm() + row_mean(tr.z[k]).squaredNorm();
        if (k == 0) continue;  // the bound is stated for T >= 2
        const double rhs =
            fixed + 512.0 * a2 * l4 / (n * gap4) * noise_sum + 768.0 * a2 * a2 * l4 * L * L / gap4 * grad_sum;
        rep.record(rec.run_id, k + 1, rhs - lhs);
    }
    rep.details["alpha"] = alpha;
    rep.details["cap"] = cap;
    return rep;
}

CheckReport check_tracker_recursion(const TrajectoryRecord& rec, const MixingMatrix& w, const CostEnsemble& e) {
    if (rec.algorithm != Algorithm::gt_dsgd) throw InvalidArgument("tracker recursion applies to GT-DSGD trajectories");
    const auto& tr = require_trace(rec);
    const double alpha = constant_alpha(tr), L = e.L, l2 = w.lambda * w.lambda, gap = 1.0 - l2;
    const double cap = l2 == 0.0 ? kInf : std::pow(gap, 1.5) / (4.0 * l2 * L * std::sqrt(6.0));
    if (alpha > cap * (1.0 + kAlphaSlack)) throw InvalidArgument("tracker recursion needs alpha within its cap");
    auto rep = make_report("tracker_recursion");
    const double n = static_cast<double>(rec.n);
    for (std::size_t k = 0; k + 1 < tr.z.size(); ++k) {
        const Eigen::VectorXd gbar = mean_local_grad(e, tr.x[k]) + row_mean(tr.z[k]);
        const double rhs = (3.0 + l2) / 4.0 * dispersion_sum(tr.y[k]) +
                           24.0 * l2 * L * L / gap * dispersion_sum(tr.x[k]) +
                           4.0 * l2 / gap * (tr.z[k + 1] - tr.z[k]).squaredNorm() +
                           12.0 * alpha * alpha * l2 * L * L / gap * n * gbar.squaredNorm();
        rep.record(rec.run_id, k + 1, rhs - dispersion_sum(tr.y[k + 1]));
    }
    rep.details["alpha"] = alpha;
    rep.details["cap"] = cap;
    return rep;
}

CheckReport check_noise_properties(const OracleSpec& o, const CostEnsemble& e, const std::vector<Eigen::VectorXd>& grid,
                                   std::size_t samples, std::uint64_t seed) {
    if (samples < 100000) throw InvalidArgument("noise property check needs at least 1e5 samples");
    if (o.flavor == OracleFlavor::minibatch || o.rho != 0.0)
        throw InvalidArgument("noise property check needs Gaussian-type noise with rho = 0");
    if (grid.empty()) throw InvalidArgument("noise property check needs at least one grid point");
    o.validate();

    const std::size_t n = e.agents(), d = e.dim();
    std::vector<double> sigma_sq(n);
    double sigma_avg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sigma_sq[i] = calibrate_sigma(o.std_for(i), d);
        sigma_avg += sigma_sq[i] / static_cast<double>(n);
    }

    auto rep = make_report("noise_properties");
    const double N = static_cast<double>(samples);
    const double mgf_bound = 2.0 * static_cast<double>(d) * std::exp(1.0);
    double worst_tail = kInf, worst_moment = kInf, worst_mgf = kInf;

    for (std::size_t g = 0; g < grid.size(); ++g) {
        const Eigen::VectorXd& x = grid[g];
        // per agent: exceedance counts at k sigma, k = 1..3, and sums of ||z||^{2p}, p = 1..3
        std::vector<std::array<double, 3>> exceed(n, {0, 0, 0});
        std::vector<std::array<double, 3>> mom(n, {0, 0, 0}), mom_sq(n, {0, 0, 0});
        double mgf_sum = 0.0, mgf_sq = 0.0;
        Eigen::VectorXd zsum(static_cast<Eigen::Index>(d));
        for (std::size_t k = 0; k < samples; ++k) {
            zsum.setZero();
            const OracleKey key{hash_key({seed, g}), 0, k, 0.0};
            for (std::size_t i = 0; i < n; ++i) {
                const Eigen::VectorXd z = sample_noise(o, e, i, x, key);
                zsum += z;
                const double r2 = z.squaredNorm();
                for (int m = 0; m < 3; ++m)
                    if (r2 > (m + 1.0) * (m + 1.0) * sigma_sq[i]) exceed[i][m] += 1.0;
                double pw = 1.0;
                for (int p = 0; p < 3; ++p) {
                    pw *= r2;
                    mom[i][p] += pw;
                    mom_sq[i][p] += pw * pw;
                }
            }
            if (sigma_avg > 0.0) {
                const Eigen::VectorXd zb = zsum / static_cast<double>(n);
                const double v = std::exp(std::min(700.0, static_cast<double>(n) * zb.squaredNorm() / (96.0 * sigma_avg)));
                mgf_sum += v;
                mgf_sq += v * v;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (int m = 0; m < 3; ++m) {
                const double eps = (m + 1.0);  // in units of sigma
                const double bound = 2.0 * std::exp(-eps * eps / 2.0);
                const double p_hat = exceed[i][m] / N;
                const double se = std::sqrt(p_hat * (1.0 - p_hat) / N);
                const double slack = bound + 3.0 * se - p_hat;
                worst_tail = std::min(worst_tail, slack);
                rep.record(g, i, slack);
            }
            for (int p = 1; p <= 3; ++p) {
                const double mean = mom[i][p - 1] / N;
                const double var = std::max(0.0, mom_sq[i][p - 1] / N - mean * mean);
                const double bound = std::pow(2.0 * p, p + 1.0) * std::pow(sigma_sq[i], p);
                const double slack = bound + 3.0 * std::sqrt(var / N) - mean;
                worst_moment = std::min(worst_moment, slack / std::max(bound, 1e-300));
                rep.record(g, i, slack);
            }
        }
        if (sigma_avg > 0.0) {
            const double mean = mgf_sum / N;
            const double se = std::sqrt(std::max(0.0, mgf_sq / N - mean * mean) / N);
            const double slack = mgf_bound + 3.0 * se - mean;
            worst_mgf = std::min(worst_mgf, slack);
            rep.record(g, n, slack);
            rep.details["averaged_mgf"] = mean;
        }
    }
    rep.details["tail_margin"] = worst_tail;
    rep.details["moment_margin_relative"] = worst_moment;
    if (std::isfinite(worst_mgf)) rep.details["mgf_margin"] = worst_mgf;
    rep.details["sigma_sq_avg"] = sigma_avg;
    return rep;
}

}  // namespace gtdsgd
