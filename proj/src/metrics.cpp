// SPDX-License-Identifier: Apache-2.0
#include "gtdsgd/metrics.hpp"

#include <cmath>
#include <ostream>

#include "gtdsgd/error.hpp"
#include "gtdsgd/format.hpp"

namespace gtdsgd {

void RunSet::validate() const {
    if (runs.empty()) throw InvalidArgument("run set is empty");
    const auto& f = runs.front();
    for (const auto& r : runs)
        if (r.T != f.T || r.n != f.n || r.d != f.d || r.alpha.size() != f.alpha.size())
            throw InvalidArgument("runs in a run set must share T, n and d");
}

TailStatistic parse_tail_statistic(const std::string& name) {
    if (name == "mse_to_opt") return TailStatistic::mse_to_opt;
    if (name == "running_stationarity") return TailStatistic::running_stationarity;
    throw InvalidArgument("unknown tail statistic '" + name + "'");
}

std::string to_string(TailStatistic s) {
    return s == TailStatistic::mse_to_opt ? "mse_to_opt" : "running_stationarity";
}

std::vector<double> running_stationarity(const TrajectoryRecord& rec) {
    std::vector<double> out(rec.stationarity_sum.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) {
        acc += rec.stationarity_sum[k];
        out[k] = acc / (static_cast<double>(rec.n) * static_cast<double>(k + 1));
    }
    return out;
}

MetricSeries empirical_tail_probability(const RunSet& rs, TailStatistic stat, double epsilon) {
    if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
    rs.validate();
    const std::size_t T = rs.runs.front().alpha.size();
    MetricSeries out;
    out.name = "tail_" + to_string(stat);
    out.values.assign(T, 0.0);
    for (const auto& r : rs.runs) {
        std::vector<double> values;
        if (stat == TailStatistic::mse_to_opt) {
            if (r.mse_to_opt.size() != T) throw InvalidArgument("optimum unknown: mse statistic not recorded");
            values = r.mse_to_opt;
        } else {
            values = running_stationarity(r);
        }
        for (std::size_t k = 0; k < T; ++k)
            if (values[k] > epsilon) out.values[k] += 1.0;
    }
    const double R = static_cast<double>(rs.R());
    for (double& v : out.values) v /= R;
    out.meta["epsilon"] = epsilon;
    out.meta["floor"] = 1.0 / R;
    out.meta["R"] = R;
    return out;
}

MetricSeries empirical_mse(const RunSet& rs) {
    rs.validate();
    const std::size_t T = rs.runs.front().alpha.size();
    MetricSeries out;
    out.name = "mse";
    out.values.assign(T, 0.0);
    for (const auto& r : rs.runs) {
        if (r.mse_to_opt.size() != T) throw InvalidArgument("optimum unknown: mse statistic not recorded");
        for (std::size_t k = 0; k < T; ++k) out.values[k] += r.mse_to_opt[k];
    }
    for (double& v : out.values) v /= static_cast<double>(rs.R());
    out.meta["R"] = static_cast<double>(rs.R());
    return out;
}

MetricSeries mean_stationarity(const RunSet& rs) {
    rs.validate();
    const std::size_t T = rs.runs.front().alpha.size();
    MetricSeries out;
    out.name = "stationarity";
    out.values.assign(T, 0.0);
    for (const auto& r : rs.runs) {
        const auto g = running_stationarity(r);
        for (std::size_t k = 0; k < T; ++k) out.values[k] += g[k];
    }
    for (double& v : out.values) v /= static_cast<double>(rs.R());
    out.meta["R"] = static_cast<double>(rs.R());
    return out;
}

double consensus_gap(const Eigen::MatrixXd& x) {
    if (x.rows() == 0) return 0.0;
    const Eigen::RowVectorXd mean = x.colwise().mean();
    return (x.rowwise() - mean).squaredNorm() / static_cast<double>(x.rows());
}

double transient_time_nonconvex(double n, double lambda, double rho, double eps_exponent) {
    if (!(lambda >= 0.0 && lambda < 1.0)) throw InvalidArgument("lambda must lie in [0, 1)");
    if (!(eps_exponent > 0.0)) throw InvalidArgument("eps_exponent must be positive");
    if (rho < 0.0) throw InvalidArgument("rho must be non-negative");
    const double network = std::pow(n, 3.0) / std::pow(1.0 - lambda * lambda, 8.0);
    const double relaxed =
        rho == 0.0 ? 0.0 : std::pow(rho, 2.0 / eps_exponent) * std::pow(n, (4.0 + eps_exponent) / eps_exponent);
    return std::max(network, relaxed);
}

double transient_time_pl(double n, double lambda, double a) {
    if (!(a > 2.0)) throw InvalidArgument("transient time for PL costs needs a > 2");
    if (!(lambda >= 0.0 && lambda < 1.0)) throw InvalidArgument("lambda must lie in [0, 1)");
    return std::pow(n, (a + 2.0) / (a - 2.0)) / std::pow(1.0 - lambda * lambda, 4.0 * a / (a - 2.0));
}

std::optional<TailWindow> default_tail_window(const MetricSeries& s, std::size_t R) {
    if (R == 0) throw InvalidArgument("R must be positive");
    const double floor = 1.0 / static_cast<double>(R);
    std::size_t k = 0;
    while (k < s.values.size() && !(s.values[k] < 0.9)) ++k;
    if (k == s.values.size()) return std::nullopt;
    TailWindow w;
    w.t_lo = k + 1;
    std::size_t j = k;
    while (j < s.values.size() && s.values[j] > floor) ++j;
    w.t_hi = j;  // index j is t = j + 1, so the last kept t is j
    if (w.t_hi < w.t_lo) w.t_hi = w.t_lo;
    return w;
}

TailFit tail_decay_fit(const MetricSeries& s, const TailWindow& window) {
    if (window.t_lo < 1 || window.t_hi < window.t_lo || window.t_hi > s.values.size())
        throw InvalidArgument("tail window outside the series");
    TailFit fit;
    fit.window = window;
    std::size_t end = window.t_hi;
    for (std::size_t t = window.t_lo; t <= window.t_hi; ++t)
        if (!(s.values[t - 1] > 0.0)) {
            end = t - 1;
            break;
        }
    fit.trimmed = window.t_hi - end;
    if (end < window.t_lo || end - window.t_lo + 1 < 5) throw InvalidArgument("insufficient tail data");
    fit.window.t_hi = end;

    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    const double m = static_cast<double>(end - window.t_lo + 1);
    for (std::size_t t = window.t_lo; t <= end; ++t) {
        const double x = static_cast<double>(t), y = std::log(s.values[t - 1]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    const double cxx = sxx - sx * sx / m, cxy = sxy - sx * sy / m, cyy = syy - sy * sy / m;
    fit.points = static_cast<std::size_t>(m);
    fit.slope = cxy / cxx;
    fit.intercept = (sy - fit.slope * sx) / m;
    fit.r_squared = cyy <= 1e-300 ? 1.0 : (cxy * cxy) / (cxx * cyy);
    if (cyy <= 1e-300) fit.slope = 0.0;
    return fit;
}

std::optional<std::size_t> first_below(const MetricSeries& s, double threshold) {
    for (std::size_t k = 0; k < s.values.size(); ++k)
        if (s.values[k] < threshold) return k + 1;
    return std::nullopt;
}

void write_series_csv(std::ostream& os, const MetricSeries& s) {
    os << "t,value\n";
    for (std::size_t k = 0; k < s.values.size(); ++k) os << (k + 1) << ',' << format_double(s.values[k]) << '\n';
    if (!os) throw IoError("failed writing series CSV for " + s.name);
}

}  // namespace gtdsgd
