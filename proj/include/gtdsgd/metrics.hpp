// SPDX-License-Identifier: Apache-2.0
//
// Reductions over repeated runs: empirical tail probabilities, empirical MSE,
// stationarity, tail-decay fits and transient-time formulas.
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gtdsgd/algorithms.hpp"

namespace gtdsgd {

struct RunSet {
    std::vector<TrajectoryRecord> runs;
    std::uint64_t config_hash = 0;

    std::size_t R() const noexcept { return runs.size(); }
    std::size_t T() const noexcept { return runs.empty() ? 0 : runs.front().T; }
    /// Throws InvalidArgument when runs disagree on T, n or d.
    void validate() const;
};

struct MetricSeries {
    std::string name;
    std::vector<double> values;  // index k is t = k + 1
    std::map<std::string, double> meta;
};

enum class TailStatistic { mse_to_opt, running_stationarity };

TailStatistic parse_tail_statistic(const std::string& name);
std::string to_string(TailStatistic s);

/// G^t = (1/(n t)) sum_{tau <= t} sum_i ||grad f(x_i^tau)||^2.
std::vector<double> running_stationarity(const TrajectoryRecord& rec);

/// Fraction of runs whose statistic exceeds epsilon at each t. meta carries
/// "epsilon" and the resolution floor "floor" = 1/R.
MetricSeries empirical_tail_probability(const RunSet& rs, TailStatistic stat, double epsilon);

/// (1/(n R)) sum_i sum_r ||x_i^{t,r} - x*||^2. Throws "optimum unknown" without x*.
MetricSeries empirical_mse(const RunSet& rs);

/// Run-average of the running stationarity measure.
MetricSeries mean_stationarity(const RunSet& rs);

/// (1/n) sum_i ||x_i - x_bar||^2 over the rows of x.
double consensus_gap(const Eigen::MatrixXd& x);

double transient_time_nonconvex(double n, double lambda, double rho, double eps_exponent);
/// Requires a > 2.
double transient_time_pl(double n, double lambda, double a);

struct TailWindow {
    std::size_t t_lo = 1;  // inclusive, 1-based
    std::size_t t_hi = 1;
};

/// From the first t with P < 0.9 up to just before P first reaches 1/R.
/// nullopt when the series never drops below 0.9.
std::optional<TailWindow> default_tail_window(const MetricSeries& s, std::size_t R);

struct TailFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::size_t points = 0;
    std::size_t trimmed = 0;  // window points dropped at and after the first zero
    TailWindow window;
};

/// OLS of log P against t on the window, cut before the first zero. Throws
/// InvalidArgument("insufficient tail data") with fewer than 5 positive points.
TailFit tail_decay_fit(const MetricSeries& s, const TailWindow& window);

/// First t (1-based) with value < threshold.
std::optional<std::size_t> first_below(const MetricSeries& s, double threshold);

void write_series_csv(std::ostream& os, const MetricSeries& s);

}  // namespace gtdsgd
