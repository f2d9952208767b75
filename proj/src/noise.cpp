// SPDX-License-Identifier: Apache-2.0
#include "gtdsgd/noise.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "gtdsgd/error.hpp"
#include "gtdsgd/rng.hpp"

namespace gtdsgd {

namespace {

constexpr double kExponentCap = 700.0;

// Floyd's algorithm: k distinct indices from [0, m), returned sorted.
std::vector<std::size_t> sample_without_replacement(Xoshiro256& rng, std::size_t m, std::size_t k) {
    std::unordered_set<std::size_t> chosen;
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t j = m - k; j < m; ++j) {
        const std::size_t t = static_cast<std::size_t>(rng.below(j + 1));
        const std::size_t pick = chosen.count(t) ? j : t;
        chosen.insert(pick);
        out.push_back(pick);
    }
    std::sort(out.begin(), out.end());
    return out;
}

double relaxed_amplitude(const OracleSpec& o, const CostEnsemble& e, const Eigen::VectorXd& x, double alpha) {
    if (o.rho == 0.0) return 1.0;
    const double gnorm = e.grad_global_avg(x).norm();
    return std::sqrt(1.0 + o.rho * std::pow(alpha, 2.0 + o.eps_exponent) * gnorm);
}

}  // namespace

OracleFlavor parse_oracle_flavor(const std::string& name) {
    if (name == "gaussian") return OracleFlavor::gaussian;
    if (name == "minibatch") return OracleFlavor::minibatch;
    if (name == "relaxed_subgaussian") return OracleFlavor::relaxed_subgaussian;
    throw InvalidArgument("unknown oracle flavor '" + name + "'");
}

std::string to_string(OracleFlavor f) {
    switch (f) {
        case OracleFlavor::gaussian: return "gaussian";
        case OracleFlavor::minibatch: return "minibatch";
        case OracleFlavor::relaxed_subgaussian: return "relaxed_subgaussian";
    }
    return "gaussian";
}

double OracleSpec::std_for(std::size_t agent) const {
    if (s.empty()) return 0.0;
    if (s.size() == 1) return s.front();
    if (agent >= s.size()) throw InvalidArgument("no noise std configured for agent " + std::to_string(agent));
    return s[agent];
}

void OracleSpec::validate() const {
    for (double v : s)
        if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("noise std must be finite and non-negative");
    if (!(rho >= 0.0)) throw InvalidArgument("rho must be non-negative");
    if (!(eps_exponent > 0.0)) throw InvalidArgument("eps_exponent must be positive");
    if (flavor == OracleFlavor::minibatch && batch_size == 0) throw InvalidArgument("batch_size must be at least 1");
}

Eigen::VectorXd sample_noise(const OracleSpec& o, const CostEnsemble& e, std::size_t i, const Eigen::VectorXd& x,
                             const OracleKey& key) {
    if (o.flavor == OracleFlavor::minibatch) return sample_gradient(o, e, i, x, key) - e.grad_local(i, x);
    if (i >= e.agents()) throw InvalidArgument("agent index out of range");
    Eigen::VectorXd z(static_cast<Eigen::Index>(e.dim()));
    const double s = o.std_for(i);
    if (s == 0.0) return Eigen::VectorXd::Zero(z.size());
    auto rng = keyed_stream(key.seed, key.run, i, key.iteration);
    double scale = s;
    if (o.flavor == OracleFlavor::relaxed_subgaussian) scale *= relaxed_amplitude(o, e, x, key.alpha);
    rng.fill_normal(z, scale);
    return z;
}

Eigen::VectorXd sample_gradient(const OracleSpec& o, const CostEnsemble& e, std::size_t i, const Eigen::VectorXd& x,
                                const OracleKey& key) {
    if (o.flavor != OracleFlavor::minibatch) return e.grad_local(i, x) + sample_noise(o, e, i, x, key);

    if (!e.has_dataset()) throw InvalidArgument("no dataset: minibatch oracle needs a dataset-backed cost");
    const std::size_t m = e.local_samples(i);
    if (o.batch_size == 0 || o.batch_size > m || (o.batch_size == m && !o.allow_full_batch))
        throw InvalidArgument("batch_size " + std::to_string(o.batch_size) + " must be below the local dataset size " +
                              std::to_string(m));
    auto rng = keyed_stream(key.seed, key.run, i, key.iteration);
    const auto rows = sample_without_replacement(rng, m, o.batch_size);
    return e.grad_rows(i, rows, x);
}

double calibrate_sigma(double s, std::size_t d) {
    if (s < 0.0) throw InvalidArgument("noise std must be non-negative");
    if (d == 0) throw InvalidArgument("dimension must be at least 1");
    if (s == 0.0) return 0.0;
    return 2.0 * s * s / -std::expm1(-2.0 / static_cast<double>(d));
}

MgfEstimate estimate_mgf(const OracleSpec& o, const CostEnsemble& e, std::size_t i, const Eigen::VectorXd& x,
                         double sigma_sq, std::size_t samples, std::uint64_t seed) {
    if (samples < 10000) throw InvalidArgument("estimate_mgf needs at least 1e4 samples");
    if (!(sigma_sq > 0.0)) throw InvalidArgument("sigma_sq must be positive");
    MgfEstimate out;
    double sum = 0.0, sum_sq = 0.0;
    const Eigen::VectorXd grad = o.flavor == OracleFlavor::minibatch ? e.grad_local(i, x) : Eigen::VectorXd();
    for (std::size_t k = 0; k < samples; ++k) {
        OracleKey key{seed, 0, k, 0.0};
        const Eigen::VectorXd z =
            o.flavor == OracleFlavor::minibatch ? Eigen::VectorXd(sample_gradient(o, e, i, x, key) - grad)
                                                : sample_noise(o, e, i, x, key);
        double expo = z.squaredNorm() / sigma_sq;
        if (expo > kExponentCap) {
            expo = kExponentCap;
            ++out.capped;
        }
        const double v = std::exp(expo);
        sum += v;
        sum_sq += v * v;
    }
    const double n = static_cast<double>(samples);
    out.mean = sum / n;
    const double var = std::max(0.0, sum_sq / n - out.mean * out.mean);
    out.std_error = std::sqrt(var / n);
    return out;
}

}  // namespace gtdsgd
