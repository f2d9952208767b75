// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration, multi-run orchestration and output emission.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gtdsgd/algorithms.hpp"
#include "gtdsgd/costs.hpp"
#include "gtdsgd/metrics.hpp"
#include "gtdsgd/noise.hpp"
#include "gtdsgd/theorycheck.hpp"
#include "gtdsgd/topology.hpp"

namespace gtdsgd {

struct TopologySpec {
    GraphKind kind = GraphKind::ring;
    std::size_t n = 10;
    double p = 0.5;                       // erdos_renyi edge probability
    std::optional<double> target_lambda;  // erdos_renyi: tune p instead
    double tol = 0.05;
    std::optional<std::uint64_t> seed;  // default derives from the master seed and n
    std::string matrix_csv;             // load W from a file instead of generating it
};

struct CostSpec {
    std::string kind = "synthetic_quadratic";  // synthetic_quadratic | libsvm | ensemble_json
    std::size_t d = 50;
    HeterogeneityProfile profile = HeterogeneityProfile::gaussian_offsets;
    double density = 0.1;
    double mu0 = 0.1;
    std::optional<std::uint64_t> seed;
    std::string path;  // libsvm / ensemble_json
    double eta = 0.1;
    bool scale = false;  // max-abs feature scaling for libsvm
};

struct MetricSpec {
    std::optional<TailStatistic> statistic;  // default: mse_to_opt when x* is known
    std::vector<double> epsilons{0.01, 0.001};
};

struct CheckToggles {
    bool descent = false;
    bool descent_pl = false;
    bool consensus_bound = false;
    bool tracker_recursion = false;
    bool noise_properties = false;
    std::size_t noise_samples = 100000;

    bool any_trajectory_check() const { return descent || descent_pl || consensus_bound || tracker_recursion; }
    bool any() const { return any_trajectory_check() || noise_properties; }
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;
    std::size_t T = 100;
    std::size_t R = 1;
    std::vector<Algorithm> algorithms{Algorithm::gt_dsgd};
    TopologySpec topology;
    CostSpec cost;
    OracleSpec oracle;
    StepSchedule schedule = StepSchedule::constant(0.1);
    MetricSpec metrics;
    std::size_t stride = 1;   // snapshot stride for the average model
    bool snapshots = false;   // write run-0 average-model snapshots
    std::vector<std::size_t> sweep_n;
    CheckToggles checks;
    std::string out_dir;
    bool svg = true;
    std::string base_dir;  // resolves relative paths; not serialized
};

/// Strict parse: unknown keys and type mismatches throw ConfigError naming the key path.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::string& base_dir = "");
/// Canonical form with every default written out.
nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Reads a JSON config file. Missing files and TOML are ConfigErrors.
ExperimentConfig load_config(const std::string& path);

/// FNV-1a of the canonical config JSON, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

struct SeriesBundle {
    Algorithm algorithm = Algorithm::gt_dsgd;
    std::size_t n = 0;
    double lambda = 0.0;
    std::size_t runs_ok = 0;
    std::vector<std::string> errors;
    std::vector<MetricSeries> series;
};

struct ResultEnvelope {
    nlohmann::json config;
    std::string config_hash;
    std::vector<SeriesBundle> bundles;
    std::vector<CheckReport> checks;
    bool partial = false;
    double wall_seconds = 0.0;  // kept out of the JSON so envelopes stay byte-identical

    nlohmann::json to_json() const;
    static ResultEnvelope from_json(const nlohmann::json& j);
    /// True when any pathwise (non-statistical) check failed.
    bool deterministic_check_failed() const;
};

/// The network and cost for one agent count.
struct Instance {
    std::size_t n = 0;
    std::shared_ptr<const MixingMatrix> w;
    std::shared_ptr<const CostEnsemble> cost;
    std::optional<double> tuned_p;
};

Instance build_instance(const ExperimentConfig& cfg, std::size_t n);

/// Runs seed = hash(master seed, algorithm tag, run index). Results do not
/// depend on `workers`.
ResultEnvelope run_experiment(const ExperimentConfig& cfg, std::size_t workers);

struct EmitFormats {
    bool csv = true;
    bool json = true;
    bool svg = true;
};

/// Writes one CSV per series, envelope.json and SVG charts into `dir`.
/// Returns the written paths in a deterministic order.
std::vector<std::string> emit_outputs(const ResultEnvelope& env, const std::string& dir, const EmitFormats& formats);

}  // namespace gtdsgd
