// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gtdsgd/error.hpp"
#include "gtdsgd/harness.hpp"
#include "gtdsgd/rng.hpp"
#include "support.hpp"

using namespace gtdsgd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("gtdsgd_test_" + name);
    fs::remove_all(p);
    return p;
}

ExperimentConfig small_config() {
    return config_from_json(json::parse(R"({
        "name": "small", "seed": 4, "T": 60, "R": 6,
        "algorithms": ["gt_dsgd", "dsgd"],
        "topology": {"kind": "ring", "n": 5},
        "cost": {"kind": "synthetic_quadratic", "d": 4},
        "oracle": {"flavor": "gaussian", "s": 0.2},
        "schedule": {"kind": "inverse_time", "a": 1, "mu": 1, "t0": 1},
        "metrics": {"epsilons": [0.5, 0.05]}
    })"));
}

std::string config_error(const std::string& text) {
    try {
        config_from_json(json::parse(text));
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("minimal config fills documented defaults") {
    const auto cfg = config_from_json(json::object());
    CHECK(cfg.R == 1);
    CHECK(cfg.stride == 1);
    CHECK(cfg.T == 100);
    CHECK(cfg.algorithms == std::vector<Algorithm>{Algorithm::gt_dsgd});
    CHECK(cfg.metrics.epsilons == std::vector<double>{0.01, 0.001});
}

TEST_CASE("unknown and mistyped keys are errors naming the key path") {
    CHECK(config_error(R"({"stepsize": {"alpha": 0.1}})").find("stepsize") != std::string::npos);
    CHECK(config_error(R"({"topology": {"kind": "ring", "nn": 3}})").find("topology.nn") != std::string::npos);
    CHECK(config_error(R"({"T": "many"})").find("'T'") != std::string::npos);
    CHECK(config_error(R"({"topology": {"kind": "torus"}})").find("topology.kind") != std::string::npos);
    CHECK(config_error(R"({"schedule": {"kind": "cosine"}})").find("schedule.kind") != std::string::npos);
    CHECK(config_error(R"({"R": 0})").find("'R'") != std::string::npos);
    CHECK(config_error(R"({"cost": {"kind": "libsvm"}})").find("cost.path") != std::string::npos);
    CHECK(config_error(R"({"algorithms": []})").find("algorithms") != std::string::npos);
}

TEST_CASE("missing files and TOML configs are config errors") {
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
    CHECK_THROWS_AS(load_config("missing.toml"), ConfigError);
}

TEST_CASE("canonical JSON round-trips") {
    const auto cfg = small_config();
    const json canon = config_to_json(cfg);
    CHECK(config_to_json(config_from_json(canon)) == canon);
    CHECK(config_hash(config_from_json(canon)) == config_hash(cfg));
    auto other = cfg;
    other.seed += 1;
    CHECK(config_hash(other) != config_hash(cfg));
    other = cfg;
    other.out_dir = "elsewhere";
    CHECK(config_hash(other) == config_hash(cfg));
}

TEST_CASE("shipped example configs load") {
    for (const char* name : {"fig1_synthetic_tails", "fig2_synthetic_speedup", "fig3_real_tails", "fig4_real_speedup"}) {
        const auto cfg = load_config(std::string(GTDSGD_CONFIG_DIR) + "/" + name + ".json");
        CHECK(cfg.name == name);
    }
}

TEST_CASE("results do not depend on the worker count") {
    const auto cfg = small_config();
    const auto a = run_experiment(cfg, 1);
    const auto b = run_experiment(cfg, 4);
    CHECK(a.to_json().dump() == b.to_json().dump());
    CHECK_FALSE(a.partial);
    REQUIRE(a.bundles.size() == 2);
    CHECK(a.bundles[0].runs_ok == 6);
}

TEST_CASE("envelope carries tails for every algorithm and threshold") {
    const auto env = run_experiment(small_config(), 2);
    for (const auto& b : env.bundles) {
        int tails = 0;
        for (const auto& s : b.series) {
            CHECK(s.values.size() == 60);
            if (s.name.rfind("tail_mse_to_opt_eps", 0) == 0) ++tails;
        }
        CHECK(tails == 2);
    }
    CHECK(env.config_hash == config_hash(small_config()));
    CHECK(env.config.at("seed") == 4);
}

TEST_CASE("R = 1 gives indicator tails") {
    auto cfg = small_config();
    cfg.R = 1;
    for (const auto& b : run_experiment(cfg, 1).bundles)
        for (const auto& s : b.series)
            if (s.name.rfind("tail_", 0) == 0)
                for (double v : s.values) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("run seeds are shared across network sizes") {
    auto cfg = small_config();
    cfg.R = 2;
    cfg.sweep_n = {4, 8};
    const auto env = run_experiment(cfg, 1);
    CHECK(env.bundles.size() == 4);
    CHECK(env.bundles[0].n == 4);
    CHECK(env.bundles[2].n == 8);
}

TEST_CASE("failed runs mark the envelope partial") {
    auto cfg = small_config();
    cfg.schedule = StepSchedule::constant(80.0);
    cfg.T = 500;
    const auto env = run_experiment(cfg, 2);
    CHECK(env.partial);
    CHECK_FALSE(env.bundles[0].errors.empty());
}

TEST_CASE("checks run inside the harness and land in the envelope") {
    auto cfg = small_config();
    const auto inst = build_instance(cfg, 5);
    const double l2 = inst.w->lambda * inst.w->lambda;
    cfg.schedule = StepSchedule::constant(
        std::min(1 / (4 * inst.cost->L), (1 - l2) * (1 - l2) / (16 * l2 * inst.cost->L * std::sqrt(3.0))));
    cfg.checks.descent = true;
    cfg.checks.consensus_bound = true;
    const auto env = run_experiment(cfg, 2);
    REQUIRE(env.checks.size() == 2);
    CHECK(env.checks[0].name == "descent");
    CHECK(env.checks[0].passed);
    CHECK_FALSE(env.deterministic_check_failed());
}

TEST_CASE("outputs are written, hash-tagged, and re-emit identically from JSON") {
    const auto env = run_experiment(small_config(), 2);
    const auto dir = scratch("emit");
    const auto files = emit_outputs(env, dir.string(), {});
    CHECK(fs::exists(dir / "envelope.json"));
    CHECK(fs::exists(dir / "gt_dsgd_n5_tail_mse_to_opt_eps0.05.csv"));
    CHECK(fs::exists(dir / "tail_mse_to_opt_eps0.05_log.svg"));
    CHECK(slurp(dir / "gt_dsgd_n5_mse.csv").rfind("# config_hash=" + env.config_hash + "\nt,value\n1,", 0) == 0);

    const auto back = ResultEnvelope::from_json(json::parse(slurp(dir / "envelope.json")));
    const auto dir2 = scratch("reemit");
    const auto files2 = emit_outputs(back, dir2.string(), {});
    REQUIRE(files.size() == files2.size());
    for (std::size_t k = 0; k < files.size(); ++k) {
        const auto name = fs::path(files[k]).filename();
        CHECK(slurp(dir / name) == slurp(dir2 / name));
    }
    CHECK(config_hash(config_from_json(back.config)) == back.config_hash);
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("an envelope without series emits only JSON") {
    ResultEnvelope env;
    env.config = config_to_json(small_config());
    env.config_hash = config_hash(small_config());
    const auto dir = scratch("empty");
    const auto files = emit_outputs(env, dir.string(), {});
    REQUIRE(files.size() == 1);
    CHECK(fs::path(files[0]).filename() == "envelope.json");
    fs::remove_all(dir);
}

TEST_CASE("tampered envelopes are rejected") {
    auto j = run_experiment(small_config(), 1).to_json();
    j["config"]["seed"] = 99;
    CHECK_THROWS_AS(ResultEnvelope::from_json(j), ConfigError);
}

TEST_CASE("building an instance from a saved mixing matrix") {
    const auto dir = scratch("matrix");
    fs::create_directories(dir);
    {
        std::ofstream os(dir / "w.csv");
        write_mixing_csv(os, metropolis_hastings(generate_graph(GraphKind::path, 5, 0)));
    }
    auto cfg = small_config();
    cfg.topology.matrix_csv = "w.csv";
    cfg.base_dir = dir.string();
    const auto inst = build_instance(cfg, 5);
    CHECK(inst.w->lambda == doctest::Approx(metropolis_hastings(generate_graph(GraphKind::path, 5, 0)).lambda));
    CHECK_THROWS_AS(build_instance(cfg, 6), ConfigError);
    fs::remove_all(dir);
}

}  // TEST_SUITE
