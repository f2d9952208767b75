// SPDX-License-Identifier: Apache-2.0
//
// gtdsgd: run experiments, theory checks, and the small calculators.
//
// Exit codes: 0 ok, 1 config/parse/argument error, 2 failed deterministic
// check, 3 I/O error.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <thread>

#include "gtdsgd/algorithms.hpp"
#include "gtdsgd/datasets.hpp"
#include "gtdsgd/error.hpp"
#include "gtdsgd/format.hpp"
#include "gtdsgd/harness.hpp"
#include "gtdsgd/metrics.hpp"
#include "gtdsgd/topology.hpp"

using namespace gtdsgd;

namespace {

struct RunArgs {
    std::string config;
    std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    std::string out;
    std::optional<std::uint64_t> seed_override;
};

void add_run_flags(CLI::App* sub, RunArgs& a) {
    sub->add_option("config", a.config, "JSON experiment config")->required();
    sub->add_option("--workers", a.workers, "worker threads (results do not depend on this)")->check(CLI::PositiveNumber);
    sub->add_option("--out", a.out, "output directory (overrides output.dir)");
    sub->add_option("--seed-override", a.seed_override, "replace the master seed");
}

ExperimentConfig load(const RunArgs& a) {
    auto cfg = load_config(a.config);
    if (a.seed_override) cfg.seed = *a.seed_override;
    if (!a.out.empty()) cfg.out_dir = a.out;
    return cfg;
}

void print_checks(const ResultEnvelope& env) {
    for (const auto& r : env.checks) {
        std::printf("%-18s %s  instances=%zu  worst_slack=%s", r.name.c_str(), r.passed ? "PASS" : "FAIL", r.instances,
                    format_double(r.worst_slack).c_str());
        for (const auto& [k, v] : r.details) std::printf("  %s=%s", k.c_str(), format_double(v).c_str());
        std::printf("\n");
    }
}

void print_errors(const ResultEnvelope& env) {
    for (const auto& b : env.bundles)
        for (const auto& e : b.errors) std::fprintf(stderr, "%s n=%zu: %s\n", to_string(b.algorithm).c_str(), b.n, e.c_str());
}

int cmd_run(const RunArgs& a) {
    auto cfg = load(a);
    if (cfg.out_dir.empty()) cfg.out_dir = "out/" + cfg.name;
    auto env = run_experiment(cfg, a.workers);
    EmitFormats formats;
    formats.svg = cfg.svg;
    const auto files = emit_outputs(env, cfg.out_dir, formats);
    {
        std::ofstream t(std::filesystem::path(cfg.out_dir) / "timing.json");
        t << "{\"config_hash\": \"" << env.config_hash << "\", \"wall_seconds\": " << format_double(env.wall_seconds)
          << ", \"workers\": " << a.workers << "}\n";
        if (!t) throw IoError("cannot write timing.json in " + cfg.out_dir);
    }
    std::printf("config %s: wrote %zu files to %s in %.2f s%s\n", env.config_hash.c_str(), files.size() + 1,
                cfg.out_dir.c_str(), env.wall_seconds, env.partial ? " (partial)" : "");
    for (const auto& b : env.bundles)
        for (const auto& s : b.series) {
            if (s.name.rfind("tail_", 0) != 0) continue;
            std::printf("%s n=%zu lambda=%.4f %s: final=%s", to_string(b.algorithm).c_str(), b.n, b.lambda,
                        s.name.c_str(), s.values.empty() ? "-" : format_double(s.values.back()).c_str());
            if (auto it = s.meta.find("fit_slope"); it != s.meta.end())
                std::printf(" slope=%.4g r2=%.4f", it->second, s.meta.at("fit_r_squared"));
            std::printf("\n");
        }
    print_checks(env);
    print_errors(env);
    return env.deterministic_check_failed() ? 2 : 0;
}

int cmd_check(const RunArgs& a) {
    auto cfg = load(a);
    if (!cfg.checks.any()) {
        cfg.checks.descent = cfg.checks.consensus_bound = cfg.checks.tracker_recursion = true;
        cfg.checks.descent_pl = cfg.cost.kind == "synthetic_quadratic";
    }
    cfg.metrics.epsilons.clear();
    auto env = run_experiment(cfg, a.workers);
    print_checks(env);
    print_errors(env);
    return env.deterministic_check_failed() ? 2 : 0;
}

int cmd_topo(const std::string& kind, std::size_t n, double p, std::uint64_t seed, std::optional<double> target,
             double tol, const std::string& csv) {
    MixingMatrix w;
    const auto k = parse_graph_kind(kind);
    if (target) {
        if (k != GraphKind::erdos_renyi) throw InvalidArgument("--target-lambda needs --kind erdos_renyi");
        auto tuned = tune_er_probability(n, *target, tol, seed);
        std::printf("p = %.6f (%d bisection steps)\n", tuned.p, static_cast<int>(tuned.bisection_steps));
        w = std::move(tuned.matrix);
    } else {
        w = metropolis_hastings(generate_graph(k, n, seed, p));
    }
    for (Eigen::Index i = 0; i < w.w.rows(); ++i) {
        for (Eigen::Index j = 0; j < w.w.cols(); ++j) std::printf(j ? " %.6f" : "%.6f", w.w(i, j));
        std::printf("\n");
    }
    std::printf("lambda = %.6f\n", w.lambda);
    if (!csv.empty()) {
        std::ofstream os(csv);
        if (!os) throw IoError("cannot open " + csv + " for writing");
        write_mixing_csv(os, w);
    }
    return 0;
}

void print_terms(const std::vector<TermBreakdown>& terms) {
    for (const auto& t : terms) std::printf("  %-18s %s\n", t.name.c_str(), format_double(t.value).c_str());
}

int cmd_parse(const std::string& path, std::optional<std::size_t> d) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path);
    const auto ds = parse_libsvm(is, d);
    std::size_t nnz = 0, pos = 0;
    for (const auto& r : ds.rows) {
        nnz += r.features.size();
        if (r.label > 0) ++pos;
    }
    std::printf("rows = %zu\nfeatures = %zu\nnonzeros = %zu\npositive = %zu\nnegative = %zu\n", ds.size(), ds.d, nnz,
                pos, ds.size() - pos);
    return 0;
}

int cmd_emit(const std::string& path, const std::string& out, bool svg) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(path + ": " + ex.what());
    }
    const auto env = ResultEnvelope::from_json(j);
    EmitFormats f;
    f.svg = svg;
    const auto files = emit_outputs(env, out, f);
    std::printf("wrote %zu files to %s\n", files.size(), out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Decentralized SGD with gradient tracking: simulator and checks"};
    app.require_subcommand(1);

    RunArgs run_args, check_args;
    auto* run_cmd = app.add_subcommand("run", "run an experiment and write CSV/JSON/SVG outputs");
    add_run_flags(run_cmd, run_args);
    auto* check_cmd = app.add_subcommand("check", "run only the pathwise and noise checks of a config");
    add_run_flags(check_cmd, check_args);

    std::string kind = "ring", csv;
    std::size_t n = 10;
    double p = 0.5, tol = 0.05;
    std::uint64_t topo_seed = 0;
    std::optional<double> target;
    auto* topo = app.add_subcommand("topo", "print a Metropolis-Hastings mixing matrix and its lambda");
    topo->add_option("--kind", kind, "ring | path | complete | erdos_renyi");
    topo->add_option("--n", n)->check(CLI::PositiveNumber);
    topo->add_option("--p", p, "edge probability for erdos_renyi");
    topo->add_option("--seed", topo_seed);
    topo->add_option("--target-lambda", target, "tune erdos_renyi p to reach this lambda");
    topo->add_option("--tol", tol);
    topo->add_option("--csv", csv, "also write W to this file");

    auto* calc = app.add_subcommand("calc", "transient-time and step-size calculators");
    calc->require_subcommand(1);
    bool nonconvex = false, pl = false;
    double cn = 1, lambda = 0, rho = 0, eps = 1, a = 6, L = 1, mu = 1, sig = 0, sig_max = -1, T = 1e12, d = 1;
    auto add_common = [&](CLI::App* s) {
        auto* g = s->add_option_group("regime");
        g->add_flag("--nonconvex", nonconvex);
        g->add_flag("--pl", pl);
        g->require_option(1);
        s->add_option("--n", cn);
        s->add_option("--lambda", lambda);
        s->add_option("--rho", rho);
        s->add_option("--eps", eps, "relaxed-noise exponent");
        s->add_option("--a", a, "PL schedule numerator");
    };
    auto* transient = calc->add_subcommand("transient", "iterations before the network-independent rate dominates");
    add_common(transient);
    auto* stepsize = calc->add_subcommand("stepsize", "non-convex step-size cap or PL t0 floor");
    add_common(stepsize);
    stepsize->add_option("--L", L);
    stepsize->add_option("--mu", mu);
    stepsize->add_option("--sigma-sq", sig, "average noise variance");
    stepsize->add_option("--sigma-max-sq", sig_max, "largest noise variance (default: --sigma-sq)");
    stepsize->add_option("--T", T);
    stepsize->add_option("--d", d);

    std::string parse_path;
    std::optional<std::size_t> parse_d;
    auto* parse = app.add_subcommand("parse", "summarize a LIBSVM file");
    parse->add_option("file", parse_path)->required();
    parse->add_option("--d", parse_d, "feature dimension (default: largest index)");

    std::string emit_path, emit_out = ".";
    bool emit_svg = true;
    auto* emit = app.add_subcommand("emit", "re-emit CSV/SVG outputs from a saved envelope.json");
    emit->add_option("envelope", emit_path)->required();
    emit->add_option("--out", emit_out);
    emit->add_option("--svg", emit_svg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (run_cmd->parsed()) return cmd_run(run_args);
        if (check_cmd->parsed()) return cmd_check(check_args);
        if (topo->parsed()) return cmd_topo(kind, n, p, topo_seed, target, tol, csv);
        if (parse->parsed()) return cmd_parse(parse_path, parse_d);
        if (emit->parsed()) return cmd_emit(emit_path, emit_out, emit_svg);
        if (transient->parsed()) {
            const double v = nonconvex ? transient_time_nonconvex(cn, lambda, rho, eps) : transient_time_pl(cn, lambda, a);
            std::printf("%s\n", format_double(v).c_str());
            return 0;
        }
        if (stepsize->parsed()) {
            if (sig_max < 0) sig_max = sig;
            if (nonconvex) {
                const auto r = nonconvex_step_cap({cn, T, L, lambda, sig, sig_max, d, rho, eps});
                std::printf("alpha = %s\nC = %s\n", format_double(r.alpha).c_str(), format_double(r.C).c_str());
                print_terms(r.terms);
            } else {
                const auto r = pl_t0_floor({cn, lambda, a, L, mu, sig, sig_max, rho, eps});
                std::printf("t0 = %s\n", format_double(r.t0).c_str());
                print_terms(r.terms);
            }
            return 0;
        }
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
