// SPDX-License-Identifier: Apache-2.0
#include "gtdsgd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "gtdsgd/datasets.hpp"
#include "gtdsgd/error.hpp"
#include "gtdsgd/format.hpp"
#include "gtdsgd/rng.hpp"
#include "gtdsgd/svg.hpp"

namespace gtdsgd {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Strict view over one JSON object: every key must be consumed.
class Obj {
public:
    Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + "expected an object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    template <class T>
    std::optional<T> opt(const std::string& key) {
        if (!has(key)) return std::nullopt;
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("'" + key_path(key) + "' has the wrong type");
        }
    }

    template <class T>
    void read(const std::string& key, T& into) {
        if (auto v = opt<T>(key)) into = *v;
    }

    Obj sub(const std::string& key) {
        seen_.insert(key);
        return Obj(j_.at(key), key_path(key));
    }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void done() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("unknown key '" + key_path(it.key()) + "'");
    }

private:
    std::string where() const { return path_.empty() ? "config: " : "'" + path_ + "': "; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class F>
auto as_config_error(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const InvalidArgument& ex) {
        throw ConfigError("'" + key + "': " + ex.what());
    }
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string resolve(const ExperimentConfig& cfg, const std::string& p) {
    if (p.empty() || fs::path(p).is_absolute() || cfg.base_dir.empty()) return p;
    return (fs::path(cfg.base_dir) / p).string();
}

json embedded_config(const ExperimentConfig& cfg) {
    json j = config_to_json(cfg);
    j["output"].erase("dir");
    return j;
}

json series_to_json(const MetricSeries& s) {
    json meta = json::object();
    for (const auto& [k, v] : s.meta) meta[k] = v;
    return {{"name", s.name}, {"values", s.values}, {"meta", meta}};
}

MetricSeries series_from_json(const json& j) {
    MetricSeries s;
    s.name = j.at("name").get<std::string>();
    s.values = j.at("values").get<std::vector<double>>();
    for (auto it = j.at("meta").begin(); it != j.at("meta").end(); ++it) s.meta[it.key()] = it.value().get<double>();
    return s;
}

json report_to_json(const CheckReport& r) {
    json v = json::array();
    for (const auto& x : r.violations) v.push_back({{"run", x.run}, {"t", x.t}, {"slack", x.slack}});
    json details = json::object();
    for (const auto& [k, val] : r.details) details[k] = val;
    return {{"name", r.name},           {"instances", r.instances}, {"worst_slack", r.worst_slack},
            {"tolerance", r.tolerance}, {"passed", r.passed},       {"violations", v},
            {"details", details}};
}

CheckReport report_from_json(const json& j) {
    CheckReport r;
    r.name = j.at("name").get<std::string>();
    r.instances = j.at("instances").get<std::size_t>();
    r.worst_slack = j.at("worst_slack").is_null() ? std::numeric_limits<double>::infinity()
                                                  : j.at("worst_slack").get<double>();
    r.tolerance = j.at("tolerance").get<double>();
    r.passed = j.at("passed").get<bool>();
    for (const auto& v : j.at("violations"))
        r.violations.push_back({v.at("run").get<std::uint64_t>(), v.at("t").get<std::size_t>(), v.at("slack").get<double>()});
    for (auto it = j.at("details").begin(); it != j.at("details").end(); ++it) r.details[it.key()] = it.value().get<double>();
    return r;
}

std::string bundle_prefix(const SeriesBundle& b) { return to_string(b.algorithm) + "_n" + std::to_string(b.n); }

void annotate_tail(MetricSeries& s, std::size_t R) {
    if (auto t = first_below(s, 0.5)) s.meta["first_below_half"] = static_cast<double>(*t);
    if (auto w = default_tail_window(s, R)) {
        try {
            const auto fit = tail_decay_fit(s, *w);
            s.meta["fit_slope"] = fit.slope;
            s.meta["fit_r_squared"] = fit.r_squared;
            s.meta["fit_t_lo"] = static_cast<double>(fit.window.t_lo);
            s.meta["fit_t_hi"] = static_cast<double>(fit.window.t_hi);
            s.meta["fit_trimmed"] = static_cast<double>(fit.trimmed);
        } catch (const InvalidArgument&) {
            s.meta["fit_insufficient"] = 1.0;
        }
    }
}

struct RunOutcome {
    std::optional<TrajectoryRecord> record;
    std::vector<CheckReport> checks;
    std::vector<std::string> errors;
};

void write_file(const fs::path& path, const std::string& content, std::vector<std::string>& written) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << content;
    os.close();
    if (!os) throw IoError("failed writing " + path.string());
    written.push_back(path.string());
}

}  // namespace

ExperimentConfig config_from_json(const json& j, const std::string& base_dir) {
    ExperimentConfig cfg;
    cfg.base_dir = base_dir;
    Obj top(j, "");
    top.read("name", cfg.name);
    top.read("seed", cfg.seed);
    top.read("T", cfg.T);
    top.read("R", cfg.R);
    if (auto algs = top.opt<std::vector<std::string>>("algorithms")) {
        cfg.algorithms.clear();
        for (const auto& a : *algs) cfg.algorithms.push_back(as_config_error("algorithms", [&] { return parse_algorithm(a); }));
    }

    if (top.has("topology")) {
        auto t = top.sub("topology");
        if (auto k = t.opt<std::string>("kind"))
            cfg.topology.kind = as_config_error("topology.kind", [&] { return parse_graph_kind(*k); });
        t.read("n", cfg.topology.n);
        t.read("p", cfg.topology.p);
        if (auto v = t.opt<double>("target_lambda")) cfg.topology.target_lambda = v;
        t.read("tol", cfg.topology.tol);
        if (auto v = t.opt<std::uint64_t>("seed")) cfg.topology.seed = v;
        t.read("matrix_csv", cfg.topology.matrix_csv);
        t.done();
    }

    if (top.has("cost")) {
        auto c = top.sub("cost");
        c.read("kind", cfg.cost.kind);
        c.read("d", cfg.cost.d);
        if (auto p = c.opt<std::string>("profile"))
            cfg.cost.profile = as_config_error("cost.profile", [&] { return parse_profile(*p); });
        c.read("density", cfg.cost.density);
        c.read("mu0", cfg.cost.mu0);
        if (auto v = c.opt<std::uint64_t>("seed")) cfg.cost.seed = v;
        c.read("path", cfg.cost.path);
        c.read("eta", cfg.cost.eta);
        c.read("scale", cfg.cost.scale);
        c.done();
        if (cfg.cost.kind != "synthetic_quadratic" && cfg.cost.kind != "libsvm" && cfg.cost.kind != "ensemble_json")
            throw ConfigError("'cost.kind': unknown cost kind '" + cfg.cost.kind + "'");
        if (cfg.cost.kind != "synthetic_quadratic" && cfg.cost.path.empty())
            throw ConfigError("'cost.path' is required for cost kind '" + cfg.cost.kind + "'");
    }

    if (top.has("oracle")) {
        auto o = top.sub("oracle");
        if (auto f = o.opt<std::string>("flavor"))
            cfg.oracle.flavor = as_config_error("oracle.flavor", [&] { return parse_oracle_flavor(*f); });
        if (o.has("s")) {
            const json& s = o.raw("s");
            if (s.is_number()) cfg.oracle.s = {s.get<double>()};
            else if (s.is_array() && std::all_of(s.begin(), s.end(), [](const json& v) { return v.is_number(); }))
                cfg.oracle.s = s.get<std::vector<double>>();
            else throw ConfigError("'oracle.s' has the wrong type");
        }
        o.read("batch_size", cfg.oracle.batch_size);
        o.read("rho", cfg.oracle.rho);
        o.read("eps_exponent", cfg.oracle.eps_exponent);
        o.done();
        as_config_error("oracle", [&] { cfg.oracle.validate(); return 0; });
    }

    if (top.has("schedule")) {
        auto s = top.sub("schedule");
        std::string kind = "constant";
        s.read("kind", kind);
        if (kind == "constant") {
            double alpha = 0.1;
            s.read("alpha", alpha);
            cfg.schedule = as_config_error("schedule", [&] { return StepSchedule::constant(alpha); });
        } else if (kind == "inverse_time") {
            double a = 1.0, mu = 1.0, t0 = 0.0;
            s.read("a", a);
            s.read("mu", mu);
            s.read("t0", t0);
            cfg.schedule = as_config_error("schedule", [&] { return StepSchedule::inverse_time(a, mu, t0); });
        } else {
            throw ConfigError("'schedule.kind': unknown schedule '" + kind + "'");
        }
        s.done();
    }

    if (top.has("metrics")) {
        auto m = top.sub("metrics");
        if (auto s = m.opt<std::string>("statistic"))
            cfg.metrics.statistic = as_config_error("metrics.statistic", [&] { return parse_tail_statistic(*s); });
        m.read("epsilons", cfg.metrics.epsilons);
        m.done();
        for (double e : cfg.metrics.epsilons)
            if (!(e > 0.0)) throw ConfigError("'metrics.epsilons' entries must be positive");
    }

    if (top.has("record")) {
        auto r = top.sub("record");
        r.read("stride", cfg.stride);
        r.read("snapshots", cfg.snapshots);
        r.done();
        if (cfg.stride == 0) throw ConfigError("'record.stride' must be at least 1");
    }

    if (top.has("sweep")) {
        auto s = top.sub("sweep");
        s.read("n", cfg.sweep_n);
        s.done();
    }

    if (top.has("checks")) {
        auto c = top.sub("checks");
        c.read("descent", cfg.checks.descent);
        c.read("descent_pl", cfg.checks.descent_pl);
        c.read("consensus_bound", cfg.checks.consensus_bound);
        c.read("tracker_recursion", cfg.checks.tracker_recursion);
        c.read("noise_properties", cfg.checks.noise_properties);
        c.read("noise_samples", cfg.checks.noise_samples);
        c.done();
    }

    if (top.has("output")) {
        auto o = top.sub("output");
        o.read("dir", cfg.out_dir);
        o.read("svg", cfg.svg);
        o.done();
    }
    top.done();

    if (cfg.R == 0) throw ConfigError("'R' must be at least 1");
    if (cfg.algorithms.empty()) throw ConfigError("'algorithms' must not be empty");
    if (cfg.topology.n == 0) throw ConfigError("'topology.n' must be at least 1");
    for (std::size_t n : cfg.sweep_n)
        if (n == 0) throw ConfigError("'sweep.n' entries must be at least 1");
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["name"] = cfg.name;
    j["seed"] = cfg.seed;
    j["T"] = cfg.T;
    j["R"] = cfg.R;
    json algs = json::array();
    for (auto a : cfg.algorithms) algs.push_back(to_string(a));
    j["algorithms"] = algs;

    json t{{"kind", to_string(cfg.topology.kind)}, {"n", cfg.topology.n}, {"p", cfg.topology.p}, {"tol", cfg.topology.tol}};
    if (cfg.topology.target_lambda) t["target_lambda"] = *cfg.topology.target_lambda;
    if (cfg.topology.seed) t["seed"] = *cfg.topology.seed;
    if (!cfg.topology.matrix_csv.empty()) t["matrix_csv"] = cfg.topology.matrix_csv;
    j["topology"] = t;

    json c{{"kind", cfg.cost.kind},   {"d", cfg.cost.d},       {"profile", to_string(cfg.cost.profile)},
           {"density", cfg.cost.density}, {"mu0", cfg.cost.mu0}, {"eta", cfg.cost.eta},
           {"scale", cfg.cost.scale}};
    if (cfg.cost.seed) c["seed"] = *cfg.cost.seed;
    if (!cfg.cost.path.empty()) c["path"] = cfg.cost.path;
    j["cost"] = c;

    j["oracle"] = {{"flavor", to_string(cfg.oracle.flavor)},
                   {"s", cfg.oracle.s},
                   {"batch_size", cfg.oracle.batch_size},
                   {"rho", cfg.oracle.rho},
                   {"eps_exponent", cfg.oracle.eps_exponent}};

    if (cfg.schedule.kind == StepSchedule::Kind::constant)
        j["schedule"] = {{"kind", "constant"}, {"alpha", cfg.schedule.alpha}};
    else
        j["schedule"] = {{"kind", "inverse_time"}, {"a", cfg.schedule.a}, {"mu", cfg.schedule.mu}, {"t0", cfg.schedule.t0}};

    json m{{"epsilons", cfg.metrics.epsilons}};
    if (cfg.metrics.statistic) m["statistic"] = to_string(*cfg.metrics.statistic);
    j["metrics"] = m;
    j["record"] = {{"stride", cfg.stride}, {"snapshots", cfg.snapshots}};
    j["sweep"] = {{"n", cfg.sweep_n}};
    j["checks"] = {{"descent", cfg.checks.descent},
                   {"descent_pl", cfg.checks.descent_pl},
                   {"consensus_bound", cfg.checks.consensus_bound},
                   {"tracker_recursion", cfg.checks.tracker_recursion},
                   {"noise_properties", cfg.checks.noise_properties},
                   {"noise_samples", cfg.checks.noise_samples}};
    j["output"] = {{"dir", cfg.out_dir}, {"svg", cfg.svg}};
    return j;
}

ExperimentConfig load_config(const std::string& path) {
    const auto ext = fs::path(path).extension().string();
    if (ext == ".toml") throw ConfigError(path + ": TOML configs are not supported; use JSON");
    std::ifstream is(path);
    if (!is) throw ConfigError(path + ": cannot open config file");
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& ex) {
        throw ConfigError(path + ": " + ex.what());
    }
    return config_from_json(j, fs::path(path).parent_path().string());
}

std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a64(embedded_config(cfg).dump())); }

json ResultEnvelope::to_json() const {
    json b = json::array();
    for (const auto& bundle : bundles) {
        json series = json::array();
        for (const auto& s : bundle.series) series.push_back(series_to_json(s));
        b.push_back({{"algorithm", to_string(bundle.algorithm)},
                     {"n", bundle.n},
                     {"lambda", bundle.lambda},
                     {"runs_ok", bundle.runs_ok},
                     {"errors", bundle.errors},
                     {"series", series}});
    }
    json c = json::array();
    for (const auto& r : checks) c.push_back(report_to_json(r));
    return {{"config", config}, {"config_hash", config_hash}, {"partial", partial}, {"results", b}, {"checks", c}};
}

ResultEnvelope ResultEnvelope::from_json(const json& j) {
    ResultEnvelope env;
    try {
        env.config = j.at("config");
        env.config_hash = j.at("config_hash").get<std::string>();
        env.partial = j.at("partial").get<bool>();
        for (const auto& b : j.at("results")) {
            SeriesBundle bundle;
            bundle.algorithm = parse_algorithm(b.at("algorithm").get<std::string>());
            bundle.n = b.at("n").get<std::size_t>();
            bundle.lambda = b.at("lambda").get<double>();
            bundle.runs_ok = b.at("runs_ok").get<std::size_t>();
            bundle.errors = b.at("errors").get<std::vector<std::string>>();
            for (const auto& s : b.at("series")) bundle.series.push_back(series_from_json(s));
            env.bundles.push_back(std::move(bundle));
        }
        for (const auto& c : j.at("checks")) env.checks.push_back(report_from_json(c));
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("malformed result envelope: ") + ex.what());
    }
    if (hex64(fnv1a64(env.config.dump())) != env.config_hash)
        throw ConfigError("result envelope hash does not match its embedded config");
    return env;
}

bool ResultEnvelope::deterministic_check_failed() const {
    for (const auto& r : checks)
        if (r.name != "noise_properties" && !r.passed) return true;
    return false;
}

Instance build_instance(const ExperimentConfig& cfg, std::size_t n) {
    Instance inst;
    inst.n = n;
    const auto& ts = cfg.topology;
    if (!ts.matrix_csv.empty()) {
        std::ifstream is(resolve(cfg, ts.matrix_csv));
        if (!is) throw IoError("cannot open mixing matrix " + ts.matrix_csv);
        inst.w = std::make_shared<MixingMatrix>(read_mixing_csv(is));
        if (inst.w->size() != n) throw ConfigError("'topology.matrix_csv' size differs from n");
    } else {
        const std::uint64_t seed = ts.seed.value_or(hash_key({cfg.seed, fnv1a64("topology"), n}));
        if (ts.kind == GraphKind::erdos_renyi && ts.target_lambda) {
            auto tuned = tune_er_probability(n, *ts.target_lambda, ts.tol, seed);
            inst.tuned_p = tuned.p;
            inst.w = std::make_shared<MixingMatrix>(std::move(tuned.matrix));
        } else {
            inst.w = std::make_shared<MixingMatrix>(metropolis_hastings(generate_graph(ts.kind, n, seed, ts.p)));
        }
    }

    const auto& cs = cfg.cost;
    const std::uint64_t cost_seed = cs.seed.value_or(hash_key({cfg.seed, fnv1a64("cost")}));
    if (cs.kind == "synthetic_quadratic") {
        SyntheticQuadraticSpec spec;
        spec.n = n;
        spec.d = cs.d;
        spec.profile = cs.profile;
        spec.density = cs.density;
        spec.mu0 = cs.mu0;
        spec.seed = cost_seed;
        inst.cost = std::make_shared<CostEnsemble>(CostEnsemble::quadratic(make_synthetic_quadratics(spec)));
    } else if (cs.kind == "libsvm") {
        std::ifstream is(resolve(cfg, cs.path));
        if (!is) throw IoError("cannot open dataset " + cs.path);
        auto ds = parse_libsvm(is);
        if (cs.scale) ds = scale_max_abs(ds);
        inst.cost = std::make_shared<CostEnsemble>(
            CostEnsemble::logistic(make_logistic_ensemble(split_uniform(ds, n, cost_seed), cs.eta)));
    } else {
        std::ifstream is(resolve(cfg, cs.path));
        if (!is) throw IoError("cannot open ensemble " + cs.path);
        inst.cost = std::make_shared<CostEnsemble>(load_ensemble(is));
        if (inst.cost->agents() != n) throw ConfigError("'cost.path' ensemble has a different agent count");
    }
    return inst;
}

ResultEnvelope run_experiment(const ExperimentConfig& cfg, std::size_t workers) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<std::size_t> ns = cfg.sweep_n.empty() ? std::vector<std::size_t>{cfg.topology.n} : cfg.sweep_n;

    std::vector<Instance> instances;
    for (std::size_t n : ns) instances.push_back(as_config_error("topology", [&] { return build_instance(cfg, n); }));

    std::vector<TailStatistic> stats;
    for (const auto& inst : instances) {
        const TailStatistic s = cfg.metrics.statistic.value_or(inst.cost->x_star ? TailStatistic::mse_to_opt
                                                                                 : TailStatistic::running_stationarity);
        if (s == TailStatistic::mse_to_opt && !inst.cost->x_star)
            throw ConfigError("'metrics.statistic': mse_to_opt needs a cost with a known optimum");
        stats.push_back(s);
    }

    struct Job {
        std::size_t inst, alg, run;
    };
    std::vector<Job> jobs;
    for (std::size_t i = 0; i < instances.size(); ++i)
        for (std::size_t a = 0; a < cfg.algorithms.size(); ++a)
            for (std::size_t r = 0; r < cfg.R; ++r) jobs.push_back({i, a, r});
    std::vector<RunOutcome> outcomes(jobs.size());

    auto do_job = [&](std::size_t idx) {
        const Job& job = jobs[idx];
        const Instance& inst = instances[job.inst];
        const Algorithm alg = cfg.algorithms[job.alg];
        RunOutcome& out = outcomes[idx];
        RunConfig rc;
        rc.w = inst.w;
        rc.cost = inst.cost;
        rc.oracle = cfg.oracle;
        rc.schedule = cfg.schedule;
        rc.T = cfg.T;
        rc.snapshot_stride = cfg.stride;
        rc.record_trace = cfg.checks.any_trajectory_check();
        const std::uint64_t seed = hash_key({cfg.seed, fnv1a64(to_string(alg)), job.run});
        try {
            auto rec = run(alg, rc, seed, job.run);
            auto check = [&](bool enabled, bool gt_only, auto&& fn, const char* name) {
                if (!enabled || (gt_only && alg != Algorithm::gt_dsgd)) return;
                try {
                    out.checks.push_back(fn());
                } catch (const InvalidArgument& ex) {
                    CheckReport rej;
                    rej.name = name;
                    rej.passed = false;
                    rej.details["rejected"] = 1.0;
                    out.checks.push_back(rej);
                    out.errors.push_back(std::string(name) + ": " + ex.what());
                }
            };
            check(cfg.checks.descent, false, [&] { return check_descent(rec, *inst.cost); }, "descent");
            check(cfg.checks.descent_pl, false, [&] { return check_descent_pl(rec, *inst.cost); }, "descent_pl");
            check(cfg.checks.consensus_bound, true, [&] { return check_consensus_bound(rec, *inst.w, *inst.cost); },
                  "consensus_bound");
            check(cfg.checks.tracker_recursion, true,
                  [&] { return check_tracker_recursion(rec, *inst.w, *inst.cost); }, "tracker_recursion");
            rec.trace.reset();
            rec.final_state = AlgorithmState{};
            if (!(cfg.snapshots && job.run == 0)) rec.snapshots.clear();
            out.record = std::move(rec);
        } catch (const std::exception& ex) {
            out.errors.push_back(ex.what());
        }
    };

    const std::size_t pool = std::max<std::size_t>(1, std::min(workers, jobs.size()));
    if (pool == 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) do_job(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < pool; ++w)
            threads.emplace_back([&] {
                for (std::size_t i = next++; i < jobs.size(); i = next++) do_job(i);
            });
        for (auto& t : threads) t.join();
    }

    ResultEnvelope env;
    env.config = embedded_config(cfg);
    env.config_hash = config_hash(cfg);
    std::map<std::string, std::size_t> check_index;
    auto merge_check = [&](const CheckReport& r) {
        auto it = check_index.find(r.name);
        if (it == check_index.end()) {
            check_index[r.name] = env.checks.size();
            env.checks.push_back(r);
        } else {
            env.checks[it->second].merge(r);
        }
    };

    std::size_t idx = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        for (std::size_t a = 0; a < cfg.algorithms.size(); ++a) {
            SeriesBundle bundle;
            bundle.algorithm = cfg.algorithms[a];
            bundle.n = instances[i].n;
            bundle.lambda = instances[i].w->lambda;
            RunSet rs;
            std::vector<Snapshot> snaps;
            for (std::size_t r = 0; r < cfg.R; ++r, ++idx) {
                auto& out = outcomes[idx];
                for (const auto& e : out.errors) bundle.errors.push_back("run " + std::to_string(r) + ": " + e);
                for (const auto& c : out.checks) merge_check(c);
                if (out.record) {
                    if (r == 0) snaps = std::move(out.record->snapshots);
                    rs.runs.push_back(std::move(*out.record));
                }
            }
            bundle.runs_ok = rs.R();
            if (!bundle.errors.empty() || bundle.runs_ok < cfg.R) env.partial = true;
            if (rs.R() > 0 && cfg.T > 0) {
                if (instances[i].cost->x_star) bundle.series.push_back(empirical_mse(rs));
                bundle.series.push_back(mean_stationarity(rs));
                MetricSeries cons{"consensus_gap", std::vector<double>(cfg.T, 0.0), {}};
                for (const auto& run : rs.runs)
                    for (std::size_t k = 0; k < cfg.T; ++k) cons.values[k] += run.consensus_gap[k] / rs.R();
                bundle.series.push_back(std::move(cons));
                for (double eps : cfg.metrics.epsilons) {
                    auto tail = empirical_tail_probability(rs, stats[i], eps);
                    tail.name += "_eps" + format_double(eps);
                    annotate_tail(tail, rs.R());
                    bundle.series.push_back(std::move(tail));
                }
                if (cfg.snapshots && !snaps.empty()) {
                    for (Eigen::Index c = 0; c < snaps.front().x_bar.size(); ++c) {
                        MetricSeries s{"snapshot_x" + std::to_string(c + 1), {}, {{"stride", double(cfg.stride)}}};
                        for (const auto& sn : snaps) s.values.push_back(sn.x_bar[c]);
                        bundle.series.push_back(std::move(s));
                    }
                }
            }
            env.bundles.push_back(std::move(bundle));
        }
    }

    if (cfg.checks.noise_properties) {
        for (const auto& inst : instances) {
            try {
                const std::vector<Eigen::VectorXd> grid{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(inst.cost->dim()))};
                merge_check(check_noise_properties(cfg.oracle, *inst.cost, grid, cfg.checks.noise_samples,
                                                   hash_key({cfg.seed, fnv1a64("noise"), inst.n})));
            } catch (const InvalidArgument& ex) {
                CheckReport rej;
                rej.name = "noise_properties";
                rej.passed = false;
                rej.details["rejected"] = 1.0;
                merge_check(rej);
                env.partial = true;
                if (!env.bundles.empty()) env.bundles.front().errors.push_back(std::string("noise_properties: ") + ex.what());
            }
        }
    }

    env.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return env;
}

std::vector<std::string> emit_outputs(const ResultEnvelope& env, const std::string& dir, const EmitFormats& formats) {
    std::vector<std::string> written;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
    const fs::path base(dir);

    if (formats.csv) {
        for (const auto& b : env.bundles)
            for (const auto& s : b.series) {
                std::ostringstream os;
                os << "# config_hash=" << env.config_hash << '\n';
                write_series_csv(os, s);
                write_file(base / (bundle_prefix(b) + "_" + s.name + ".csv"), os.str(), written);
            }
    }
    if (formats.json) write_file(base / "envelope.json", env.to_json().dump(2) + "\n", written);
    if (formats.svg) {
        std::vector<std::string> order;
        std::map<std::string, std::vector<ChartLine>> groups;
        for (const auto& b : env.bundles)
            for (const auto& s : b.series) {
                if (s.name.rfind("snapshot_", 0) == 0) continue;
                if (!groups.count(s.name)) order.push_back(s.name);
                groups[s.name].push_back({to_string(b.algorithm) + " n=" + std::to_string(b.n), s.values});
            }
        for (const auto& name : order) {
            const std::string comment = "<!-- config_hash=" + env.config_hash + " -->\n";
            write_file(base / (name + ".svg"), comment + render_line_chart(name, groups[name], false), written);
            if (name.rfind("tail_", 0) == 0 || name == "mse")
                write_file(base / (name + "_log.svg"), comment + render_line_chart(name, groups[name], true), written);
        }
    }
    return written;
}

}  // namespace gtdsgd
