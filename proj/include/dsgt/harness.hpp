#ifndef DSGT_HARNESS_HPP
#define DSGT_HARNESS_HPP

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsgt/analysis.hpp"
#include "dsgt/engine.hpp"
#include "dsgt/estimator.hpp"
#include "dsgt/objective.hpp"
#include "dsgt/topology.hpp"
#include "dsgt/trace_io.hpp"

namespace dsgt {

using nlohmann::json;

struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string config_hash(const json& cfg) {
    // FNV-1a over the canonical (minified, sorted-key) dump
    std::string s = cfg.dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

template <typename T>
T require_field(const json& j, const std::string& scope, const std::string& key) {
    if (!j.contains(key)) throw config_error(scope + "." + key + ": missing required field");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw config_error(scope + "." + key + ": wrong type");
    }
}

template <typename T>
T optional_field(const json& j, const std::string& scope, const std::string& key, T def) {
    if (!j.contains(key)) return def;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw config_error(scope + "." + key + ": wrong type");
    }
}

struct Experiment {
    Objective objective;
    Topology topology;
    MixingMatrix mixing;
    AlgoConfig algo;
    long long stride = 1;
    int reps = 1;
    std::optional<Dataset> test;
    std::string hash;
};

inline Experiment parse_config(const json& cfg) {
    Experiment ex;
    ex.hash = config_hash(cfg);

    if (!cfg.contains("topology")) throw config_error("topology: missing section");
    const json& jt = cfg["topology"];
    int n = require_field<int>(jt, "topology", "n");
    double p = require_field<double>(jt, "topology", "p");
    auto tseed = optional_field<std::uint64_t>(jt, "topology", "seed", 0);
    if (n < 2) throw config_error("topology.n: must be >= 2");
    if (p <= 0.0 || p > 1.0) throw config_error("topology.p: must be in (0, 1]");
    ex.topology = erdos_renyi(n, p, tseed);
    ex.mixing = metropolis_weights(ex.topology);

    if (!cfg.contains("objective")) throw config_error("objective: missing section");
    const json& jo = cfg["objective"];
    std::string kind = require_field<std::string>(jo, "objective", "kind");
    if (kind == "quadratic") {
        int d = require_field<int>(jo, "objective", "d");
        double condition = optional_field<double>(jo, "objective", "condition", 1.0);
        if (condition < 1.0) throw config_error("objective.condition: must be >= 1");
        auto oseed = optional_field<std::uint64_t>(jo, "objective", "seed", 0);
        double svar = optional_field<double>(jo, "objective", "s_variance", 1e-4);
        double cbox = optional_field<double>(jo, "objective", "center_box", 1.0);
        ex.objective = make_quadratic(n, d, condition, oseed, svar, cbox);
    } else if (kind == "logistic") {
        std::string path = require_field<std::string>(jo, "objective", "dataset");
        double c_reg = require_field<double>(jo, "objective", "c_reg");
        if (c_reg <= 0.0) throw config_error("objective.c_reg: must be > 0");
        double sigma_u = optional_field<double>(jo, "objective", "sigma_u", 0.0);
        Dataset ds;
        try {
            ds = load_dataset_csv(path);
        } catch (const std::exception& e) {
            throw config_error(std::string("objective.dataset: ") + e.what());
        }
        ds.partition_equally(n);
        NoiseSpec ns{optional_field<double>(jo, "objective", "noise_variance", 0.0)};
        ex.objective = make_logistic(ds, c_reg, sigma_u, ns);
    } else {
        throw config_error("objective.kind: must be 'quadratic' or 'logistic'");
    }
    ex.objective.noise.variance = optional_field<double>(jo, "objective", "noise_variance",
                                                         ex.objective.noise.variance);
    if (ex.objective.noise.variance < 0.0)
        throw config_error("objective.noise_variance: must be >= 0");

    if (!cfg.contains("algorithm")) throw config_error("algorithm: missing section");
    const json& ja = cfg["algorithm"];
    std::string name = optional_field<std::string>(ja, "algorithm", "name",
                                                   std::string("onepoint_dsgt"));
    if (name == "onepoint_dsgt") ex.algo.algorithm = Algorithm::onepoint_dsgt;
    else if (name == "dsgt_noisygrad") ex.algo.algorithm = Algorithm::dsgt_noisygrad;
    else throw config_error("algorithm.name: must be 'onepoint_dsgt' or 'dsgt_noisygrad'");
    ex.algo.schedule.alpha0 = require_field<double>(ja, "algorithm", "alpha0");
    ex.algo.schedule.upsilon1 = optional_field<double>(ja, "algorithm", "upsilon1", 0.75);
    ex.algo.schedule.gamma0 = optional_field<double>(ja, "algorithm", "gamma0", 1.3);
    ex.algo.schedule.upsilon2 = optional_field<double>(ja, "algorithm", "upsilon2", 0.25);
    try {
        ex.algo.schedule.validate();
    } catch (const std::exception& e) {
        throw config_error(std::string("algorithm: ") + e.what());
    }
    ex.algo.perturbation.dim = ex.objective.dim;
    ex.algo.perturbation.scale = optional_field<double>(ja, "algorithm", "scale", 1.5);
    if (ex.algo.perturbation.scale <= 0.0) throw config_error("algorithm.scale: must be > 0");
    ex.algo.grad_noise_std = optional_field<double>(ja, "algorithm", "grad_noise_std", 1.0);
    ex.algo.seed = optional_field<std::uint64_t>(ja, "algorithm", "seed", 1);
    ex.algo.max_iters = require_field<long long>(ja, "algorithm", "max_iters");
    if (ex.algo.max_iters < 1) throw config_error("algorithm.max_iters: must be >= 1");
    ex.algo.x0_box = optional_field<double>(ja, "algorithm", "x0_box", 0.5);
    if (ex.algo.x0_box < 0.0) throw config_error("algorithm.x0_box: must be >= 0");

    ex.stride = optional_field<long long>(cfg, "config", "stride", 1);
    if (ex.stride < 1) throw config_error("config.stride: must be >= 1");
    ex.reps = optional_field<int>(cfg, "config", "reps", 1);
    if (ex.reps < 1) throw config_error("config.reps: must be >= 1");

    if (cfg.contains("test_dataset")) {
        try {
            ex.test = load_dataset_csv(cfg["test_dataset"].get<std::string>());
        } catch (const std::exception& e) {
            throw config_error(std::string("test_dataset: ") + e.what());
        }
    }
    return ex;
}

// Repetitions share the stride, so records align on k; divergence of any
// repetition truncates the average to the common prefix.
inline RunTrace average_traces(const std::vector<RunTrace>& traces) {
    if (traces.empty()) throw std::invalid_argument("average_traces: no traces");
    RunTrace avg;
    avg.has_accuracy = traces.front().has_accuracy;
    size_t len = std::numeric_limits<size_t>::max();
    for (const auto& t : traces) {
        len = std::min(len, t.rows.size());
        if (t.diverged) {
            avg.diverged = true;
            avg.diverged_at = avg.diverged_at < 0 ? t.diverged_at
                                                  : std::min(avg.diverged_at, t.diverged_at);
        }
    }
    const double r = static_cast<double>(traces.size());
    for (size_t i = 0; i < len; ++i) {
        IterationRecord acc = traces.front().rows[i];
        acc.loss = acc.divergence = acc.consensus = acc.cum_regret = 0.0;
        double acc_acc = 0.0;
        for (const auto& t : traces) {
            const auto& row = t.rows[i];
            if (row.k != acc.k) throw std::runtime_error("average_traces: misaligned strides");
            acc.loss += row.loss;
            acc.divergence += row.divergence;
            acc.consensus += row.consensus;
            acc.cum_regret += row.cum_regret;
            if (avg.has_accuracy) acc_acc += row.accuracy;
        }
        acc.loss /= r;
        acc.divergence /= r;
        acc.consensus /= r;
        acc.cum_regret /= r;
        if (avg.has_accuracy) acc.accuracy = acc_acc / r;
        avg.rows.push_back(acc);
    }
    return avg;
}

inline std::vector<RunTrace> run_repetitions(const Experiment& ex) {
    std::vector<RunTrace> traces;
    for (int rep = 0; rep < ex.reps; ++rep) {
        AlgoConfig cfg = ex.algo;
        cfg.seed = ex.algo.seed + static_cast<std::uint64_t>(rep);
        traces.push_back(run(ex.objective, ex.mixing, cfg, ex.stride,
                             ex.test ? &*ex.test : nullptr));
    }
    return traces;
}

// Theory constants: A, B, C from the analytic record; R, M_bar, G from a pilot
// run's empirical maxima with a 2x safety factor.
inline TheoryConstants estimate_constants(const Experiment& ex, long long pilot_iters,
                                          long long sigma_scan) {
    if (!ex.objective.analytic)
        throw std::runtime_error("estimate_constants: analytic record required");
    const auto& an = *ex.objective.analytic;
    const auto& pert = ex.algo.perturbation;
    TheoryConstants tc;
    tc.A = an.lambda * pert.alpha2();
    tc.B = an.alpha1 * pert.alpha3() * pert.alpha3() * pert.alpha3();
    tc.C = pert.alpha2() * an.L * an.L / (an.lambda * ex.objective.n_agents);
    const double rho = ex.mixing.rho_w;

    Thresholds th = thresholds(tc.A, ex.algo.schedule, rho);
    tc.K0 = th.K0;
    tc.K1 = th.K1;
    tc.K2 = th.K2;

    AlgoConfig cfg = ex.algo;
    cfg.max_iters = pilot_iters;
    SwarmState st = init(ex.objective, ex.mixing, cfg, cfg.x0_box);
    Eigen::RowVectorXd xbar0 = st.x.colwise().mean();
    tc.R = (st.x.rowwise() - xbar0).squaredNorm();
    double max_gbar2 = 0.0, max_ydev2 = 0.0;
    auto track = [&](const SwarmState& s) {
        Eigen::RowVectorXd gbar = s.g_prev.colwise().mean();
        max_gbar2 = std::max(max_gbar2, gbar.squaredNorm());
        Eigen::RowVectorXd ybar = s.y.colwise().mean();
        max_ydev2 = std::max(max_ydev2, (s.y.rowwise() - ybar).squaredNorm());
    };
    track(st);
    try {
        for (long long k = 0; k < pilot_iters; ++k) {
            step(st, ex.objective, ex.mixing, cfg);
            track(st);
        }
    } catch (const divergence_error&) {
        // keep the maxima gathered so far; the certificate will report honestly
    }
    tc.M_bar = 2.0 * max_gbar2;
    tc.G = 2.0 * max_ydev2;
    tc.G_bar = 2.0 * rho * rho * tc.G / (1.0 - rho * rho);

    compute_sigmas(tc, ex.algo.schedule, rho, sigma_scan);
    return tc;
}

inline void write_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << j.dump(2) << '\n';
}

// run: R seeded repetitions, averaged trace CSV + summary JSON.
// Exit codes: 0 ok, 2 config error (thrown as config_error), 3 divergence.
inline int cmd_run(const json& cfg, const std::string& out_dir, bool quiet = false) {
    Experiment ex = parse_config(cfg);
    std::filesystem::create_directories(out_dir);
    auto traces = run_repetitions(ex);
    RunTrace avg = average_traces(traces);
    write_trace_csv(avg, out_dir + "/trace.csv", ex.hash);

    json summary;
    summary["config_hash"] = ex.hash;
    summary["reps"] = ex.reps;
    summary["rho_w"] = ex.mixing.rho_w;
    summary["diverged"] = avg.diverged;
    if (avg.diverged) summary["diverged_at"] = avg.diverged_at;
    if (!avg.rows.empty()) {
        const auto& last = avg.rows.back();
        summary["final"] = {{"k", last.k},
                            {"loss", last.loss},
                            {"divergence", last.divergence},
                            {"consensus", last.consensus},
                            {"cum_regret", last.cum_regret}};
        if (avg.has_accuracy) summary["final"]["accuracy"] = last.accuracy;
    }
    if (ex.objective.analytic && !avg.diverged) {
        TheoryConstants tc = estimate_constants(
            ex, std::min<long long>(ex.algo.max_iters, 2000), ex.algo.max_iters);
        CertificateReport rep = rate_certificate(tc, ex.algo.schedule, avg);
        summary["certificate"] = rep;
        long long k_lo = std::max(tc.K2, ex.algo.max_iters / 10);
        long long k_hi = ex.algo.max_iters;
        summary["slope_window"] = {k_lo, k_hi};
        try {
            summary["slopes"] = {
                {"divergence", loglog_slope(avg, MetricField::divergence, k_lo, k_hi)},
                {"cum_regret", loglog_slope(avg, MetricField::cum_regret, k_lo, k_hi)}};
        } catch (const std::exception& e) {
            summary["slopes"] = {{"error", e.what()}};
        }
    }
    write_json(summary, out_dir + "/summary.json");
    if (!quiet) {
        std::string msg = avg.diverged ? "diverged at k=" + std::to_string(avg.diverged_at)
                                       : "completed " + std::to_string(ex.algo.max_iters) +
                                             " iterations";
        std::fprintf(stdout, "run %s: %s; outputs in %s\n", ex.hash.c_str(), msg.c_str(),
                     out_dir.c_str());
    }
    return avg.diverged ? 3 : 0;
}

// gen-data: two Gaussian clusters at +/- (separation/2) u, balanced labels
inline int cmd_gen_data(int n_samples, int d, double separation, std::uint64_t seed,
                        const std::string& out_path) {
    if (n_samples < 2) throw config_error("gen-data.n_samples: must be >= 2");
    if (d < 1) throw config_error("gen-data.d: must be >= 1");
    if (separation < 0.0) throw config_error("gen-data.separation: must be >= 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::VectorXd u(d);
    for (int j = 0; j < d; ++j) u(j) = gauss(rng);
    u.normalize();
    Dataset ds;
    ds.features.resize(n_samples, d);
    ds.labels.resize(n_samples);
    for (int r = 0; r < n_samples; ++r) {
        double label = r < (n_samples + 1) / 2 ? 1.0 : -1.0;
        for (int j = 0; j < d; ++j)
            ds.features(r, j) = label * (separation / 2.0) * u(j) + gauss(rng);
        ds.labels(r) = label;
    }
    // shuffle rows so the per-agent partition is not single-class
    std::vector<int> order(n_samples);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Dataset shuffled = ds;
    for (int r = 0; r < n_samples; ++r) {
        shuffled.features.row(r) = ds.features.row(order[r]);
        shuffled.labels(r) = ds.labels(order[r]);
    }
    save_dataset_csv(shuffled, out_path);
    return 0;
}

// certify: pilot + Monte-Carlo averaged divergence, certificate JSON
inline int cmd_certify(const json& cfg, const std::string& out_dir, bool quiet = false) {
    Experiment ex = parse_config(cfg);
    if (!ex.objective.analytic)
        throw config_error("objective: certificate needs analytic lambda and L");
    std::filesystem::create_directories(out_dir);
    TheoryConstants tc = estimate_constants(
        ex, std::min<long long>(ex.algo.max_iters, 2000), ex.algo.max_iters);
    auto traces = run_repetitions(ex);
    RunTrace avg = average_traces(traces);
    CertificateReport rep = rate_certificate(tc, ex.algo.schedule, avg);
    if (ex.objective.kind == ObjectiveKind::logistic)
        rep.note += "; alpha1 estimated (global sigmoid-curvature bound)";
    json out = rep;
    out["config_hash"] = ex.hash;
    out["diverged"] = avg.diverged;
    write_json(out, out_dir + "/certificate.json");
    if (!quiet)
        std::fprintf(stdout, "certificate %s written to %s\n", ex.hash.c_str(),
                     out_dir.c_str());
    return avg.diverged ? 3 : 0;
}

// sweep: cross product of exponent grids, one CSV row per (u1, u2, metric)
inline int cmd_sweep(const json& cfg, const std::string& out_dir, bool quiet = false) {
    if (!cfg.contains("grid")) throw config_error("grid: missing section");
    const json& jg = cfg["grid"];
    auto u1s = require_field<std::vector<double>>(jg, "grid", "upsilon1");
    auto u2s = require_field<std::vector<double>>(jg, "grid", "upsilon2");
    if (u1s.empty() || u2s.empty()) throw config_error("grid: must be nonempty");

    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir + "/sweep.csv");
    if (!out) throw std::runtime_error("cannot open sweep.csv");
    out << "# config_hash=" << config_hash(cfg) << '\n';
    out << "upsilon1,upsilon2,metric,value,status\n";

    int ran = 0;
    for (double u1 : u1s) {
        for (double u2 : u2s) {
            if (!(u1 > 0.5 && u1 < 1.0 && u2 > 0.0 && u2 <= 1.0 - u1)) {
                out << fmt17(u1) << ',' << fmt17(u2) << ",warning,nan,skipped\n";
                if (!quiet)
                    std::fprintf(stderr, "sweep: skipping invalid exponents (%g, %g)\n", u1,
                                 u2);
                continue;
            }
            json point_cfg = cfg;
            point_cfg["algorithm"]["upsilon1"] = u1;
            point_cfg["algorithm"]["upsilon2"] = u2;
            Experiment ex = parse_config(point_cfg);
            auto traces = run_repetitions(ex);
            RunTrace avg = average_traces(traces);
            if (avg.diverged) {
                out << fmt17(u1) << ',' << fmt17(u2) << ",divergence,nan,diverged\n";
                out << fmt17(u1) << ',' << fmt17(u2) << ",cum_regret,nan,diverged\n";
                ++ran;
                continue;
            }
            long long k_hi = ex.algo.max_iters;
            long long k_lo = std::max<long long>(1, k_hi / 10);
            for (auto [name, field] :
                 {std::pair{"divergence", MetricField::divergence},
                  std::pair{"cum_regret", MetricField::cum_regret}}) {
                try {
                    out << fmt17(u1) << ',' << fmt17(u2) << ',' << name << ','
                        << fmt17(loglog_slope(avg, field, k_lo, k_hi)) << ",ok\n";
                } catch (const std::exception&) {
                    out << fmt17(u1) << ',' << fmt17(u2) << ',' << name << ",nan,nofit\n";
                }
            }
            ++ran;
        }
    }
    if (ran == 0) throw config_error("grid: all points skipped");
    return 0;
}

}  // namespace dsgt

#endif
