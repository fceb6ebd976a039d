#ifndef DSGT_ENGINE_HPP
#define DSGT_ENGINE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "dsgt/analysis.hpp"
#include "dsgt/estimator.hpp"
#include "dsgt/objective.hpp"
#include "dsgt/topology.hpp"

namespace dsgt {

constexpr double kDivergenceGuard = 1e12;

struct divergence_error : std::runtime_error {
    long long at_k;
    explicit divergence_error(long long k)
        : std::runtime_error("iterate magnitude exceeded divergence guard"), at_k(k) {}
};

enum class Algorithm { onepoint_dsgt, dsgt_noisygrad };

struct AlgoConfig {
    Algorithm algorithm = Algorithm::onepoint_dsgt;
    Schedule schedule;
    PerturbationSpec perturbation;   // onepoint only
    double grad_noise_std = 1.0;     // dsgt baseline only
    std::uint64_t seed = 0;
    long long max_iters = 1000;
    double x0_box = 0.5;
};

// one independent stream per agent per role, so agent randomness stays
// uncorrelated and runs are bit-reproducible
inline std::mt19937_64 make_stream(std::uint64_t seed, int agent, int role) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(agent), static_cast<std::uint32_t>(role)};
    return std::mt19937_64(seq);
}

struct SwarmState {
    long long k = 0;
    Eigen::MatrixXd x, y, g_prev;  // n x d each
    std::vector<std::mt19937_64> phi_rng, query_rng, noise_rng;
};

inline void check_guard(const SwarmState& st) {
    if (st.x.cwiseAbs().maxCoeff() > kDivergenceGuard ||
        st.y.cwiseAbs().maxCoeff() > kDivergenceGuard)
        throw divergence_error(st.k);
}

inline SwarmState init(const Objective& obj, const MixingMatrix& w, const AlgoConfig& cfg,
                       double x0_box) {
    const int n = obj.n_agents, d = obj.dim;
    if (w.w.rows() != n) throw std::invalid_argument("init: topology/objective size mismatch");
    SwarmState st;
    st.x.resize(n, d);
    st.g_prev.resize(n, d);
    for (int i = 0; i < n; ++i) {
        st.phi_rng.push_back(make_stream(cfg.seed, i, 1));
        st.query_rng.push_back(make_stream(cfg.seed, i, 2));
        st.noise_rng.push_back(make_stream(cfg.seed, i, 3));
    }
    std::mt19937_64 x0_rng = make_stream(cfg.seed, 0, 0);
    std::uniform_real_distribution<double> unif(-x0_box, x0_box);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) st.x(i, j) = x0_box > 0.0 ? unif(x0_rng) : 0.0;

    const double gamma0 = cfg.schedule.gamma(0);
    for (int i = 0; i < n; ++i) {
        if (cfg.algorithm == Algorithm::onepoint_dsgt) {
            GradientEstimate e = estimate(obj, i, st.x.row(i).transpose(), gamma0,
                                          cfg.perturbation, st.phi_rng[i], st.query_rng[i]);
            st.g_prev.row(i) = e.g.transpose();
        } else {
            Eigen::VectorXd g = obj.grad(i, st.x.row(i).transpose());
            std::normal_distribution<double> gauss(0.0, cfg.grad_noise_std);
            for (int j = 0; j < d; ++j) g(j) += gauss(st.noise_rng[i]);
            st.g_prev.row(i) = g.transpose();
        }
    }
    st.y = st.g_prev;  // y_0 = g_0
    st.k = 0;
    return st;
}

inline void step(SwarmState& st, const Objective& obj, const MixingMatrix& w,
                 const AlgoConfig& cfg) {
    const auto [alpha_k, gamma_k] = step_sizes(cfg.schedule, st.k);
    (void)gamma_k;
    const double gamma_next = cfg.schedule.gamma(st.k + 1);

    st.x = w.w * (st.x - alpha_k * st.y);

    Eigen::MatrixXd g_new(st.x.rows(), st.x.cols());
    for (int i = 0; i < obj.n_agents; ++i) {
        if (cfg.algorithm == Algorithm::onepoint_dsgt) {
            GradientEstimate e = estimate(obj, i, st.x.row(i).transpose(), gamma_next,
                                          cfg.perturbation, st.phi_rng[i], st.query_rng[i]);
            g_new.row(i) = e.g.transpose();
        } else {
            Eigen::VectorXd g = obj.grad(i, st.x.row(i).transpose());
            std::normal_distribution<double> gauss(0.0, cfg.grad_noise_std);
            for (int j = 0; j < obj.dim; ++j) g(j) += gauss(st.noise_rng[i]);
            g_new.row(i) = g.transpose();
        }
    }
    st.y = w.w * st.y + g_new - st.g_prev;
    st.g_prev = g_new;
    ++st.k;
    check_guard(st);
}

// Full run with metric logging every `stride` rounds (plus the last round).
// Divergence aborts the loop but keeps the partial trace.
inline RunTrace run(const Objective& obj, const MixingMatrix& w, const AlgoConfig& cfg,
                    long long stride = 1, const Dataset* test = nullptr) {
    if (stride < 1) throw std::invalid_argument("run: stride must be >= 1");
    cfg.schedule.validate();
    RunTrace trace;
    trace.has_accuracy = test != nullptr;
    Eigen::VectorXd x_star = obj.analytic ? obj.analytic->x_star
                                          : Eigen::VectorXd::Zero(obj.dim).eval();
    const double f_star = obj.mean_value(x_star);

    SwarmState st = init(obj, w, cfg, cfg.x0_box);
    double cum_regret = 0.0;
    auto log_row = [&](const SwarmState& s) {
        IterationRecord r;
        r.k = s.k;
        Eigen::VectorXd xbar = s.x.colwise().mean();
        r.loss = obj.mean_value(xbar);
        r.divergence = (xbar - x_star).squaredNorm();
        r.consensus = consensus_error(s.x);
        r.cum_regret = cum_regret;
        if (test) r.accuracy = accuracy(xbar, *test);
        trace.rows.push_back(r);
    };

    try {
        for (long long k = 0; k < cfg.max_iters; ++k) {
            step(st, obj, w, cfg);
            Eigen::VectorXd xbar = st.x.colwise().mean();
            cum_regret += obj.mean_value(xbar) - f_star;
            if (st.k % stride == 0 || st.k == cfg.max_iters) log_row(st);
        }
    } catch (const divergence_error& e) {
        trace.diverged = true;
        trace.diverged_at = e.at_k;
    }
    return trace;
}

}  // namespace dsgt

#endif
