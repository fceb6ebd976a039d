#ifndef DSGT_ANALYSIS_HPP
#define DSGT_ANALYSIS_HPP

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsgt/estimator.hpp"
#include "dsgt/objective.hpp"

namespace dsgt {

struct IterationRecord {
    long long k = 0;
    double loss = 0.0;
    double divergence = 0.0;   // ||xbar_k - x*||^2
    double consensus = 0.0;    // sum_i ||x_i - xbar||^2
    double cum_regret = 0.0;
    double accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct RunTrace {
    std::vector<IterationRecord> rows;
    bool has_accuracy = false;
    bool diverged = false;
    long long diverged_at = -1;
};

inline double divergence(const Eigen::MatrixXd& x, const Eigen::VectorXd& x_star) {
    if (x.cols() != x_star.size()) throw std::invalid_argument("divergence: dimension mismatch");
    Eigen::VectorXd xbar = x.colwise().mean();
    return (xbar - x_star).squaredNorm();
}

inline double consensus_error(const Eigen::MatrixXd& x) {
    Eigen::RowVectorXd xbar = x.colwise().mean();
    return (x.rowwise() - xbar).squaredNorm();
}

struct BetaDelta {
    std::vector<double> beta;   // beta[0] = 0
    std::vector<double> delta;  // delta[k] = ((1+rho^2)/2)^k
};

// beta_{k+1} = ((1+rho^2)/2)(beta_k + alpha_k^2), the geometric convolution
// of delta against the squared step sizes
inline BetaDelta beta_sequence(double rho_w, const Schedule& s, long long k_max) {
    if (k_max < 1) throw std::invalid_argument("beta_sequence: k_max must be >= 1");
    const double q = (1.0 + rho_w * rho_w) / 2.0;
    BetaDelta out;
    out.beta.resize(static_cast<size_t>(k_max) + 1);
    out.delta.resize(static_cast<size_t>(k_max) + 1);
    out.beta[0] = 0.0;
    out.delta[0] = 1.0;
    for (long long k = 0; k < k_max; ++k) {
        double a = s.alpha(k);
        out.beta[static_cast<size_t>(k) + 1] = q * (out.beta[static_cast<size_t>(k)] + a * a);
        out.delta[static_cast<size_t>(k) + 1] = q * out.delta[static_cast<size_t>(k)];
    }
    return out;
}

struct Thresholds {
    long long K0 = 0;
    long long K1 = 0;
    long long K2 = 0;
};

inline Thresholds thresholds(double A, const Schedule& s, double rho_w,
                             long long scan_cap = 10000000) {
    if (A <= 0.0) throw std::invalid_argument("thresholds: A must be positive");
    Thresholds t;
    const double q = (1.0 + rho_w * rho_w) / 2.0;
    long long k = 0;
    for (; k <= scan_cap; ++k)
        if (A * s.alpha(k) * s.gamma(k) < 1.0) break;
    if (k > scan_cap) throw std::runtime_error("thresholds: K0 scan cap exceeded");
    t.K0 = k;
    double qk = 1.0;
    for (k = 0; k <= scan_cap; ++k) {
        double a = s.alpha(k);
        if (qk <= a * a) break;
        qk *= q;
    }
    if (k > scan_cap) throw std::runtime_error("thresholds: K1 scan cap exceeded");
    t.K1 = k;
    t.K2 = std::max(t.K0, t.K1);
    return t;
}

struct TheoryConstants {
    double A = 0.0;      // lambda * alpha2
    double B = 0.0;      // alpha1 * alpha3^3
    double C = 0.0;      // alpha2 * L^2 / (lambda * n)
    long long K0 = 0, K1 = 0, K2 = 0;
    double R = 0.0;      // ||x_0 - 1 xbar_0||^2
    double M_bar = 0.0;  // bound on E||gbar||^2 (empirical, x2 safety)
    double G = 0.0;      // bound on ||y - 1 ybar||^2 (empirical, x2 safety)
    double G_bar = 0.0;  // 2 rho^2 G / (1 - rho^2)
    double sigma[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    long long scan_horizon = 0;
};

// sigma_1..sigma_8: maxima over k in [K0, scan_max] of the Eq.-(8) ratios
inline void compute_sigmas(TheoryConstants& tc, const Schedule& s, double rho_w,
                           long long scan_max) {
    BetaDelta bd = beta_sequence(rho_w, s, scan_max + 1);
    for (double& v : tc.sigma) v = -std::numeric_limits<double>::infinity();
    for (long long k = tc.K0; k <= scan_max; ++k) {
        double a = s.alpha(k), g = s.gamma(k);
        double a1 = s.alpha(k + 1), g1 = s.gamma(k + 1);
        double dk = bd.delta[static_cast<size_t>(k)], bk = bd.beta[static_cast<size_t>(k)];
        double kappa = (1.0 - (g1 / g) * (g1 / g)) / (a * g);
        double tau = (1.0 - (a1 / g1) / (a / g)) / (a * g);
        tc.sigma[0] = std::max(tc.sigma[0], kappa);
        tc.sigma[1] = std::max(tc.sigma[1], dk / (g * g));
        tc.sigma[2] = std::max(tc.sigma[2], bk / (g * g));
        tc.sigma[3] = std::max(tc.sigma[3], a / (g * g * g));
        tc.sigma[4] = std::max(tc.sigma[4], tau);
        tc.sigma[5] = std::max(tc.sigma[5], std::sqrt(g * g * g / a));
        tc.sigma[6] = std::max(tc.sigma[6], (g / a) * dk);
        tc.sigma[7] = std::max(tc.sigma[7], (g / a) * bk);
    }
    tc.scan_horizon = scan_max;
}

struct CertificateReport {
    TheoryConstants constants;
    bool sigma1_within_closed_form = false;  // sigma1 < 2 u2 / (a0 g0)
    bool sigma5_within_closed_form = false;  // sigma5 < (u1 - u2) / (a0 g0)
    bool theorem3_condition = false;         // a0 g0 >= max{2 u2, u1 - u2} / A
    bool envelope1_applicable = false;       // sigma1 < A
    bool envelope2_applicable = false;       // sigma5 < A
    double varsigma1 = std::numeric_limits<double>::quiet_NaN();
    double varsigma2 = std::numeric_limits<double>::quiet_NaN();
    long long envelope_checked = 0;  // logged k > K2
    long long envelope1_held = 0;
    long long envelope2_held = 0;
    double rate_exponent = 0.0;      // min{2 u2, u1 - u2}
    std::string note;
};

inline CertificateReport rate_certificate(const TheoryConstants& tc, const Schedule& s,
                                          const RunTrace& trace) {
    CertificateReport rep;
    rep.constants = tc;
    rep.note =
        "consistency check, not a proof: M_bar and G are empirical maxima with a 2x "
        "safety factor";
    const double a0g0 = s.alpha0 * s.gamma0;
    rep.sigma1_within_closed_form = tc.sigma[0] < 2.0 * s.upsilon2 / a0g0;
    rep.sigma5_within_closed_form = tc.sigma[4] < (s.upsilon1 - s.upsilon2) / a0g0;
    rep.theorem3_condition =
        a0g0 >= std::max(2.0 * s.upsilon2, s.upsilon1 - s.upsilon2) / tc.A;
    rep.rate_exponent = std::min(2.0 * s.upsilon2, s.upsilon1 - s.upsilon2);
    rep.envelope1_applicable = tc.sigma[0] < tc.A;
    rep.envelope2_applicable = tc.sigma[4] < tc.A;

    // D at the first logged iterate >= K0 seeds the envelope constants
    const IterationRecord* at_k0 = nullptr;
    for (const auto& r : trace.rows)
        if (r.k >= tc.K0) { at_k0 = &r; break; }

    if (rep.envelope1_applicable && at_k0) {
        double gap = tc.A - tc.sigma[0];
        double half = tc.B / (2.0 * gap);
        double rad = half * half +
                     (tc.C * tc.R * tc.sigma[1] + tc.C * tc.G_bar * tc.sigma[2] +
                      tc.M_bar * tc.sigma[3]) / gap;
        rep.varsigma1 = std::max(std::sqrt(at_k0->divergence) / s.gamma(at_k0->k),
                                 half + std::sqrt(rad));
    }
    if (rep.envelope2_applicable && at_k0) {
        double gap = tc.A - tc.sigma[4];
        double half = tc.B * tc.sigma[5] / (2.0 * gap);
        double rad = half * half +
                     (tc.C * (tc.R * tc.sigma[6] + tc.G_bar * tc.sigma[7]) + tc.M_bar) / gap;
        rep.varsigma2 = std::max(
            std::sqrt(at_k0->divergence * s.gamma(at_k0->k) / s.alpha(at_k0->k)),
            half + std::sqrt(rad));
    }

    for (const auto& r : trace.rows) {
        if (r.k <= tc.K2) continue;
        ++rep.envelope_checked;
        double g = s.gamma(r.k), a = s.alpha(r.k);
        if (rep.envelope1_applicable && std::isfinite(rep.varsigma1) &&
            r.divergence <= rep.varsigma1 * rep.varsigma1 * g * g)
            ++rep.envelope1_held;
        if (rep.envelope2_applicable && std::isfinite(rep.varsigma2) &&
            r.divergence <= rep.varsigma2 * rep.varsigma2 * a / g)
            ++rep.envelope2_held;
    }
    if (!rep.envelope1_applicable && !rep.envelope2_applicable)
        rep.note += "; certificate inapplicable (sigma1 >= A and sigma5 >= A)";
    return rep;
}

enum class MetricField { loss, divergence, consensus, cum_regret };

inline double metric_of(const IterationRecord& r, MetricField f) {
    switch (f) {
        case MetricField::loss: return r.loss;
        case MetricField::divergence: return r.divergence;
        case MetricField::consensus: return r.consensus;
        case MetricField::cum_regret: return r.cum_regret;
    }
    return 0.0;
}

// least-squares slope of log(metric) vs log(k) on [k_lo, k_hi], geometrically
// subsampled so dense low-k logging does not dominate the fit
inline double loglog_slope(const RunTrace& trace, MetricField field, long long k_lo,
                           long long k_hi, int target_points = 200) {
    if (k_lo < 1 || k_hi <= k_lo) throw std::invalid_argument("loglog_slope: bad window");
    std::vector<std::pair<double, double>> pts;
    double next_k = static_cast<double>(k_lo);
    const double ratio =
        std::pow(static_cast<double>(k_hi) / static_cast<double>(k_lo),
                 1.0 / std::max(1, target_points - 1));
    for (const auto& r : trace.rows) {
        if (r.k < k_lo || r.k > k_hi) continue;
        if (static_cast<double>(r.k) + 1e-9 < next_k) continue;
        double v = metric_of(r, field);
        if (v > 0.0) pts.emplace_back(std::log(static_cast<double>(r.k)), std::log(v));
        while (next_k <= static_cast<double>(r.k)) next_k = std::max(next_k * ratio, next_k + 1.0);
    }
    if (pts.size() < 10) throw std::runtime_error("loglog_slope: fewer than 10 points in window");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [x, y] : pts) { sx += x; sy += y; sxx += x * x; sxy += x * y; }
    double n = static_cast<double>(pts.size());
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct BiasProbe {
    Eigen::VectorXd empirical_bias;
    double bound = 0.0;
    double standard_error = 0.0;  // SE of the mean-vector norm: sqrt(sum_j var_j / N)
};

// Monte-Carlo mean of g/(alpha2*gamma) minus the analytic gradient
inline BiasProbe bias_probe(const Objective& obj, int agent, const Eigen::VectorXd& x,
                            double gamma, const PerturbationSpec& spec, long long samples,
                            unsigned long long seed) {
    if (!obj.analytic) throw std::runtime_error("bias_probe: analytic gradient required");
    std::mt19937_64 phi_rng(seed), query_rng(seed ^ 0x9e3779b97f4a7c15ull);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(obj.dim);
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(obj.dim);
    const double denom = spec.alpha2() * gamma;
    for (long long t = 0; t < samples; ++t) {
        GradientEstimate e = estimate(obj, agent, x, gamma, spec, phi_rng, query_rng);
        Eigen::VectorXd v = e.g / denom;
        Eigen::VectorXd dlt = v - mean;
        mean += dlt / static_cast<double>(t + 1);
        m2 += dlt.cwiseProduct(v - mean);
    }
    BiasProbe out;
    out.empirical_bias = mean - obj.grad(agent, x);
    out.bound = bias_bound(gamma, spec, obj.analytic->alpha1);
    double var_sum = m2.sum() / static_cast<double>(samples - 1);
    out.standard_error = std::sqrt(var_sum / static_cast<double>(samples));
    return out;
}

// sign(X theta) vs label; a zero margin counts as +1
inline double accuracy(const Eigen::VectorXd& theta, const Dataset& test) {
    if (test.m() == 0) throw std::invalid_argument("accuracy: empty test set");
    if (test.d() != theta.size()) throw std::invalid_argument("accuracy: dimension mismatch");
    int hits = 0;
    for (int r = 0; r < test.m(); ++r) {
        double pred = test.features.row(r).dot(theta) >= 0.0 ? 1.0 : -1.0;
        if (pred == test.labels(r)) ++hits;
    }
    return static_cast<double>(hits) / test.m();
}

inline void to_json(nlohmann::json& j, const TheoryConstants& tc) {
    j = nlohmann::json{{"A", tc.A},       {"B", tc.B},
                       {"C", tc.C},       {"K0", tc.K0},
                       {"K1", tc.K1},     {"K2", tc.K2},
                       {"R", tc.R},       {"M_bar", tc.M_bar},
                       {"G", tc.G},       {"G_bar", tc.G_bar},
                       {"scan_horizon", tc.scan_horizon}};
    for (int i = 0; i < 8; ++i) j["sigma" + std::to_string(i + 1)] = tc.sigma[i];
}

inline void to_json(nlohmann::json& j, const CertificateReport& rep) {
    j = nlohmann::json{
        {"constants", rep.constants},
        {"sigma1_within_closed_form", rep.sigma1_within_closed_form},
        {"sigma5_within_closed_form", rep.sigma5_within_closed_form},
        {"theorem3_condition", rep.theorem3_condition},
        {"envelope1_applicable", rep.envelope1_applicable},
        {"envelope2_applicable", rep.envelope2_applicable},
        {"envelope_checked", rep.envelope_checked},
        {"envelope1_held", rep.envelope1_held},
        {"envelope2_held", rep.envelope2_held},
        {"rate_exponent", rep.rate_exponent},
        {"note", rep.note}};
    if (std::isfinite(rep.varsigma1)) j["varsigma1"] = rep.varsigma1;
    if (std::isfinite(rep.varsigma2)) j["varsigma2"] = rep.varsigma2;
}

}  // namespace dsgt

#endif
