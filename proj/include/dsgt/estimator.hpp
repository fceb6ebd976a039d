#ifndef DSGT_ESTIMATOR_HPP
#define DSGT_ESTIMATOR_HPP

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <stdexcept>

#include "dsgt/objective.hpp"

namespace dsgt {

struct Schedule {
    double alpha0 = 0.2;
    double upsilon1 = 0.75;
    double gamma0 = 1.3;
    double upsilon2 = 0.25;

    void validate() const {
        if (alpha0 <= 0.0 || gamma0 <= 0.0)
            throw std::invalid_argument("schedule: alpha0 and gamma0 must be positive");
        if (!(upsilon1 > 0.5 && upsilon1 < 1.0))
            throw std::invalid_argument("schedule: need 0.5 < upsilon1 < 1");
        if (!(upsilon2 > 0.0 && upsilon2 <= 1.0 - upsilon1))
            throw std::invalid_argument("schedule: need 0 < upsilon2 <= 1 - upsilon1");
    }

    double alpha(long long k) const { return alpha0 * std::pow(k + 1.0, -upsilon1); }
    double gamma(long long k) const { return gamma0 * std::pow(k + 1.0, -upsilon2); }
};

inline std::pair<double, double> step_sizes(const Schedule& s, long long k) {
    if (k < 0) throw std::invalid_argument("step_sizes: k must be >= 0");
    return {s.alpha(k), s.gamma(k)};
}

// Scaled symmetric Bernoulli perturbation: each coordinate ±scale/sqrt(d),
// so the norm is exactly `scale` and per-coordinate second moment scale^2/d.
struct PerturbationSpec {
    int dim = 1;
    double scale = 1.0;

    double alpha2() const { return scale * scale / dim; }
    double alpha3() const { return scale; }
};

inline Eigen::VectorXd sample_perturbation(const PerturbationSpec& spec, std::mt19937_64& rng) {
    const double mag = spec.scale / std::sqrt(static_cast<double>(spec.dim));
    Eigen::VectorXd phi(spec.dim);
    for (int i = 0; i < spec.dim; ++i) phi(i) = (rng() & 1ull) ? mag : -mag;
    return phi;
}

struct GradientEstimate {
    Eigen::VectorXd g;
    Eigen::VectorXd probe_point;
    Eigen::VectorXd phi;
    double f_value = 0.0;
};

// One-point estimate: a single noisy query at x + gamma*phi, scaled by phi.
inline GradientEstimate estimate(const Objective& obj, int agent, const Eigen::VectorXd& x,
                                 double gamma_k, const PerturbationSpec& spec,
                                 std::mt19937_64& phi_rng, std::mt19937_64& query_rng) {
    if (gamma_k <= 0.0) throw std::invalid_argument("estimate: gamma_k must be positive");
    GradientEstimate e;
    e.phi = sample_perturbation(spec, phi_rng);
    e.probe_point = x + gamma_k * e.phi;
    e.f_value = obj.query(agent, e.probe_point, query_rng);
    e.g = e.phi * e.f_value;
    return e;
}

inline double bias_bound(double gamma_k, const PerturbationSpec& spec, double alpha1) {
    if (alpha1 < 0.0) throw std::invalid_argument("bias_bound: alpha1 must be >= 0");
    double a3 = spec.alpha3();
    return gamma_k * a3 * a3 * a3 * alpha1 / (2.0 * spec.alpha2());
}

}  // namespace dsgt

#endif
