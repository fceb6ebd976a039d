#ifndef DSGT_OBJECTIVE_HPP
#define DSGT_OBJECTIVE_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsgt {

struct NoiseSpec {
    double variance = 0.0;  // alpha4; additive zero-mean Gaussian
};

struct Dataset {
    Eigen::MatrixXd features;                       // m x d
    Eigen::VectorXd labels;                         // entries in {-1, +1}
    std::vector<std::pair<int, int>> partition;     // per agent [begin, end)

    int m() const { return static_cast<int>(features.rows()); }
    int d() const { return static_cast<int>(features.cols()); }

    // m/n rows each, remainder to the first agents
    void partition_equally(int n_agents) {
        partition.clear();
        int base = m() / n_agents, rem = m() % n_agents, at = 0;
        for (int i = 0; i < n_agents; ++i) {
            int len = base + (i < rem ? 1 : 0);
            partition.emplace_back(at, at + len);
            at += len;
        }
        if (base == 0) throw std::invalid_argument("dataset: empty agent partition");
    }
};

struct AnalyticInfo {
    Eigen::VectorXd x_star;
    double lambda = 0.0;   // strong-convexity modulus of the average objective
    double L = 0.0;        // smoothness constant of the average objective
    double alpha1 = 0.0;   // bound on per-agent Hessian norms
};

enum class ObjectiveKind { quadratic, logistic };

class Objective {
public:
    ObjectiveKind kind = ObjectiveKind::quadratic;
    int dim = 0;
    int n_agents = 0;
    NoiseSpec noise;
    std::optional<AnalyticInfo> analytic;

    // quadratic: F_i(x) = 0.5 (x-c_i)' Q_i (x-c_i), stochastic factor s ~ mean-1
    std::vector<Eigen::MatrixXd> Q;
    std::vector<Eigen::VectorXd> c;
    double s_variance = 1e-4;

    // logistic: global 1/m normalization, per-query multiplicative u ~ N(1, sigma_u)
    Dataset data;
    double c_reg = 0.0;
    double sigma_u = 0.0;

    double deterministic_value(int agent, const Eigen::VectorXd& x) const {
        if (kind == ObjectiveKind::quadratic) {
            Eigen::VectorXd r = x - c[agent];
            return 0.5 * r.dot(Q[agent] * r);
        }
        auto [b, e] = data.partition[agent];
        double acc = 0.0;
        for (int j = b; j < e; ++j)
            acc += std::log1p(std::exp(-data.labels(j) * data.features.row(j).dot(x)));
        return acc / data.m() + c_reg * x.squaredNorm();
    }

    // F(x) = (1/n) sum_i F_i(x), the S-expectation surrogate (u==1, s==1)
    double mean_value(const Eigen::VectorXd& x) const {
        double acc = 0.0;
        for (int i = 0; i < n_agents; ++i) acc += deterministic_value(i, x);
        return acc / n_agents;
    }

    double query(int agent, const Eigen::VectorXd& x, std::mt19937_64& rng) const {
        if (agent < 0 || agent >= n_agents) throw std::invalid_argument("query: bad agent id");
        if (!x.allFinite()) throw std::invalid_argument("query: non-finite point");
        std::normal_distribution<double> gauss(0.0, 1.0);
        double val;
        if (kind == ObjectiveKind::quadratic) {
            double s = 1.0 + std::sqrt(s_variance) * gauss(rng);
            val = deterministic_value(agent, x) * s;
        } else {
            auto [b, e] = data.partition[agent];
            double acc = 0.0;
            for (int j = b; j < e; ++j) {
                double u = 1.0 + sigma_u * gauss(rng);
                acc += std::log1p(std::exp(-u * data.labels(j) * data.features.row(j).dot(x)));
            }
            val = acc / data.m() + c_reg * x.squaredNorm();
        }
        if (noise.variance > 0.0) val += std::sqrt(noise.variance) * gauss(rng);
        return val;
    }

    Eigen::VectorXd grad(int agent, const Eigen::VectorXd& x) const {
        if (kind == ObjectiveKind::quadratic) return Q[agent] * (x - c[agent]);
        auto [b, e] = data.partition[agent];
        Eigen::VectorXd g = 2.0 * c_reg * x;
        for (int j = b; j < e; ++j) {
            double z = data.labels(j) * data.features.row(j).dot(x);
            double sig = 1.0 / (1.0 + std::exp(z));  // sigmoid(-z)
            g -= (sig * data.labels(j) / data.m()) * data.features.row(j).transpose();
        }
        return g;
    }

    Eigen::MatrixXd hessian(int agent, const Eigen::VectorXd& x) const {
        if (kind == ObjectiveKind::quadratic) return Q[agent];
        auto [b, e] = data.partition[agent];
        Eigen::MatrixXd h = 2.0 * c_reg * Eigen::MatrixXd::Identity(dim, dim);
        for (int j = b; j < e; ++j) {
            double z = data.labels(j) * data.features.row(j).dot(x);
            double sig = 1.0 / (1.0 + std::exp(-z));
            h += (sig * (1.0 - sig) / data.m()) * data.features.row(j).transpose() *
                 data.features.row(j);
        }
        return h;
    }
};

// h(x) = (1/n) sum_i grad F_i(x_i), one row of x_stack per agent
inline Eigen::VectorXd true_mean_gradient(const Objective& obj, const Eigen::MatrixXd& x_stack) {
    if (x_stack.rows() != obj.n_agents || x_stack.cols() != obj.dim)
        throw std::invalid_argument("true_mean_gradient: dimension mismatch");
    Eigen::VectorXd h = Eigen::VectorXd::Zero(obj.dim);
    for (int i = 0; i < obj.n_agents; ++i) h += obj.grad(i, x_stack.row(i).transpose());
    return h / obj.n_agents;
}

inline Objective make_quadratic(int n, int d, double condition, unsigned long long seed,
                                double svar = 1e-4, double center_box = 1.0) {
    if (n < 1 || d < 1) throw std::invalid_argument("make_quadratic: need n >= 1, d >= 1");
    if (condition < 1.0) throw std::invalid_argument("make_quadratic: condition must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Objective obj;
    obj.kind = ObjectiveKind::quadratic;
    obj.dim = d;
    obj.n_agents = n;
    obj.s_variance = svar;
    for (int i = 0; i < n; ++i) {
        // Q_i = R' diag(ev) R with a Haar-ish R from QR and eigenvalues in [1, condition]
        Eigen::MatrixXd gm(d, d);
        for (int r = 0; r < d; ++r)
            for (int cidx = 0; cidx < d; ++cidx) gm(r, cidx) = gauss(rng);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(gm);
        Eigen::MatrixXd R = qr.householderQ();
        Eigen::VectorXd ev(d);
        for (int r = 0; r < d; ++r) ev(r) = 1.0 + (condition - 1.0) * unif(rng);
        if (d >= 2) { ev(0) = 1.0; ev(1) = condition; }  // pin the extremes
        else ev(0) = 1.0;
        obj.Q.push_back(R * ev.asDiagonal() * R.transpose());
        Eigen::VectorXd ci(d);
        for (int r = 0; r < d; ++r) ci(r) = center_box * (2.0 * unif(rng) - 1.0);
        obj.c.push_back(ci);
    }

    Eigen::MatrixXd Qsum = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
    double a1 = 0.0;
    for (int i = 0; i < n; ++i) {
        Qsum += obj.Q[i];
        rhs += obj.Q[i] * obj.c[i];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(obj.Q[i]);
        a1 = std::max(a1, es.eigenvalues().maxCoeff());
    }
    AnalyticInfo info;
    info.x_star = Qsum.ldlt().solve(rhs);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Qsum / n);
    info.lambda = es.eigenvalues().minCoeff();
    info.L = es.eigenvalues().maxCoeff();
    info.alpha1 = a1;
    obj.analytic = info;
    return obj;
}

// Newton's method on the u==1 surrogate; the regularizer keeps the Hessian PD.
inline Eigen::VectorXd solve_logistic_optimum(const Objective& obj, double tol = 1e-12,
                                              int max_iter = 200) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(obj.dim);
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd g = true_mean_gradient(
            obj, x.transpose().replicate(obj.n_agents, 1));
        if (g.norm() < tol) break;
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(obj.dim, obj.dim);
        for (int i = 0; i < obj.n_agents; ++i) h += obj.hessian(i, x);
        x -= (h / obj.n_agents).ldlt().solve(g);
    }
    return x;
}

inline Objective make_logistic(const Dataset& data, double c_reg, double sigma_u,
                               NoiseSpec noise = {}) {
    if (c_reg <= 0.0) throw std::invalid_argument("make_logistic: c_reg must be > 0");
    if (data.partition.empty()) throw std::invalid_argument("make_logistic: no partition");
    for (auto [b, e] : data.partition)
        if (e <= b) throw std::invalid_argument("make_logistic: empty agent partition");

    Objective obj;
    obj.kind = ObjectiveKind::logistic;
    obj.dim = data.d();
    obj.n_agents = static_cast<int>(data.partition.size());
    obj.data = data;
    obj.c_reg = c_reg;
    obj.sigma_u = sigma_u;
    obj.noise = noise;

    AnalyticInfo info;
    info.x_star = solve_logistic_optimum(obj);
    info.lambda = 2.0 * c_reg;
    // sigmoid'(z) <= 1/4 gives a global per-agent Hessian bound
    double a1 = 0.0, Lq = 0.0;
    for (int i = 0; i < obj.n_agents; ++i) {
        auto [b, e] = data.partition[i];
        Eigen::MatrixXd xx = Eigen::MatrixXd::Zero(obj.dim, obj.dim);
        for (int j = b; j < e; ++j)
            xx += data.features.row(j).transpose() * data.features.row(j);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(xx);
        a1 = std::max(a1, 0.25 * es.eigenvalues().maxCoeff() / data.m() + 2.0 * c_reg);
        Lq += es.eigenvalues().maxCoeff();
    }
    info.alpha1 = a1;
    info.L = 0.25 * Lq / (data.m() * obj.n_agents) + 2.0 * c_reg;
    obj.analytic = info;
    return obj;
}

// max over sampled points and agents of the per-agent Hessian spectral norm
inline double sample_hessian_alpha1(const Objective& obj, double box, int samples,
                                    unsigned long long seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-box, box);
    double a1 = 0.0;
    for (int s = 0; s < samples; ++s) {
        Eigen::VectorXd x(obj.dim);
        for (int r = 0; r < obj.dim; ++r) x(r) = unif(rng);
        for (int i = 0; i < obj.n_agents; ++i) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(obj.hessian(i, x));
            a1 = std::max(a1, es.eigenvalues().maxCoeff());
        }
    }
    return a1;
}

inline void save_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    for (int j = 0; j < ds.d(); ++j) out << 'f' << j << ',';
    out << "label\n";
    out.precision(17);
    for (int r = 0; r < ds.m(); ++r) {
        for (int j = 0; j < ds.d(); ++j) out << ds.features(r, j) << ',';
        out << static_cast<int>(ds.labels(r)) << '\n';
    }
}

inline Dataset load_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    do {
        if (!std::getline(in, line)) throw std::runtime_error("empty dataset file " + path);
    } while (line.empty() || line[0] == '#');
    int d = static_cast<int>(std::count(line.begin(), line.end(), ','));
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (static_cast<int>(row.size()) != d + 1)
            throw std::runtime_error("ragged row in " + path);
        rows.push_back(std::move(row));
    }
    Dataset ds;
    ds.features.resize(static_cast<Eigen::Index>(rows.size()), d);
    ds.labels.resize(static_cast<Eigen::Index>(rows.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
        for (int j = 0; j < d; ++j) ds.features(static_cast<Eigen::Index>(r), j) = rows[r][j];
        ds.labels(static_cast<Eigen::Index>(r)) = rows[r][d];
    }
    return ds;
}

}  // namespace dsgt

#endif
