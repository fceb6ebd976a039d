#ifndef DSGT_TOPOLOGY_HPP
#define DSGT_TOPOLOGY_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include <json.hpp>

namespace dsgt {

struct Topology {
    int n = 0;
    std::vector<std::pair<int, int>> edges;  // undirected, stored with i < j

    bool has_edge(int i, int j) const {
        if (i > j) std::swap(i, j);
        return std::find(edges.begin(), edges.end(), std::make_pair(i, j)) != edges.end();
    }

    std::vector<int> degrees() const {
        std::vector<int> deg(n, 0);
        for (auto [i, j] : edges) { ++deg[i]; ++deg[j]; }
        return deg;
    }

    bool connected() const {
        if (n <= 0) return false;
        std::vector<std::vector<int>> adj(n);
        for (auto [i, j] : edges) { adj[i].push_back(j); adj[j].push_back(i); }
        std::vector<char> seen(n, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        int count = 1;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int v : adj[u])
                if (!seen[v]) { seen[v] = 1; ++count; stack.push_back(v); }
        }
        return count == n;
    }
};

struct MixingMatrix {
    Eigen::MatrixXd w;
    double rho_w = 1.0;
};

// One Bernoulli(p) draw per unordered pair, pairs visited in lexicographic order.
inline Topology sample_er_once(int n, double p, unsigned long long seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Topology t;
    t.n = n;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (unif(rng) < p) t.edges.emplace_back(i, j);
    return t;
}

// Connected Erdős–Rényi graph. Disconnected samples are retried with seed+1,
// seed+2, ... so the result is a deterministic function of (n, p, seed).
inline Topology erdos_renyi(int n, double p, unsigned long long seed,
                            int retry_budget = 10000, int* retries_out = nullptr) {
    if (n < 2) throw std::invalid_argument("erdos_renyi: need n >= 2");
    if (p <= 0.0 || p > 1.0) throw std::invalid_argument("erdos_renyi: need 0 < p <= 1");
    for (int attempt = 0; attempt < retry_budget; ++attempt) {
        Topology t = sample_er_once(n, p, seed + static_cast<unsigned long long>(attempt));
        if (t.connected()) {
            if (retries_out) *retries_out = attempt;
            return t;
        }
    }
    throw std::runtime_error("erdos_renyi: connectivity unreachable within retry budget");
}

inline double spectral_contraction(const Eigen::MatrixXd& w) {
    const auto n = w.rows();
    if (n != w.cols()) throw std::invalid_argument("spectral_contraction: square matrix required");
    const double tol = 1e-9;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(w.row(i).sum() - 1.0) > tol || std::abs(w.col(i).sum() - 1.0) > tol)
            throw std::invalid_argument("spectral_contraction: not doubly stochastic");
    }
    Eigen::MatrixXd m = w - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
    // largest singular value via the symmetric eigenproblem of MᵀM; n stays small
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.transpose() * m);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

inline MixingMatrix metropolis_weights(const Topology& t) {
    if (!t.connected()) throw std::invalid_argument("metropolis_weights: graph must be connected");
    const int n = t.n;
    auto deg = t.degrees();
    MixingMatrix mm;
    mm.w = Eigen::MatrixXd::Zero(n, n);
    for (auto [i, j] : t.edges) {
        double wij = 1.0 / (1.0 + std::max(deg[i], deg[j]));
        mm.w(i, j) = wij;
        mm.w(j, i) = wij;
    }
    for (int i = 0; i < n; ++i) mm.w(i, i) = 1.0 - mm.w.row(i).sum();
    mm.rho_w = spectral_contraction(mm.w);
    return mm;
}

inline void to_json(nlohmann::json& j, const Topology& t) {
    j = nlohmann::json{{"n", t.n}, {"edges", nlohmann::json::array()}};
    for (auto [a, b] : t.edges) j["edges"].push_back({a, b});
}

inline void from_json(const nlohmann::json& j, Topology& t) {
    t.n = j.at("n").get<int>();
    t.edges.clear();
    for (const auto& e : j.at("edges"))
        t.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
}

inline void to_json(nlohmann::json& j, const MixingMatrix& mm) {
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < mm.w.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Eigen::Index k = 0; k < mm.w.cols(); ++k) row.push_back(mm.w(i, k));
        rows.push_back(std::move(row));
    }
    j = nlohmann::json{{"w", std::move(rows)}, {"rho_w", mm.rho_w}};
}

}  // namespace dsgt

#endif
