#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "format.hpp"
#include "graph.hpp"
#include "rng.hpp"

namespace mrfsel {

/// Zero-mean Gaussian MRF given by its precision matrix.
struct GaussianPrecision {
    Eigen::MatrixXd theta;
    double tau = 1.0;

    int p() const { return static_cast<int>(theta.rows()); }
};

struct Coupling {
    Edge edge;
    double value;
};

struct Neighbor {
    int vertex;
    double coupling;
};

/// Pairwise discrete MRF with one coupling per edge. Ising uses states
/// {-1, +1}; Potts uses states 1..k.
struct PairwiseParams {
    int p = 0;
    std::vector<Coupling> couplings;
    std::vector<std::vector<Neighbor>> adjacency;

    PairwiseParams() = default;

    PairwiseParams(int p_, std::vector<Coupling> c) : p(p_), couplings(std::move(c)), adjacency(p_) {
        for (const auto& [e, v] : couplings) {
            if (!std::isfinite(v) || v == 0.0) throw std::invalid_argument("couplings must be finite and nonzero");
            if (e.first < 0 || e.second >= p || e.first == e.second) throw std::invalid_argument("bad coupling edge");
            adjacency[e.first].push_back({e.second, v});
            adjacency[e.second].push_back({e.first, v});
        }
    }

    Graph graph() const {
        EdgeList e;
        for (const auto& c : couplings) e.push_back(c.edge);
        return Graph(p, std::move(e));
    }
};

struct IsingParams : PairwiseParams {
    using PairwiseParams::PairwiseParams;
    static constexpr int states = 2;
};

struct PottsParams : PairwiseParams {
    int k = 3;
    Eigen::MatrixXd node_potentials;  // p x k, column l-1 holds state l

    PottsParams() = default;
    PottsParams(int p_, int k_, std::vector<Coupling> c)
        : PairwiseParams(p_, std::move(c)), k(k_), node_potentials(Eigen::MatrixXd::Zero(p_, k_)) {
        if (k < 3) throw std::invalid_argument("Potts model needs k >= 3 (use Ising for k = 2)");
    }
};

/// Distribution used to draw one coupling per edge.
struct CouplingLaw {
    enum class Kind { constant, uniform, rademacher };
    Kind kind = Kind::constant;
    double a = 0.25;
    double b = 0.25;

    static CouplingLaw constant(double c) {
        if (c == 0.0 || !std::isfinite(c)) throw std::invalid_argument("constant coupling must be finite and nonzero");
        return {Kind::constant, c, c};
    }
    static CouplingLaw uniform(double lo, double hi) {
        if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) throw std::invalid_argument("uniform coupling needs lo < hi");
        return {Kind::uniform, lo, hi};
    }
    static CouplingLaw rademacher(double c) {
        if (c == 0.0 || !std::isfinite(c)) throw std::invalid_argument("rademacher coupling must be finite and nonzero");
        return {Kind::rademacher, c, c};
    }

    double draw(Rng& rng) const {
        switch (kind) {
            case Kind::constant:
                return a;
            case Kind::uniform: {
                std::uniform_real_distribution<double> u(a, b);
                double v = 0.0;
                while (v == 0.0) v = u(rng);
                return v;
            }
            case Kind::rademacher:
                return std::bernoulli_distribution(0.5)(rng) ? a : -a;
        }
        return a;
    }
};

namespace detail {

inline bool is_positive_definite(const Eigen::MatrixXd& m) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    return llt.info() == Eigen::Success;
}

inline std::vector<Coupling> draw_couplings(const Graph& g, const CouplingLaw& law, Rng& rng) {
    std::vector<Coupling> c;
    c.reserve(g.m());
    for (const auto& e : g.edges()) c.push_back({e, law.draw(rng)});
    return c;
}

}  // namespace detail

/// Precision matrix with `coupling` on edges and the smallest diagonal
/// tau in {1.0, 1.1, 1.2, ...} that makes it positive definite.
inline GaussianPrecision build_gmrf(const Graph& g, double coupling = 0.5) {
    if (g.p() < 2) throw std::invalid_argument("build_gmrf needs p >= 2");
    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(g.p(), g.p());
    for (const auto& e : g.edges()) theta(e.first, e.second) = theta(e.second, e.first) = coupling;
    // tau > |coupling| * max_degree is diagonally dominant, so the loop ends.
    for (int step = 0;; ++step) {
        const double tau = 1.0 + 0.1 * step;
        theta.diagonal().setConstant(tau);
        if (detail::is_positive_definite(theta)) return {theta, tau};
    }
}

/// E[X_s | X_rest] = -sum_{t != s} theta_st / theta_ss * x_t.
inline double gmrf_conditional_mean(const GaussianPrecision& m, int s, std::span<const double> x) {
    double acc = 0.0;
    for (int t = 0; t < m.p(); ++t)
        if (t != s) acc += m.theta(s, t) * x[t];
    return -acc / m.theta(s, s);
}

inline IsingParams build_ising(const Graph& g, const CouplingLaw& law, Rng& rng) {
    if (g.p() < 2) throw std::invalid_argument("build_ising needs p >= 2");
    return IsingParams(g.p(), detail::draw_couplings(g, law, rng));
}

inline PottsParams build_potts(const Graph& g, int k, const CouplingLaw& law, Rng& rng) {
    if (k < 3) throw std::invalid_argument("build_potts needs k >= 3 (use build_ising for two states)");
    if (g.p() < 2) throw std::invalid_argument("build_potts needs p >= 2");
    return PottsParams(g.p(), k, detail::draw_couplings(g, law, rng));
}

/// P(X_s = +1 | rest) for an Ising model.
inline double ising_conditional(const IsingParams& m, int s, std::span<const int> x) {
    double field = 0.0;
    for (const auto& [t, theta] : m.adjacency.at(s)) {
        if (x[t] != 1 && x[t] != -1) throw std::invalid_argument("Ising state must be -1 or +1");
        field += theta * x[t];
    }
    return 1.0 / (1.0 + std::exp(-2.0 * field));
}

/// Conditional distribution of X_s over states 1..k (returned 0-indexed).
inline std::vector<double> potts_conditional(const PottsParams& m, int s, std::span<const int> x) {
    std::vector<double> logits(m.k);
    for (int l = 0; l < m.k; ++l) logits[l] = m.node_potentials(s, l);
    for (const auto& [t, theta] : m.adjacency.at(s)) {
        if (x[t] < 1 || x[t] > m.k) throw std::invalid_argument("Potts state out of range");
        for (int l = 0; l < m.k; ++l) logits[l] += (x[t] == l + 1) ? theta : -theta;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& v : logits) z += (v = std::exp(v - mx));
    for (double& v : logits) v /= z;
    return logits;
}

/// Unnormalized log-probability of a full configuration.
inline double log_weight(const IsingParams& m, std::span<const int> x) {
    double w = 0.0;
    for (const auto& [e, theta] : m.couplings) w += theta * x[e.first] * x[e.second];
    return w;
}

inline double log_weight(const PottsParams& m, std::span<const int> x) {
    double w = 0.0;
    for (int s = 0; s < m.p; ++s) w += m.node_potentials(s, x[s] - 1);
    for (const auto& [e, theta] : m.couplings) w += (x[e.first] == x[e.second]) ? theta : -theta;
    return w;
}

inline int state_count(const IsingParams&) { return 2; }
inline int state_count(const PottsParams& m) { return m.k; }

/// Maps a digit in [0, states) to the model's state label and back.
inline int state_label(const IsingParams&, int digit) { return digit == 0 ? -1 : 1; }
inline int state_label(const PottsParams&, int digit) { return digit + 1; }
inline int state_digit(const IsingParams&, int label) { return label == -1 ? 0 : 1; }
inline int state_digit(const PottsParams&, int label) { return label - 1; }

/// Exact probability table. Outcome index is the mixed-radix number whose
/// most significant digit is vertex 0.
struct ExactDistribution {
    int p = 0;
    int states = 0;
    std::vector<double> prob;
    double log_z = 0.0;

    double z() const { return std::exp(log_z); }
};

inline constexpr std::uint64_t kMaxEnumeration = std::uint64_t{1} << 20;

template <typename Model>
std::size_t outcome_index(const Model& m, std::span<const int> x) {
    std::size_t idx = 0;
    const int k = state_count(m);
    for (int s = 0; s < m.p; ++s) idx = idx * k + static_cast<std::size_t>(state_digit(m, x[s]));
    return idx;
}

template <typename Model>
std::vector<int> outcome_state(const Model& m, std::size_t idx) {
    const int k = state_count(m);
    std::vector<int> x(m.p);
    for (int s = m.p - 1; s >= 0; --s) {
        x[s] = state_label(m, static_cast<int>(idx % k));
        idx /= k;
    }
    return x;
}

template <typename Model>
ExactDistribution enumerate_exact(const Model& m) {
    const int k = state_count(m);
    std::uint64_t total = 1;
    for (int s = 0; s < m.p; ++s) {
        total *= static_cast<std::uint64_t>(k);
        if (total > kMaxEnumeration) {
            throw std::invalid_argument("state space too large to enumerate (limit 2^20 outcomes)");
        }
    }
    ExactDistribution d{m.p, k, std::vector<double>(total), 0.0};
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < total; ++i) {
        d.prob[i] = log_weight(m, outcome_state(m, i));
        mx = std::max(mx, d.prob[i]);
    }
    double z = 0.0;
    for (double& v : d.prob) z += (v = std::exp(v - mx));
    for (double& v : d.prob) v /= z;
    d.log_z = mx + std::log(z);
    return d;
}

// ---- model file -----------------------------------------------------------
// Header "gmrf|ising|potts p k"; then "s t value" lines (1-based). GMRF files
// list the upper triangle including the diagonal. Potts node potentials are
// written as "s 0 v_1 ... v_k" for rows that are not all zero.

using Model = std::variant<GaussianPrecision, IsingParams, PottsParams>;

inline void write_model(std::ostream& out, const GaussianPrecision& m) {
    out << "gmrf " << m.p() << " 0\n";
    for (int s = 0; s < m.p(); ++s)
        for (int t = s; t < m.p(); ++t)
            if (m.theta(s, t) != 0.0) out << s + 1 << ' ' << t + 1 << ' ' << format_double(m.theta(s, t)) << '\n';
}

inline void write_model(std::ostream& out, const IsingParams& m) {
    out << "ising " << m.p << " 2\n";
    for (const auto& [e, v] : m.couplings) out << e.first + 1 << ' ' << e.second + 1 << ' ' << format_double(v) << '\n';
}

inline void write_model(std::ostream& out, const PottsParams& m) {
    out << "potts " << m.p << ' ' << m.k << '\n';
    for (int s = 0; s < m.p; ++s) {
        if (m.node_potentials.row(s).isZero(0.0)) continue;
        out << s + 1 << " 0";
        for (int l = 0; l < m.k; ++l) out << ' ' << format_double(m.node_potentials(s, l));
        out << '\n';
    }
    for (const auto& [e, v] : m.couplings) out << e.first + 1 << ' ' << e.second + 1 << ' ' << format_double(v) << '\n';
}

inline void write_model(std::ostream& out, const Model& m) {
    std::visit([&](const auto& v) { write_model(out, v); }, m);
}

inline Model read_model(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("model file: missing header");
    std::istringstream header(line);
    std::string kind;
    int p = 0, k = 0;
    if (!(header >> kind >> p >> k) || p < 1) throw std::runtime_error("model file: bad header '" + line + "'");

    Eigen::MatrixXd theta;
    Eigen::MatrixXd potentials;
    std::vector<Coupling> couplings;
    if (kind == "gmrf") {
        theta = Eigen::MatrixXd::Zero(p, p);
    } else if (kind == "potts") {
        if (k < 3) throw std::runtime_error("model file: potts needs k >= 3");
        potentials = Eigen::MatrixXd::Zero(p, k);
    } else if (kind != "ising") {
        throw std::runtime_error("model file: unknown kind '" + kind + "'");
    }

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        int s = 0, t = 0;
        std::string tok;
        if (!(row >> s >> t) || s < 1 || s > p || t < 0 || t > p) throw std::runtime_error("model file: bad line '" + line + "'");
        std::vector<double> values;
        while (row >> tok) values.push_back(parse_double(tok));
        if (t == 0) {
            if (kind != "potts" || static_cast<int>(values.size()) != k) {
                throw std::runtime_error("model file: bad node potential line '" + line + "'");
            }
            for (int l = 0; l < k; ++l) potentials(s - 1, l) = values[l];
            continue;
        }
        if (values.size() != 1) throw std::runtime_error("model file: bad line '" + line + "'");
        if (kind == "gmrf") {
            theta(s - 1, t - 1) = theta(t - 1, s - 1) = values[0];
        } else {
            couplings.push_back({Edge(s - 1, t - 1), values[0]});
        }
    }
    if (kind == "gmrf") {
        const double tau = theta(0, 0);
        return GaussianPrecision{theta, tau};
    }
    if (kind == "ising") return IsingParams(p, std::move(couplings));
    PottsParams m(p, k, std::move(couplings));
    m.node_potentials = potentials;
    return m;
}

}  // namespace mrfsel
