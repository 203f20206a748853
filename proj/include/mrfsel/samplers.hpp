#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "format.hpp"
#include "models.hpp"
#include "rng.hpp"

namespace mrfsel {

enum class SampleKind { real, ising, potts };

/// n x p observations; column j belongs to vertex j. Discrete entries hold
/// the state labels (-1/+1 for Ising, 1..k for Potts).
struct SampleMatrix {
    Eigen::MatrixXd data;
    SampleKind kind = SampleKind::real;
    int k = 0;  // number of states; 0 for real data

    int n() const { return static_cast<int>(data.rows()); }
    int p() const { return static_cast<int>(data.cols()); }
};

struct ChainConfig {
    int burn_in = 200;
    int thin = 5;
    std::uint64_t seed = 0;
    // Run a fresh chain (with its own burn-in) for every retained sample.
    bool independent_chains = false;

    void validate() const {
        if (burn_in < 0) throw std::invalid_argument("burn_in must be >= 0");
        if (thin < 1) throw std::invalid_argument("thin must be >= 1");
    }
};

inline SampleMatrix sample_gaussian(const GaussianPrecision& prec, int n, Rng& rng) {
    if (n < 0) throw std::invalid_argument("sample count must be >= 0");
    Eigen::LLT<Eigen::MatrixXd> llt(prec.theta);
    if (llt.info() != Eigen::Success) throw std::runtime_error("precision matrix is not positive definite");
    const int p = prec.p();
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd z(p, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) z(j, i) = normal(rng);
    // Theta = L L^T, x = L^{-T} z has covariance Theta^{-1}.
    Eigen::MatrixXd x = llt.matrixU().solve(z);
    return {x.transpose(), SampleKind::real, 0};
}

namespace detail {

inline void gibbs_site(const IsingParams& m, int s, std::vector<int>& x, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    x[s] = u(rng) < ising_conditional(m, s, x) ? 1 : -1;
}

inline void gibbs_site(const PottsParams& m, int s, std::vector<int>& x, Rng& rng) {
    const auto probs = potts_conditional(m, s, x);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double r = u(rng);
    int l = 0;
    for (; l + 1 < m.k; ++l) {
        r -= probs[l];
        if (r < 0.0) break;
    }
    x[s] = l + 1;
}

template <typename Model>
std::vector<int> random_state(const Model& m, Rng& rng) {
    std::uniform_int_distribution<int> digit(0, state_count(m) - 1);
    std::vector<int> x(m.p);
    for (auto& v : x) v = state_label(m, digit(rng));
    return x;
}

template <typename Model, typename Step>
SampleMatrix run_chain(const Model& m, int n, const ChainConfig& cfg, Rng& rng, Step&& step) {
    cfg.validate();
    if (n < 0) throw std::invalid_argument("sample count must be >= 0");
    SampleMatrix out{Eigen::MatrixXd(n, m.p), SampleKind::ising, state_count(m)};
    if constexpr (std::is_same_v<Model, PottsParams>) out.kind = SampleKind::potts;
    std::vector<int> x = random_state(m, rng);
    for (int it = 0; it < cfg.burn_in; ++it) step(x);
    for (int i = 0; i < n; ++i) {
        if (cfg.independent_chains && i > 0) {
            x = random_state(m, rng);
            for (int it = 0; it < cfg.burn_in; ++it) step(x);
        }
        for (int it = 0; it < cfg.thin; ++it) step(x);
        for (int s = 0; s < m.p; ++s) out.data(i, s) = x[s];
    }
    return out;
}

// Disjoint-set forest over vertices, used for bond clusters.
class UnionFind {
public:
    explicit UnionFind(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    int find(int v) {
        while (parent_[v] != v) {
            parent_[v] = parent_[parent_[v]];
            v = parent_[v];
        }
        return v;
    }

    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<int> parent_;
};

inline double potential(const IsingParams&, int, int) { return 0.0; }
inline double potential(const PottsParams& m, int s, int digit) { return m.node_potentials(s, digit); }

template <typename Model>
void swendsen_wang_step(const Model& m, std::vector<int>& x, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    UnionFind uf(m.p);
    for (const auto& [e, theta] : m.couplings) {
        if (x[e.first] == x[e.second] && u(rng) < 1.0 - std::exp(-2.0 * theta)) uf.unite(e.first, e.second);
    }
    const int k = state_count(m);
    // Each cluster takes state l with probability proportional to
    // exp(sum of node potentials of its members); uniform without potentials.
    std::vector<std::vector<double>> logit(m.p);
    for (int v = 0; v < m.p; ++v) {
        auto& row = logit[uf.find(v)];
        if (row.empty()) row.assign(k, 0.0);
        for (int l = 0; l < k; ++l) row[l] += potential(m, v, l);
    }
    std::vector<int> label(m.p, -1);
    for (int v = 0; v < m.p; ++v) {
        if (logit[v].empty()) continue;
        auto& row = logit[v];
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double& w : row) z += (w = std::exp(w - mx));
        double r = u(rng) * z;
        int l = 0;
        for (; l + 1 < k; ++l) {
            r -= row[l];
            if (r < 0.0) break;
        }
        label[v] = state_label(m, l);
    }
    for (int v = 0; v < m.p; ++v) x[v] = label[uf.find(v)];
}

}  // namespace detail

/// Systematic-scan Gibbs sampler; one sweep visits every vertex once.
template <typename Model>
SampleMatrix gibbs_sample(const Model& m, int n, const ChainConfig& cfg, Rng& rng) {
    return detail::run_chain(m, n, cfg, rng, [&](std::vector<int>& x) {
        for (int s = 0; s < m.p; ++s) detail::gibbs_site(m, s, x, rng);
    });
}

template <typename Model>
SampleMatrix gibbs_sample(const Model& m, int n, const ChainConfig& cfg) {
    Rng rng(cfg.seed);
    return gibbs_sample(m, n, cfg, rng);
}

/// Swendsen-Wang cluster sampler. Agreeing edges bond with probability
/// 1 - exp(-2 theta); bond clusters are relabeled jointly. Ferromagnetic
/// couplings only.
template <typename Model>
SampleMatrix swendsen_wang_sample(const Model& m, int n, const ChainConfig& cfg, Rng& rng) {
    for (const auto& c : m.couplings) {
        if (!(c.value > 0.0)) {
            throw std::invalid_argument("Swendsen-Wang needs all couplings > 0 (edge " +
                                        std::to_string(c.edge.first + 1) + "-" + std::to_string(c.edge.second + 1) +
                                        " has " + format_double(c.value) + "); use gibbs_sample instead");
        }
    }
    return detail::run_chain(m, n, cfg, rng, [&](std::vector<int>& x) { detail::swendsen_wang_step(m, x, rng); });
}

template <typename Model>
SampleMatrix swendsen_wang_sample(const Model& m, int n, const ChainConfig& cfg) {
    Rng rng(cfg.seed);
    return swendsen_wang_sample(m, n, cfg, rng);
}

/// Empirical outcome frequencies, indexed as in enumerate_exact.
template <typename Model>
std::vector<double> empirical_distribution(const Model& m, const SampleMatrix& s) {
    std::size_t total = 1;
    for (int v = 0; v < m.p; ++v) total *= static_cast<std::size_t>(state_count(m));
    std::vector<double> freq(total, 0.0);
    std::vector<int> x(m.p);
    for (int i = 0; i < s.n(); ++i) {
        for (int v = 0; v < m.p; ++v) x[v] = static_cast<int>(s.data(i, v));
        freq[outcome_index(m, x)] += 1.0;
    }
    for (double& f : freq) f /= std::max(1, s.n());
    return freq;
}

inline double total_variation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("distributions differ in size");
    double tv = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] - b[i]);
    return 0.5 * tv;
}

// ---- sample CSV ---------------------------------------------------------------
// Header "x1,...,xp", one row per sample. Real entries use the shortest
// round-trip decimal form; discrete entries are integers.

inline void write_samples(std::ostream& out, const SampleMatrix& s) {
    for (int j = 0; j < s.p(); ++j) out << (j ? ",x" : "x") << j + 1;
    out << '\n';
    for (int i = 0; i < s.n(); ++i) {
        for (int j = 0; j < s.p(); ++j) {
            if (j) out << ',';
            if (s.kind == SampleKind::real) {
                out << format_double(s.data(i, j));
            } else {
                out << static_cast<long long>(s.data(i, j));
            }
        }
        out << '\n';
    }
}

/// Reads a sample CSV. Without an explicit kind, integer-only files whose
/// values are all -1/+1 are Ising, other integer-only files are Potts with k
/// equal to the largest state, and anything else is real.
inline SampleMatrix read_samples(std::istream& in, std::optional<SampleKind> kind = std::nullopt, int k = 0) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("sample file: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split(line, ',');
    const int p = static_cast<int>(header.size());
    for (int j = 0; j < p; ++j) {
        if (header[j] != "x" + std::to_string(j + 1)) throw std::runtime_error("sample file: bad header '" + line + "'");
    }
    std::vector<double> values;
    bool integral = true;
    int rows = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (static_cast<int>(cells.size()) != p) {
            throw std::runtime_error("sample file: row " + std::to_string(rows + 1) + " has " +
                                     std::to_string(cells.size()) + " columns, expected " + std::to_string(p));
        }
        for (auto c : cells) {
            if (c.find_first_of(".eEn") != std::string_view::npos) integral = false;
            values.push_back(parse_double(c));
        }
        ++rows;
    }
    SampleMatrix s;
    s.data = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), rows, p);
    if (kind) {
        s.kind = *kind;
    } else if (!integral) {
        s.kind = SampleKind::real;
    } else {
        const bool pm1 = (s.data.array() == 1.0 || s.data.array() == -1.0).all();
        s.kind = pm1 ? SampleKind::ising : SampleKind::potts;
    }
    switch (s.kind) {
        case SampleKind::real:
            s.k = 0;
            break;
        case SampleKind::ising:
            s.k = 2;
            if (!(s.data.array() == 1.0 || s.data.array() == -1.0).all()) throw std::runtime_error("Ising samples must be -1/+1");
            break;
        case SampleKind::potts: {
            const int mx = rows ? static_cast<int>(s.data.maxCoeff()) : 0;
            s.k = k > 0 ? k : std::max(mx, 3);
            if (rows && (s.data.minCoeff() < 1 || mx > s.k)) throw std::runtime_error("Potts samples out of range 1..k");
            break;
        }
    }
    return s;
}

}  // namespace mrfsel
