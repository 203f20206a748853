#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rng.hpp"

namespace mrfsel {

/// Unordered vertex pair stored with first < second.
struct Edge {
    int first;
    int second;

    Edge(int a, int b) : first(std::min(a, b)), second(std::max(a, b)) {}

    friend auto operator<=>(const Edge&, const Edge&) = default;
};

using EdgeList = std::vector<Edge>;

/// Undirected simple graph on vertices 0..p-1. Immutable once built.
class Graph {
public:
    Graph() = default;

    explicit Graph(int p) : p_(checked(p)), adj_(static_cast<std::size_t>(p)), matrix_(static_cast<std::size_t>(p) * p, 0) {}

    Graph(int p, EdgeList edges) : Graph(p) {
        std::sort(edges.begin(), edges.end());
        for (std::size_t e = 0; e < edges.size(); ++e) {
            const auto [a, b] = edges[e];
            if (a == b) throw std::invalid_argument("self-loop at vertex " + std::to_string(a));
            if (a < 0 || b >= p) {
                throw std::invalid_argument("edge (" + std::to_string(a) + "," + std::to_string(b) +
                                            ") out of range for p=" + std::to_string(p));
            }
            if (e > 0 && edges[e - 1] == edges[e]) {
                throw std::invalid_argument("duplicate edge (" + std::to_string(a) + "," + std::to_string(b) + ")");
            }
            adj_[a].push_back(b);
            adj_[b].push_back(a);
            matrix_[index(a, b)] = matrix_[index(b, a)] = 1;
        }
        for (auto& nb : adj_) std::sort(nb.begin(), nb.end());
        edges_ = std::move(edges);
    }

    int p() const { return p_; }
    std::size_t m() const { return edges_.size(); }
    const EdgeList& edges() const { return edges_; }
    const std::vector<int>& neighbors(int v) const { return adj_.at(v); }
    int degree(int v) const { return static_cast<int>(adj_.at(v).size()); }

    bool has_edge(int a, int b) const {
        if (a < 0 || b < 0 || a >= p_ || b >= p_) return false;
        return matrix_[index(a, b)] != 0;
    }

    int max_degree() const {
        int d = 0;
        for (const auto& nb : adj_) d = std::max(d, static_cast<int>(nb.size()));
        return d;
    }

    friend bool operator==(const Graph& a, const Graph& b) { return a.p_ == b.p_ && a.edges_ == b.edges_; }

private:
    static int checked(int p) {
        if (p < 1) throw std::invalid_argument("graph needs at least one vertex");
        return p;
    }

    std::size_t index(int a, int b) const { return static_cast<std::size_t>(a) * p_ + b; }

    int p_ = 0;
    EdgeList edges_;
    std::vector<std::vector<int>> adj_;
    std::vector<std::uint8_t> matrix_;
};

struct GraphStats {
    int max_degree = 0;
    double avg_degree = 0.0;
    double edge_density = 0.0;
};

inline double edge_density(int p, std::size_t m) {
    return 2.0 * static_cast<double>(m) / (static_cast<double>(p) * (p - 1));
}

inline GraphStats stats(const Graph& g) {
    if (g.p() < 2) throw std::invalid_argument("stats need p >= 2");
    GraphStats s;
    s.max_degree = g.max_degree();
    s.edge_density = edge_density(g.p(), g.m());
    s.avg_degree = (g.p() - 1) * s.edge_density;
    return s;
}

inline bool is_connected(const Graph& g) {
    if (g.p() == 0) return true;
    std::vector<char> seen(g.p(), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int w : g.neighbors(v)) {
            if (!seen[w]) {
                seen[w] = 1;
                ++count;
                stack.push_back(w);
            }
        }
    }
    return count == g.p();
}

/// Options shared by the random generators.
struct GeneratorOptions {
    bool require_connected = false;
    int max_attempts = 100;
};

inline Graph complete_graph(int p) {
    EdgeList e;
    for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j) e.emplace_back(i, j);
    return Graph(p, std::move(e));
}

inline Graph path_graph(int p) {
    EdgeList e;
    for (int i = 0; i + 1 < p; ++i) e.emplace_back(i, i + 1);
    return Graph(p, std::move(e));
}

inline Graph cycle_graph(int p) {
    if (p < 3) throw std::invalid_argument("cycle needs p >= 3");
    EdgeList e;
    for (int i = 0; i < p; ++i) e.emplace_back(i, (i + 1) % p);
    return Graph(p, std::move(e));
}

/// Clique of `a` centers, each with `b` private leaves. Center c sits at
/// vertex c*(b+1); its leaves follow it.
inline Graph star_graph(int a, int b) {
    if (a < 1 || b < 1) throw std::invalid_argument("star_graph requires a >= 1 and b >= 1");
    const int p = a * (b + 1);
    EdgeList e;
    for (int c = 0; c < a; ++c) {
        const int center = c * (b + 1);
        for (int o = c + 1; o < a; ++o) e.emplace_back(center, o * (b + 1));
        for (int l = 1; l <= b; ++l) e.emplace_back(center, center + l);
    }
    return Graph(p, std::move(e));
}

namespace detail {

// Mutable working state for the incremental generators.
class GraphBuilder {
public:
    explicit GraphBuilder(int p) : p_(p), degree_(p, 0), matrix_(static_cast<std::size_t>(p) * p, 0) {}

    explicit GraphBuilder(const Graph& g) : GraphBuilder(g.p()) {
        for (const auto& e : g.edges()) add(e.first, e.second);
    }

    void add(int a, int b) {
        edges_.emplace_back(a, b);
        matrix_[static_cast<std::size_t>(a) * p_ + b] = matrix_[static_cast<std::size_t>(b) * p_ + a] = 1;
        ++degree_[a];
        ++degree_[b];
    }

    bool has(int a, int b) const { return matrix_[static_cast<std::size_t>(a) * p_ + b] != 0; }
    int degree(int v) const { return degree_[v]; }
    std::size_t m() const { return edges_.size(); }
    int p() const { return p_; }

    Graph build() const { return Graph(p_, edges_); }

    // Uniform choice over non-edges (a,b) with degree(a), degree(b) < cap.
    // Returns false when no such pair exists.
    bool add_random(Rng& rng, int cap) {
        std::uniform_int_distribution<int> pick(0, p_ - 1);
        for (int attempt = 0; attempt < 64; ++attempt) {
            int a = pick(rng), b = pick(rng);
            if (a != b && !has(a, b) && degree_[a] < cap && degree_[b] < cap) {
                add(a, b);
                return true;
            }
        }
        std::vector<Edge> allowed;
        for (int a = 0; a < p_; ++a) {
            if (degree_[a] >= cap) continue;
            for (int b = a + 1; b < p_; ++b)
                if (degree_[b] < cap && !has(a, b)) allowed.emplace_back(a, b);
        }
        if (allowed.empty()) return false;
        std::uniform_int_distribution<std::size_t> choose(0, allowed.size() - 1);
        const Edge e = allowed[choose(rng)];
        add(e.first, e.second);
        return true;
    }

private:
    int p_;
    std::vector<int> degree_;
    std::vector<std::uint8_t> matrix_;
    EdgeList edges_;
};

inline std::size_t edges_for_density(int p, double rho) {
    const std::size_t pairs = static_cast<std::size_t>(p) * (p - 1) / 2;
    auto m = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(pairs)));
    while (m > 0 && edge_density(p, m - 1) >= rho) --m;
    while (m < pairs && edge_density(p, m) < rho) ++m;
    return m;
}

}  // namespace detail

/// Adds uniformly random edges to `g` until its density first reaches
/// `target_rho`. With `preserve_max_degree`, only vertices below the original
/// maximum degree may receive new edges.
inline Graph densify(const Graph& g, double target_rho, bool preserve_max_degree, Rng& rng) {
    if (g.p() < 2) throw std::invalid_argument("densify needs p >= 2");
    const double rho0 = edge_density(g.p(), g.m());
    if (!(target_rho > rho0)) {
        throw std::invalid_argument("densify target " + std::to_string(target_rho) +
                                    " must exceed current density " + std::to_string(rho0));
    }
    if (target_rho > 1.0) throw std::invalid_argument("densify target exceeds 1");

    const int cap = preserve_max_degree ? g.max_degree() : g.p();
    const std::size_t needed = detail::edges_for_density(g.p(), target_rho);
    const std::size_t bound = std::min<std::size_t>(static_cast<std::size_t>(g.p()) * cap / 2,
                                                    static_cast<std::size_t>(g.p()) * (g.p() - 1) / 2);
    if (needed > bound) {
        throw std::invalid_argument("densify target " + std::to_string(target_rho) +
                                    " unreachable under degree cap " + std::to_string(cap) +
                                    "; achievable maximum density is " +
                                    std::to_string(edge_density(g.p(), bound)));
    }
    detail::GraphBuilder builder(g);
    while (builder.m() < needed) {
        if (!builder.add_random(rng, cap)) {
            throw std::runtime_error("densify stalled under degree cap " + std::to_string(cap) +
                                     "; achievable maximum density on this draw is " +
                                     std::to_string(edge_density(g.p(), builder.m())));
        }
    }
    return builder.build();
}

/// s groups of t vertices; vertex v belongs to group v / t. Pairs are visited
/// in lexicographic order with one Bernoulli draw each.
inline Graph community_graph(int s, int t, double beta_in, double beta_out, Rng& rng,
                             const GeneratorOptions& opts = {}) {
    if (s < 1 || t < 1) throw std::invalid_argument("community_graph requires s >= 1 and t >= 1");
    if (!(0.0 <= beta_out && beta_out <= beta_in && beta_in <= 1.0)) {
        throw std::invalid_argument("community_graph requires 0 <= beta_out <= beta_in <= 1");
    }
    const int p = s * t;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int attempt = 0; attempt < std::max(1, opts.max_attempts); ++attempt) {
        EdgeList e;
        for (int i = 0; i < p; ++i) {
            for (int j = i + 1; j < p; ++j) {
                const double q = (i / t == j / t) ? beta_in : beta_out;
                if (unif(rng) < q) e.emplace_back(i, j);
            }
        }
        Graph g(p, std::move(e));
        if (!opts.require_connected || is_connected(g)) return g;
    }
    throw std::runtime_error("community_graph: no connected draw after " + std::to_string(opts.max_attempts) +
                             " attempts");
}

/// Sequential uniform edge insertion over non-edges whose endpoints both have
/// residual degree capacity, until exactly m_target edges exist.
inline Graph random_bounded_degree(int p, int d_max, std::size_t m_target, Rng& rng,
                                   const GeneratorOptions& opts = {}) {
    if (p < 1 || d_max < 1) throw std::invalid_argument("random_bounded_degree requires p >= 1 and d_max >= 1");
    const std::size_t pairs = static_cast<std::size_t>(p) * (p - 1) / 2;
    const std::size_t cap_edges = static_cast<std::size_t>(p) * d_max / 2;
    if (m_target > pairs || m_target > cap_edges) {
        throw std::invalid_argument("random_bounded_degree infeasible: p=" + std::to_string(p) +
                                    ", d_max=" + std::to_string(d_max) + " admit at most " +
                                    std::to_string(std::min(pairs, cap_edges)) + " edges, requested " +
                                    std::to_string(m_target));
    }
    if (opts.require_connected && m_target + 1 < static_cast<std::size_t>(p)) {
        throw std::invalid_argument("random_bounded_degree: " + std::to_string(m_target) +
                                    " edges cannot connect " + std::to_string(p) + " vertices");
    }
    for (int attempt = 0; attempt < std::max(1, opts.max_attempts); ++attempt) {
        detail::GraphBuilder builder(p);
        bool stalled = false;
        while (builder.m() < m_target) {
            if (!builder.add_random(rng, d_max)) {
                stalled = true;
                break;
            }
        }
        if (stalled) continue;
        Graph g = builder.build();
        if (!opts.require_connected || is_connected(g)) return g;
    }
    throw std::runtime_error("random_bounded_degree: no valid draw after " + std::to_string(opts.max_attempts) +
                             " attempts");
}

// Graph file: "p m" then m lines "i j", 1-based, i < j, lexicographic.
inline void write_graph(std::ostream& out, const Graph& g) {
    out << g.p() << ' ' << g.m() << '\n';
    for (const auto& e : g.edges()) out << e.first + 1 << ' ' << e.second + 1 << '\n';
}

inline Graph read_graph(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("graph file: missing header");
    std::istringstream header(line);
    long long p = 0, m = 0;
    if (!(header >> p >> m) || p < 1 || m < 0) throw std::runtime_error("graph file: bad header '" + line + "'");
    EdgeList edges;
    edges.reserve(static_cast<std::size_t>(m));
    for (long long e = 0; e < m; ++e) {
        if (!std::getline(in, line)) throw std::runtime_error("graph file: expected " + std::to_string(m) + " edges");
        std::istringstream row(line);
        long long i = 0, j = 0;
        if (!(row >> i >> j) || i < 1 || j < 1 || i > p || j > p || i >= j) {
            throw std::runtime_error("graph file: bad edge line '" + line + "'");
        }
        edges.emplace_back(static_cast<int>(i - 1), static_cast<int>(j - 1));
        if (edges.size() > 1 && !(edges[edges.size() - 2] < edges.back())) {
            throw std::runtime_error("graph file: edges not strictly sorted at '" + line + "'");
        }
    }
    return Graph(static_cast<int>(p), std::move(edges));
}

}  // namespace mrfsel
