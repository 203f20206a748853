#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "format.hpp"
#include "glm.hpp"
#include "graph.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "samplers.hpp"

namespace mrfsel {

/// sqrt(log p / n), the default lambda1 for every neighborhood fit.
inline double default_lambda1(int p, int n) { return std::sqrt(std::log(static_cast<double>(p)) / n); }

enum class EstimateMethod { single, pair_vote };

struct NeighborhoodEstimate {
    int node = 0;
    std::vector<int> neighbors;  // sorted
    EstimateMethod method = EstimateMethod::single;
    std::vector<double> weights;  // optional, parallel to neighbors
};

/// How lambda1 is chosen for a single-node regression.
struct NodeSelection {
    enum class Mode { fixed, cv, degree };
    Mode mode = Mode::fixed;
    int degree = 0;  // target active count in degree mode
    int folds = 10;
    int grid_size = 50;
    std::uint64_t seed = 0;  // cv fold assignment

    static NodeSelection fixed() { return {}; }
    static NodeSelection cross_validated(int folds, std::uint64_t seed) { return {Mode::cv, 0, folds, 50, seed}; }
    static NodeSelection degree_oracle(int k) { return {Mode::degree, k, 10, 50, 0}; }
};

/// Coefficient magnitude below which a multinomial group counts as zero.
inline constexpr double kGroupZeroTolerance = 1e-8;

/// Regression of vertex s on all other vertices. Column t' of the design
/// (or the indicator block of t' for Potts data) belongs to others[t'].
struct NodeDesign {
    DesignProblem problem;
    std::vector<int> others;
};

inline NodeDesign node_design(const SampleMatrix& samples, int s) {
    const int n = samples.n(), p = samples.p();
    if (s < 0 || s >= p) throw std::invalid_argument("vertex out of range");
    const auto col = samples.data.col(s);
    if ((col.array() == col(0)).all()) {
        throw std::invalid_argument("column " + std::to_string(s + 1) + " is constant; its neighborhood is undetectable");
    }
    NodeDesign d;
    for (int t = 0; t < p; ++t)
        if (t != s) d.others.push_back(t);
    DesignProblem& pr = d.problem;
    switch (samples.kind) {
        case SampleKind::real:
            pr.family = Family::gaussian;
            pr.y = col;
            pr.x.resize(n, p - 1);
            for (int c = 0; c < p - 1; ++c) pr.x.col(c) = samples.data.col(d.others[c]);
            break;
        case SampleKind::ising:
            pr.family = Family::binomial;
            pr.y = (col.array() + 1.0) / 2.0;
            pr.x.resize(n, p - 1);
            for (int c = 0; c < p - 1; ++c) pr.x.col(c) = samples.data.col(d.others[c]);
            break;
        case SampleKind::potts: {
            const int k = samples.k;
            pr.family = Family::multinomial;
            pr.classes = k;
            pr.y = col.array() - 1.0;
            pr.x.resize(n, (p - 1) * k);
            for (int c = 0; c < p - 1; ++c) {
                for (int m = 0; m < k; ++m) {
                    pr.x.col(c * k + m) = (samples.data.col(d.others[c]).array() == m + 1).cast<double>();
                    pr.groups.push_back(c);
                }
            }
            break;
        }
    }
    return d;
}

inline NeighborhoodEstimate neighborhood_from_fit(const NodeDesign& d, int s, const Fit& f) {
    const double tol = d.problem.family == Family::multinomial ? kGroupZeroTolerance : 0.0;
    std::vector<double> group_max(d.others.size(), 0.0);
    for (int j = 0; j < d.problem.q(); ++j) {
        auto& g = group_max[d.problem.group_of(j)];
        g = std::max(g, f.beta.row(j).cwiseAbs().maxCoeff());
    }
    NeighborhoodEstimate est{s, {}, EstimateMethod::single, {}};
    for (std::size_t c = 0; c < d.others.size(); ++c) {
        if (group_max[c] > tol) {
            est.neighbors.push_back(d.others[c]);
            est.weights.push_back(group_max[c]);
        }
    }
    return est;
}

/// Neighborhood of s from the support of the penalized regression of X_s on
/// the remaining variables. The family follows the sample kind.
inline NeighborhoodEstimate estimate_neighborhood(const SampleMatrix& samples, int s, const PenaltySpec& pen,
                                                  const NodeSelection& sel = {}, const FitOptions& opts = {}) {
    const NodeDesign d = node_design(samples, s);
    switch (sel.mode) {
        case NodeSelection::Mode::fixed:
            return neighborhood_from_fit(d, s, fit(d.problem, pen, opts));
        case NodeSelection::Mode::cv: {
            Rng rng = make_rng(sel.seed, "cv-folds", static_cast<std::uint64_t>(s));
            const auto cv = cross_validate(d.problem, pen.lambda2, sel.folds, rng, sel.grid_size, opts);
            return neighborhood_from_fit(d, s, cv.fit);
        }
        case NodeSelection::Mode::degree: {
            const auto path = lambda_path(d.problem, pen.lambda2, sel.grid_size, 0.0, opts);
            return neighborhood_from_fit(d, s, first_k_active(path, sel.degree).fit);
        }
    }
    throw std::logic_error("unknown selection mode");
}

/// One estimate per vertex. In degree mode `degrees[s]` supplies the target
/// active count for vertex s.
inline std::vector<NeighborhoodEstimate> estimate_all_neighborhoods(const SampleMatrix& samples, const PenaltySpec& pen,
                                                                    const NodeSelection& sel = {},
                                                                    const std::vector<int>& degrees = {},
                                                                    std::size_t workers = 1,
                                                                    const FitOptions& opts = {}) {
    const int p = samples.p();
    if (sel.mode == NodeSelection::Mode::degree && static_cast<int>(degrees.size()) != p) {
        throw std::invalid_argument("degree selection needs one degree per vertex");
    }
    std::vector<NeighborhoodEstimate> out(p);
    parallel_for(static_cast<std::size_t>(p), workers, [&](std::size_t s) {
        NodeSelection node_sel = sel;
        if (sel.mode == NodeSelection::Mode::degree) node_sel.degree = degrees[s];
        out[s] = estimate_neighborhood(samples, static_cast<int>(s), pen, node_sel, opts);
    });
    return out;
}

enum class EdgeRule { AND, OR };

/// AND keeps (a,b) when each lists the other; OR when either does.
inline EdgeList reconstruct_edges(const std::vector<NeighborhoodEstimate>& estimates, EdgeRule rule) {
    const int p = static_cast<int>(estimates.size());
    std::vector<char> claim(static_cast<std::size_t>(p) * p, 0);
    for (int i = 0; i < p; ++i) {
        if (estimates[i].node != i) throw std::invalid_argument("estimates must be ordered by node");
        for (int j : estimates[i].neighbors) {
            if (j < 0 || j >= p || j == i) throw std::invalid_argument("neighbor out of range");
            claim[static_cast<std::size_t>(i) * p + j] = 1;
        }
    }
    EdgeList edges;
    for (int a = 0; a < p; ++a) {
        for (int b = a + 1; b < p; ++b) {
            const bool ab = claim[static_cast<std::size_t>(a) * p + b], ba = claim[static_cast<std::size_t>(b) * p + a];
            if (rule == EdgeRule::AND ? (ab && ba) : (ab || ba)) edges.emplace_back(a, b);
        }
    }
    return edges;
}

// ---- pair neighborhoods and votes ------------------------------------------------

/// Support of the elastic-net regression of X_i + X_j on all other columns:
/// an estimate of N(i) u N(j) minus {i, j}. Real-valued samples only.
inline std::vector<int> pair_neighborhood(const SampleMatrix& samples, int i, int j, const PenaltySpec& pen,
                                          const FitOptions& opts = {}) {
    if (samples.kind != SampleKind::real) throw std::invalid_argument("pair neighborhoods need real-valued samples");
    const int p = samples.p();
    if (i == j || i < 0 || j < 0 || i >= p || j >= p) throw std::invalid_argument("pair needs two distinct vertices");
    std::vector<int> others;
    for (int t = 0; t < p; ++t)
        if (t != i && t != j) others.push_back(t);
    DesignProblem pr;
    pr.family = Family::gaussian;
    pr.y = samples.data.col(i) + samples.data.col(j);
    pr.x.resize(samples.n(), static_cast<int>(others.size()));
    for (std::size_t c = 0; c < others.size(); ++c) pr.x.col(static_cast<int>(c)) = samples.data.col(others[c]);
    const Fit f = fit(pr, pen, opts);
    std::vector<int> out;
    for (std::size_t c = 0; c < others.size(); ++c)
        if (f.beta(static_cast<int>(c), 0) != 0.0) out.push_back(others[c]);
    return out;
}

/// Exact pair neighborhood N(i) u N(j) \ {i, j}.
inline std::vector<int> exact_pair_neighborhood(const Graph& g, int i, int j) {
    std::vector<int> out;
    for (int v = 0; v < g.p(); ++v)
        if (v != i && v != j && (g.has_edge(i, v) || g.has_edge(j, v))) out.push_back(v);
    return out;
}

enum class VoteVariant { L, S, S_bar };

struct VoteMatrix {
    Eigen::MatrixXd counts;
    VoteVariant variant = VoteVariant::L;

    int p() const { return static_cast<int>(counts.rows()); }
};

/// Unordered pairs (i < j) in lexicographic order.
inline std::vector<Edge> all_pairs(int p) {
    std::vector<Edge> pairs;
    for (int i = 0; i < p; ++i)
        for (int j = i + 1; j < p; ++j) pairs.emplace_back(i, j);
    return pairs;
}

/// L[i][v] counts the pairs {i, k} whose neighborhood set contains v.
/// `pair_sets[e]` belongs to all_pairs(p)[e].
inline VoteMatrix vote_matrix_from_pairs(int p, const std::vector<std::vector<int>>& pair_sets) {
    const auto pairs = all_pairs(p);
    if (pair_sets.size() != pairs.size()) throw std::invalid_argument("one set per unordered pair required");
    VoteMatrix L{Eigen::MatrixXd::Zero(p, p), VoteVariant::L};
    for (std::size_t e = 0; e < pairs.size(); ++e) {
        const auto [i, k] = pairs[e];
        for (int v : pair_sets[e]) {
            if (v == i || v == k || v < 0 || v >= p) throw std::invalid_argument("pair set contains an invalid vertex");
            L.counts(i, v) += 1.0;
            L.counts(k, v) += 1.0;
        }
    }
    return L;
}

/// Votes from error-free pair neighborhoods of a known graph.
inline VoteMatrix vote_matrix_from_graph(const Graph& g) {
    std::vector<std::vector<int>> sets;
    for (const auto& [i, j] : all_pairs(g.p())) sets.push_back(exact_pair_neighborhood(g, i, j));
    return vote_matrix_from_pairs(g.p(), sets);
}

/// Runs pair_neighborhood for all p(p-1)/2 pairs and aggregates them into L.
inline VoteMatrix vote_matrix(const SampleMatrix& samples, const PenaltySpec& pen, std::size_t workers = 1,
                              const FitOptions& opts = {}) {
    const int p = samples.p();
    if (p < 3) throw std::invalid_argument("vote matrix needs at least three vertices");
    const auto pairs = all_pairs(p);
    std::vector<std::vector<int>> sets(pairs.size());
    parallel_for(pairs.size(), workers, [&](std::size_t e) {
        try {
            sets[e] = pair_neighborhood(samples, pairs[e].first, pairs[e].second, pen, opts);
        } catch (const std::exception& ex) {
            throw std::runtime_error("pair (" + std::to_string(pairs[e].first + 1) + "," +
                                     std::to_string(pairs[e].second + 1) + "): " + ex.what());
        }
    });
    return vote_matrix_from_pairs(p, sets);
}

/// S = L + L^T.
inline VoteMatrix symmetrize(const VoteMatrix& L) {
    if (L.variant != VoteVariant::L) throw std::invalid_argument("symmetrize expects an L matrix");
    return {L.counts + L.counts.transpose(), VoteVariant::S};
}

/// S_bar = (Lbar + Lbar^T) / 2 with Lbar = L divided row-wise by the row max.
inline VoteMatrix normalize_symmetrize(const VoteMatrix& L) {
    if (L.variant != VoteVariant::L) throw std::invalid_argument("normalize_symmetrize expects an L matrix");
    Eigen::MatrixXd bar = L.counts;
    for (int i = 0; i < bar.rows(); ++i) {
        const double mx = bar.row(i).maxCoeff();
        if (mx > 0.0) bar.row(i) /= mx;
    }
    return {0.5 * (bar + bar.transpose()), VoteVariant::S_bar};
}

/// Row threshold rule for ranked vote scores.
struct Threshold {
    enum class Kind { degree, jump, top };
    Kind kind = Kind::degree;
    int count = 0;                   // d_i for degree, t for top
    int max_degree = 0;              // jump: search ranks 1..min(2*max_degree, p-2); 0 = p-2
    std::optional<int> fallback;     // jump: degree used when no jump qualifies
    double min_ratio = 1.15;

    static Threshold degree(int d) { return {Kind::degree, d, 0, std::nullopt}; }
    static Threshold top(int t) { return {Kind::top, t, 0, std::nullopt}; }
    static Threshold jump(int max_degree = 0, std::optional<int> fallback = std::nullopt) {
        return {Kind::jump, 0, max_degree, fallback};
    }
};

struct RowSelection {
    std::vector<int> vertices;  // sorted
    bool fell_back = false;     // jump rule found no qualifying drop and used the degree fallback
    bool no_jump = false;       // jump rule found nothing and had no fallback
};

/// Vertices of `row` (excluding `self`) ranked by descending score, ties by
/// smaller index. Only positive scores are ranked.
inline std::vector<int> rank_row(const Eigen::RowVectorXd& row, int self) {
    std::vector<int> order;
    for (int v = 0; v < row.size(); ++v)
        if (v != self && row(v) > 0.0) order.push_back(v);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return row(a) > row(b); });
    return order;
}

namespace detail {

inline double drop_ratio(double hi, double lo) {
    if (lo > 0.0) return hi / lo;
    return hi > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
}

inline std::vector<int> take_sorted(const std::vector<int>& order, std::size_t count) {
    std::vector<int> out(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(count, order.size())));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

/// Picks the likely neighbors from one vote row.
///
/// The jump rule looks for the steepest fall over a two-rank window,
/// score[r] / score[r+2], among ranks 1..R and cuts after rank r. When the
/// first step of that window is itself below `min_ratio` the fall happens on
/// the second step and the cut moves one rank down. A window whose ratio is
/// under `min_ratio` does not count as a jump.
inline RowSelection select_neighbors(const Eigen::RowVectorXd& row, int self, const Threshold& th) {
    const auto order = rank_row(row, self);
    RowSelection out;
    switch (th.kind) {
        case Threshold::Kind::degree:
        case Threshold::Kind::top:
            out.vertices = detail::take_sorted(order, static_cast<std::size_t>(std::max(0, th.count)));
            return out;
        case Threshold::Kind::jump:
            break;
    }
    const int p = static_cast<int>(row.size());
    int limit = p - 2;
    if (th.max_degree > 0) limit = std::min(limit, 2 * th.max_degree);
    // scores by rank, padded with the zero scores of unranked vertices
    std::vector<double> s;
    for (int v : order) s.push_back(row(v));
    while (static_cast<int>(s.size()) < p - 1) s.push_back(0.0);
    const int m = static_cast<int>(s.size());
    limit = std::min(limit, m - 1);

    int best = -1;
    double best_ratio = 0.0;
    for (int r = 0; r < limit; ++r) {  // r is 0-based: the cut keeps ranks 0..r
        const double w = r + 2 < m ? detail::drop_ratio(s[r], s[r + 2]) : detail::drop_ratio(s[r], s[r + 1]);
        if (s[r] > 0.0 && w >= best_ratio) {
            best_ratio = w;
            best = r;
        }
    }
    if (best >= 0 && best_ratio >= th.min_ratio) {
        int cut = best;
        if (best + 2 < m && detail::drop_ratio(s[best], s[best + 1]) < th.min_ratio) cut = best + 1;
        out.vertices = detail::take_sorted(order, static_cast<std::size_t>(cut + 1));
        return out;
    }
    if (th.fallback) {
        out.fell_back = true;
        out.vertices = detail::take_sorted(order, static_cast<std::size_t>(std::max(0, *th.fallback)));
    } else {
        out.no_jump = true;
    }
    return out;
}

/// Neighborhood estimates from a vote matrix, one threshold per vertex.
inline std::vector<NeighborhoodEstimate> estimates_from_votes(const VoteMatrix& v, const std::vector<Threshold>& th) {
    if (static_cast<int>(th.size()) != v.p()) throw std::invalid_argument("one threshold per vertex required");
    std::vector<NeighborhoodEstimate> out(v.p());
    for (int i = 0; i < v.p(); ++i) {
        const Eigen::RowVectorXd row = v.counts.row(i);
        out[i].node = i;
        out[i].method = EstimateMethod::pair_vote;
        out[i].neighbors = select_neighbors(row, i, th[i]).vertices;
        for (int j : out[i].neighbors) out[i].weights.push_back(row(j));
    }
    return out;
}

// ---- text formats -----------------------------------------------------------------

/// Headerless row-major CSV.
inline void write_vote_matrix(std::ostream& out, const VoteMatrix& v) {
    for (int i = 0; i < v.p(); ++i) {
        for (int j = 0; j < v.p(); ++j) out << (j ? "," : "") << format_double(v.counts(i, j));
        out << '\n';
    }
}

inline VoteMatrix read_vote_matrix(std::istream& in, VoteVariant variant) {
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> r;
        for (auto c : split(line, ',')) r.push_back(parse_double(c));
        rows.push_back(std::move(r));
    }
    const int p = static_cast<int>(rows.size());
    VoteMatrix v{Eigen::MatrixXd(p, p), variant};
    for (int i = 0; i < p; ++i) {
        if (static_cast<int>(rows[i].size()) != p) throw std::runtime_error("vote matrix is not square");
        for (int j = 0; j < p; ++j) v.counts(i, j) = rows[i][j];
    }
    return v;
}

/// "i: j1 j2 ..." per vertex, 1-based.
inline void write_neighborhoods(std::ostream& out, const std::vector<NeighborhoodEstimate>& est) {
    for (const auto& e : est) {
        out << e.node + 1 << ':';
        for (int j : e.neighbors) out << ' ' << j + 1;
        out << '\n';
    }
}

inline std::vector<NeighborhoodEstimate> read_neighborhoods(std::istream& in) {
    std::vector<NeighborhoodEstimate> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos) throw std::runtime_error("neighborhood file: bad line '" + line + "'");
        NeighborhoodEstimate e;
        e.node = std::stoi(line.substr(0, colon)) - 1;
        if (e.node != static_cast<int>(out.size())) throw std::runtime_error("neighborhood file: nodes out of order");
        std::istringstream rest(line.substr(colon + 1));
        int j = 0;
        while (rest >> j) e.neighbors.push_back(j - 1);
        std::sort(e.neighbors.begin(), e.neighbors.end());
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace mrfsel
