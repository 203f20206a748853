#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "format.hpp"
#include "glm.hpp"
#include "graph.hpp"
#include "models.hpp"
#include "neighborhood.hpp"
#include "rng.hpp"
#include "samplers.hpp"

namespace mrfsel {

/// Confusion counts over all p(p-1)/2 vertex pairs.
///
/// type1 is normalized by the true non-edges and type2 by the true edges, so
/// `total = type1 + type2` lies in [0, 2] and is not itself a probability.
struct ErrorReport {
    long long tp = 0, fp = 0, fn = 0, tn = 0;
    double type1 = 0.0;
    double type2 = 0.0;
    double total = 0.0;
    double precision = 1.0;
    double recall = 1.0;
};

inline ErrorReport score(const Graph& truth, const EdgeList& estimated) {
    const int p = truth.p();
    std::set<Edge> est;
    for (const auto& e : estimated) {
        if (e.first < 0 || e.second >= p || e.first == e.second) {
            throw std::invalid_argument("estimated edge outside the vertex range of the true graph");
        }
        est.insert(e);
    }
    ErrorReport r;
    for (int a = 0; a < p; ++a) {
        for (int b = a + 1; b < p; ++b) {
            const bool t = truth.has_edge(a, b), h = est.count(Edge(a, b)) > 0;
            if (t && h) ++r.tp;
            else if (!t && h) ++r.fp;
            else if (t && !h) ++r.fn;
            else ++r.tn;
        }
    }
    const auto ratio = [](long long num, long long den, double empty) {
        return den == 0 ? empty : static_cast<double>(num) / static_cast<double>(den);
    };
    r.type1 = ratio(r.fp, r.fp + r.tn, 0.0);
    r.type2 = ratio(r.fn, r.fn + r.tp, 0.0);
    r.total = r.type1 + r.type2;
    r.precision = ratio(r.tp, r.tp + r.fp, 1.0);
    r.recall = ratio(r.tp, r.tp + r.fn, 1.0);
    return r;
}

inline ErrorReport score(const Graph& truth, const Graph& estimated) {
    if (truth.p() != estimated.p()) {
        throw std::invalid_argument("vertex count mismatch: true p=" + std::to_string(truth.p()) +
                                    ", estimated p=" + std::to_string(estimated.p()));
    }
    return score(truth, estimated.edges());
}

// ---- sweep specification --------------------------------------------------------------

struct GraphSpec {
    std::string family = "star";  // star | densified_star | community | bounded_degree
    int a = 1, b = 24;            // star
    double target_rho = 0.0;      // densified_star
    bool preserve_max_degree = true;
    int groups = 4, group_size = 8;  // community
    double beta_in = 0.8, beta_out = 0.15;
    int p = 64, d_max = 10;  // bounded_degree
    int m = 0;
    bool require_connected = false;
};

struct ModelSpec {
    std::string kind = "gmrf";  // gmrf | ising | potts
    double gmrf_coupling = 0.5;
    CouplingLaw law = CouplingLaw::constant(0.25);
    int k = 4;
};

enum class SamplerKind { exact, gibbs, swendsen_wang };

struct SamplingSpec {
    SamplerKind sampler = SamplerKind::exact;
    std::vector<int> n;
    ChainConfig chain;
};

struct PenaltyGrid {
    // lambda1 = sqrt(log p / n) unless lambda1_fixed is set.
    std::optional<double> lambda1_fixed;
    // lambda2 values; multiplied by sqrt(log p / n) when lambda2_relative.
    std::vector<double> lambda2;
    bool lambda2_relative = false;
    std::vector<double> alpha;  // used instead of lambda2 when non-empty
};

enum class Method { N1, N2_L, N2_S, N2_Sbar };

inline std::string to_string(Method m) {
    switch (m) {
        case Method::N1: return "N1";
        case Method::N2_L: return "N2_L";
        case Method::N2_S: return "N2_S";
        case Method::N2_Sbar: return "N2_Sbar";
    }
    return "?";
}

inline std::string to_string(EdgeRule r) { return r == EdgeRule::AND ? "AND" : "OR"; }

struct SelectionSpec {
    std::vector<Method> methods{Method::N1};
    NodeSelection::Mode mode = NodeSelection::Mode::fixed;  // for N1
    int folds = 10;
    int grid_size = 50;
    Threshold::Kind vote_threshold = Threshold::Kind::degree;  // for N2; degrees come from the true graph
    int top = 0;
    std::vector<EdgeRule> rules{EdgeRule::AND, EdgeRule::OR};
};

struct SweepSpec {
    std::string run_id = "run";
    GraphSpec graph;
    ModelSpec model;
    SamplingSpec sampling;
    PenaltyGrid penalty;
    SelectionSpec selection;
    int trials = 1;
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    void validate() const {
        if (sampling.n.empty()) throw std::invalid_argument("sampling: n list is empty");
        for (int n : sampling.n)
            if (n < 2) throw std::invalid_argument("sampling: n values must be >= 2");
        if (trials < 1) throw std::invalid_argument("evaluation: trials must be >= 1");
        if (penalty.alpha.empty() == penalty.lambda2.empty()) {
            throw std::invalid_argument("penalty: exactly one of the lambda2 grid and the alpha grid must be given");
        }
        for (double a : penalty.alpha)
            if (!(a > 0.0 && a <= 1.0)) throw std::invalid_argument("penalty: alpha values must lie in (0, 1]");
        for (double l : penalty.lambda2)
            if (!(l >= 0.0)) throw std::invalid_argument("penalty: lambda2 values must be >= 0");
        if (selection.methods.empty()) throw std::invalid_argument("selection: no methods");
        if (selection.rules.empty()) throw std::invalid_argument("selection: no rules");
        for (Method m : selection.methods)
            if (m != Method::N1 && model.kind != "gmrf") {
                throw std::invalid_argument("selection: pair-vote methods need a gmrf model");
            }
        sampling.chain.validate();
    }
};

// ---- pipeline pieces shared by the sweep and the CLI stages -------------------------------

inline Graph build_graph(const GraphSpec& g, std::uint64_t seed) {
    Rng rng = make_rng(seed, "graph");
    GeneratorOptions opts;
    opts.require_connected = g.require_connected;
    if (g.family == "star") return star_graph(g.a, g.b);
    if (g.family == "densified_star") return densify(star_graph(g.a, g.b), g.target_rho, g.preserve_max_degree, rng);
    if (g.family == "community") return community_graph(g.groups, g.group_size, g.beta_in, g.beta_out, rng, opts);
    if (g.family == "bounded_degree") return random_bounded_degree(g.p, g.d_max, static_cast<std::size_t>(g.m), rng, opts);
    throw std::invalid_argument("graph: unknown family '" + g.family + "'");
}

inline Model build_model(const Graph& g, const ModelSpec& m, std::uint64_t seed) {
    Rng rng = make_rng(seed, "model");
    if (m.kind == "gmrf") return build_gmrf(g, m.gmrf_coupling);
    if (m.kind == "ising") return build_ising(g, m.law, rng);
    if (m.kind == "potts") return build_potts(g, m.k, m.law, rng);
    throw std::invalid_argument("model: unknown kind '" + m.kind + "'");
}

inline std::string sample_label(int n, int trial) {
    return "sample:n=" + std::to_string(n) + ":trial=" + std::to_string(trial);
}

inline SampleMatrix draw_samples(const Model& model, const SamplingSpec& s, int n, int trial, std::uint64_t seed) {
    Rng rng = make_rng(seed, sample_label(n, trial));
    return std::visit(
        [&](const auto& m) -> SampleMatrix {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, GaussianPrecision>) {
                return sample_gaussian(m, n, rng);
            } else {
                if (s.sampler == SamplerKind::swendsen_wang) return swendsen_wang_sample(m, n, s.chain, rng);
                return gibbs_sample(m, n, s.chain, rng);
            }
        },
        model);
}

inline std::vector<int> degree_vector(const Graph& g) {
    std::vector<int> d(g.p());
    for (int v = 0; v < g.p(); ++v) d[v] = g.degree(v);
    return d;
}

/// Neighborhood estimates of one method on one sample matrix. `votes` caches
/// the L matrix between the pair-vote methods.
inline std::vector<NeighborhoodEstimate> estimate_with(Method method, const SampleMatrix& samples, const Graph& truth,
                                                       const PenaltySpec& pen, const SelectionSpec& sel,
                                                       std::uint64_t cv_seed, std::size_t workers,
                                                       std::optional<VoteMatrix>& votes) {
    if (method == Method::N1) {
        NodeSelection ns;
        ns.mode = sel.mode;
        ns.folds = sel.folds;
        ns.grid_size = sel.grid_size;
        ns.seed = cv_seed;
        return estimate_all_neighborhoods(samples, pen, ns, degree_vector(truth), workers);
    }
    if (!votes) votes = vote_matrix(samples, pen, workers);
    const VoteMatrix v = method == Method::N2_L ? *votes
                         : method == Method::N2_S ? symmetrize(*votes)
                                                  : normalize_symmetrize(*votes);
    std::vector<Threshold> th;
    for (int i = 0; i < truth.p(); ++i) {
        switch (sel.vote_threshold) {
            case Threshold::Kind::degree: th.push_back(Threshold::degree(truth.degree(i))); break;
            case Threshold::Kind::top: th.push_back(Threshold::top(sel.top)); break;
            case Threshold::Kind::jump: th.push_back(Threshold::jump(truth.max_degree())); break;
        }
    }
    return estimates_from_votes(v, th);
}

// ---- sweep --------------------------------------------------------------------------------

/// One CSV row. `trial` is the trial index, or -1 / -2 for the mean / std
/// aggregate rows.
struct ResultRow {
    std::string run_id, graph_family;
    int p = 0, d = 0;
    double rho = 0.0;
    std::string model;
    int k = 0, n = 0;
    double lambda1 = 0.0, lambda2 = 0.0, alpha = 1.0;  // lambdas on the unnormalized scale
    EdgeRule rule = EdgeRule::AND;
    Method method = Method::N1;
    int trial = 0;
    ErrorReport report;
    double tp = 0, fp = 0, fn = 0, tn = 0;  // means on aggregate rows
    std::uint64_t seed = 0;

    static constexpr int kMean = -1;
    static constexpr int kStd = -2;
};

struct CellFailure {
    std::string cell;
    std::string message;
};

struct SweepResult {
    Graph graph;
    Model model;
    std::vector<ResultRow> rows;        // per trial
    std::vector<ResultRow> aggregates;  // mean then std per cell
    std::vector<CellFailure> failures;
};

/// Grid penalties for sample size n on p vertices.
inline std::vector<PenaltySpec> penalty_grid(const PenaltyGrid& g, int p, int n) {
    const double base = default_lambda1(p, n);
    const double l1 = g.lambda1_fixed.value_or(base);
    std::vector<PenaltySpec> out;
    if (!g.alpha.empty()) {
        for (double a : g.alpha) out.push_back(PenaltySpec::from_alpha(l1, a));
    } else {
        for (double l2 : g.lambda2) out.push_back({l1, g.lambda2_relative ? l2 * base : l2});
    }
    return out;
}

namespace detail {

inline std::vector<ResultRow> aggregate(const std::vector<ResultRow>& rows) {
    using Key = std::tuple<int, std::size_t, int, int>;
    std::map<Key, std::vector<const ResultRow*>> cells;
    // grid index is recovered from (lambda2, alpha) order of first appearance per n
    std::map<std::tuple<int, double, double>, std::size_t> grid_index;
    for (const auto& r : rows) {
        auto gk = std::make_tuple(r.n, r.lambda2, r.alpha);
        auto it = grid_index.find(gk);
        if (it == grid_index.end()) it = grid_index.emplace(gk, grid_index.size()).first;
        cells[{r.n, it->second, static_cast<int>(r.method), static_cast<int>(r.rule)}].push_back(&r);
    }
    std::vector<ResultRow> out;
    for (const auto& [key, members] : cells) {
        ResultRow mean = *members.front(), sd = *members.front();
        mean.trial = ResultRow::kMean;
        sd.trial = ResultRow::kStd;
        auto fields = [](const ResultRow& r) {
            return std::array<double, 9>{r.report.type1, r.report.type2, r.report.total, r.report.precision,
                                         r.report.recall, r.tp, r.fp, r.fn, r.tn};
        };
        std::array<double, 9> mu{}, var{};
        for (const auto* r : members) {
            const auto f = fields(*r);
            for (int i = 0; i < 9; ++i) mu[i] += f[i] / members.size();
        }
        for (const auto* r : members) {
            const auto f = fields(*r);
            for (int i = 0; i < 9; ++i) var[i] += (f[i] - mu[i]) * (f[i] - mu[i]);
        }
        const double denom = members.size() > 1 ? static_cast<double>(members.size() - 1) : 1.0;
        auto assign = [](ResultRow& r, const std::array<double, 9>& f) {
            r.report.type1 = f[0];
            r.report.type2 = f[1];
            r.report.total = f[2];
            r.report.precision = f[3];
            r.report.recall = f[4];
            r.tp = f[5];
            r.fp = f[6];
            r.fn = f[7];
            r.tn = f[8];
        };
        std::array<double, 9> sdv{};
        for (int i = 0; i < 9; ++i) sdv[i] = std::sqrt(var[i] / denom);
        assign(mean, mu);
        assign(sd, sdv);
        out.push_back(mean);
        out.push_back(sd);
    }
    return out;
}

}  // namespace detail

/// Fixed graph and model from the sweep seed, fresh samples per (n, trial);
/// every grid point, method and rule is scored on the same samples.
inline SweepResult run_sweep(const SweepSpec& spec) {
    spec.validate();
    SweepResult res;
    res.graph = build_graph(spec.graph, spec.seed);
    res.model = build_model(res.graph, spec.model, spec.seed);
    const GraphStats gs = stats(res.graph);
    const int k = spec.model.kind == "gmrf" ? 0 : spec.model.kind == "ising" ? 2 : spec.model.k;

    for (int n : spec.sampling.n) {
        const auto grid = penalty_grid(spec.penalty, res.graph.p(), n);
        for (int trial = 0; trial < spec.trials; ++trial) {
            std::optional<SampleMatrix> samples;
            try {
                samples = draw_samples(res.model, spec.sampling, n, trial, spec.seed);
            } catch (const std::exception& e) {
                res.failures.push_back({"n=" + std::to_string(n) + ",trial=" + std::to_string(trial), e.what()});
                continue;
            }
            for (std::size_t gi = 0; gi < grid.size(); ++gi) {
                const PenaltySpec pen = grid[gi];
                std::optional<VoteMatrix> votes;
                for (Method method : spec.selection.methods) {
                    const std::string cell = "n=" + std::to_string(n) + ",trial=" + std::to_string(trial) +
                                             ",grid=" + std::to_string(gi) + ",method=" + to_string(method);
                    try {
                        const auto cv_seed = derive_seed(spec.seed, "cv:" + sample_label(n, trial), gi);
                        const auto est = estimate_with(method, *samples, res.graph, pen, spec.selection, cv_seed,
                                                       spec.workers, votes);
                        for (EdgeRule rule : spec.selection.rules) {
                            ResultRow row;
                            row.run_id = spec.run_id;
                            row.graph_family = spec.graph.family;
                            row.p = res.graph.p();
                            row.d = gs.max_degree;
                            row.rho = gs.edge_density;
                            row.model = spec.model.kind;
                            row.k = k;
                            row.n = n;
                            row.lambda1 = to_unnormalized_lambda(pen.lambda1, n);
                            row.lambda2 = to_unnormalized_lambda(pen.lambda2, n);
                            row.alpha = pen.alpha();
                            row.rule = rule;
                            row.method = method;
                            row.trial = trial;
                            row.report = score(res.graph, reconstruct_edges(est, rule));
                            row.tp = static_cast<double>(row.report.tp);
                            row.fp = static_cast<double>(row.report.fp);
                            row.fn = static_cast<double>(row.report.fn);
                            row.tn = static_cast<double>(row.report.tn);
                            row.seed = spec.seed;
                            res.rows.push_back(row);
                        }
                    } catch (const std::exception& e) {
                        res.failures.push_back({cell, e.what()});
                    }
                }
            }
        }
    }
    res.aggregates = detail::aggregate(res.rows);
    return res;
}

struct CurvePoint {
    double alpha = 1.0;
    int n = 0;
    Method method = Method::N1;
    EdgeRule rule = EdgeRule::AND;
    double recall = 0.0, precision = 0.0;
};

/// Mean (recall, precision) per cell, grouped by alpha and ordered by n.
inline std::vector<CurvePoint> recall_precision_curve(const std::vector<ResultRow>& aggregates) {
    std::vector<CurvePoint> pts;
    for (const auto& r : aggregates) {
        if (r.trial != ResultRow::kMean) continue;
        pts.push_back({r.alpha, r.n, r.method, r.rule, r.report.recall, r.report.precision});
    }
    std::stable_sort(pts.begin(), pts.end(), [](const CurvePoint& a, const CurvePoint& b) {
        return std::tie(b.alpha, a.method, a.rule, a.n) < std::tie(a.alpha, b.method, b.rule, b.n);
    });
    return pts;
}

// ---- results CSV ----------------------------------------------------------------------------

inline constexpr const char* kResultsHeader =
    "run_id,graph_family,p,d,rho,model,k,n,lambda1,lambda2,alpha,rule,method,trial,type1,type2,total,precision,"
    "recall,tp,fp,fn,tn,seed";

inline void write_result_row(std::ostream& out, const ResultRow& r) {
    const std::string trial = r.trial == ResultRow::kMean ? "mean" : r.trial == ResultRow::kStd ? "std" : std::to_string(r.trial);
    out << r.run_id << ',' << r.graph_family << ',' << r.p << ',' << r.d << ',' << format_double(r.rho) << ','
        << r.model << ',' << r.k << ',' << r.n << ',' << format_double(r.lambda1) << ',' << format_double(r.lambda2)
        << ',' << format_double(r.alpha) << ',' << to_string(r.rule) << ',' << to_string(r.method) << ',' << trial
        << ',' << format_double(r.report.type1) << ',' << format_double(r.report.type2) << ','
        << format_double(r.report.total) << ',' << format_double(r.report.precision) << ','
        << format_double(r.report.recall) << ',' << format_double(r.tp) << ',' << format_double(r.fp) << ','
        << format_double(r.fn) << ',' << format_double(r.tn) << ',' << r.seed << '\n';
}

inline void write_results(std::ostream& out, const SweepResult& res) {
    out << kResultsHeader << '\n';
    for (const auto& r : res.rows) write_result_row(out, r);
    for (const auto& r : res.aggregates) write_result_row(out, r);
}

}  // namespace mrfsel
