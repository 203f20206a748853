#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "mrfsel/models.hpp"

using namespace mrfsel;

namespace {

const std::uint64_t kSeeds[] = {11, 2024, 987654321};

// Smallest tau on the 0.1 grid whose eigenvalue bound is positive, computed
// from a dense eigendecomposition of the coupling matrix.
double tau_by_eigenvalues(const Graph& g, double coupling) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(g.p(), g.p());
    for (const auto& e : g.edges()) a(e.first, e.second) = a(e.second, e.first) = coupling;
    const double lo = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a).eigenvalues().minCoeff();
    for (int step = 0;; ++step) {
        const double tau = 1.0 + 0.1 * step;
        if (tau + lo > 0.0) return tau;
    }
}

// Joint-ratio oracle: P(X_s = state | rest) from unnormalized weights.
template <typename Model>
std::vector<double> conditional_from_joint(const Model& m, int s, std::vector<int> x) {
    const int k = state_count(m);
    std::vector<double> w(k);
    double z = 0.0;
    for (int d = 0; d < k; ++d) {
        x[s] = state_label(m, d);
        z += (w[d] = std::exp(log_weight(m, x)));
    }
    for (double& v : w) v /= z;
    return w;
}

}  // namespace

TEST(BuildGmrf, SingleEdgeNeedsNoDiagonalBoost) {
    const auto m = build_gmrf(Graph(2, {Edge(0, 1)}));
    EXPECT_DOUBLE_EQ(m.tau, 1.0);
    EXPECT_EQ(m.theta(0, 1), 0.5);
    // eigenvalues {0.5, 1.5}
    const auto ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m.theta).eigenvalues();
    EXPECT_NEAR(ev(0), 0.5, 1e-12);
    EXPECT_NEAR(ev(1), 1.5, 1e-12);
}

TEST(BuildGmrf, EmptyGraphIsIdentity) {
    const auto m = build_gmrf(Graph(4));
    EXPECT_DOUBLE_EQ(m.tau, 1.0);
    EXPECT_TRUE(m.theta.isIdentity());
}

TEST(BuildGmrf, StarTauMatchesEigenvalueOracle) {
    const Graph g = star_graph(1, 24);
    const auto m = build_gmrf(g);
    EXPECT_DOUBLE_EQ(m.tau, tau_by_eigenvalues(g, 0.5));
    EXPECT_NEAR(m.tau, 2.5, 1e-12);  // sqrt(24)/2 = 2.449...
}

TEST(BuildGmrf, SupportAndMinimalityInvariants) {
    for (auto seed : kSeeds) {
        Rng rng(seed);
        for (int rep = 0; rep < 5; ++rep) {
            const Graph g = random_bounded_degree(20, 6, 40, rng);
            const auto m = build_gmrf(g);
            EXPECT_TRUE(m.theta.isApprox(m.theta.transpose(), 0.0));
            for (int s = 0; s < g.p(); ++s)
                for (int t = 0; t < g.p(); ++t)
                    if (s != t) EXPECT_EQ(m.theta(s, t), g.has_edge(s, t) ? 0.5 : 0.0);
            EXPECT_EQ(Eigen::LLT<Eigen::MatrixXd>(m.theta).info(), Eigen::Success);
            if (m.tau > 1.0) {
                Eigen::MatrixXd smaller = m.theta;
                smaller.diagonal().array() = m.tau - 0.1;
                EXPECT_NE(Eigen::LLT<Eigen::MatrixXd>(smaller).info(), Eigen::Success);
            }
            EXPECT_NEAR(m.tau, tau_by_eigenvalues(g, 0.5), 1e-12);
        }
    }
}

TEST(GmrfConditionalMean, UsesExactPrecisionIdentity) {
    const auto m = build_gmrf(path_graph(3));
    const std::vector<double> x{1.0, 0.0, 2.0};
    EXPECT_DOUBLE_EQ(gmrf_conditional_mean(m, 1, x), -(0.5 * 1.0 + 0.5 * 2.0) / m.tau);
}

TEST(BuildIsing, ConstantCouplingOnK2) {
    Rng rng(0);
    const auto m = build_ising(complete_graph(2), CouplingLaw::constant(0.25), rng);
    ASSERT_EQ(m.couplings.size(), 1u);
    EXPECT_EQ(m.couplings[0].value, 0.25);
}

TEST(BuildIsing, RademacherSignsAreSeedReproducible) {
    Rng a(42), b(42);
    const auto m1 = build_ising(path_graph(3), CouplingLaw::rademacher(0.25), a);
    const auto m2 = build_ising(path_graph(3), CouplingLaw::rademacher(0.25), b);
    for (std::size_t e = 0; e < m1.couplings.size(); ++e) {
        EXPECT_EQ(std::abs(m1.couplings[e].value), 0.25);
        EXPECT_EQ(m1.couplings[e].value, m2.couplings[e].value);
    }
}

TEST(BuildIsing, UniformLawOnBoundedDegreeFamily) {
    Rng g_rng(7), a(8), b(8);
    const Graph g = random_bounded_degree(64, 10, 200, g_rng);
    const auto m1 = build_ising(g, CouplingLaw::uniform(0.1, 0.3), a);
    const auto m2 = build_ising(g, CouplingLaw::uniform(0.1, 0.3), b);
    EXPECT_EQ(m1.graph(), g);
    for (std::size_t e = 0; e < m1.couplings.size(); ++e) {
        EXPECT_GE(m1.couplings[e].value, 0.1);
        EXPECT_LT(m1.couplings[e].value, 0.3);
        EXPECT_EQ(m1.couplings[e].value, m2.couplings[e].value);
    }
}

TEST(BuildIsing, RejectsZeroConstant) { EXPECT_THROW(CouplingLaw::constant(0.0), std::invalid_argument); }

TEST(BuildPotts, RejectsTwoStates) {
    Rng rng(0);
    EXPECT_THROW(build_potts(complete_graph(2), 2, CouplingLaw::constant(0.25), rng), std::invalid_argument);
}

TEST(BuildPotts, TwoNodeModelHasNineOutcomes) {
    Rng rng(0);
    const auto m = build_potts(complete_graph(2), 3, CouplingLaw::constant(0.4), rng);
    const auto d = enumerate_exact(m);
    ASSERT_EQ(d.prob.size(), 9u);
    const double z = 3 * std::exp(0.4) + 6 * std::exp(-0.4);
    EXPECT_NEAR(d.prob[0], std::exp(0.4) / z, 1e-14);   // (1,1)
    EXPECT_NEAR(d.prob[1], std::exp(-0.4) / z, 1e-14);  // (1,2)
    EXPECT_NEAR(d.z(), z, 1e-12);
}

TEST(BuildPotts, NodePotentialBiasesMarginalTowardState1) {
    Rng rng(0);
    auto m = build_potts(path_graph(3), 3, CouplingLaw::constant(0.25), rng);
    m.node_potentials(1, 0) = 1.0;
    const auto d = enumerate_exact(m);
    std::vector<double> marginal(3, 0.0);
    for (std::size_t i = 0; i < d.prob.size(); ++i) marginal[outcome_state(m, i)[1] - 1] += d.prob[i];
    EXPECT_GT(marginal[0], 1.0 / 3.0 + 0.1);
    EXPECT_NEAR(marginal[1], marginal[2], 1e-14);
}

TEST(IsingConditional, IsolatedVertexIsFair) {
    Rng rng(0);
    const auto m = build_ising(Graph(3, {Edge(0, 1)}), CouplingLaw::constant(0.7), rng);
    const std::vector<int> x{1, -1, 1};
    EXPECT_DOUBLE_EQ(ising_conditional(m, 2, x), 0.5);
}

TEST(IsingConditional, TwoNodeValue) {
    Rng rng(0);
    const auto m = build_ising(complete_graph(2), CouplingLaw::constant(0.25), rng);
    const std::vector<int> x{1, 1};
    EXPECT_NEAR(ising_conditional(m, 0, x), std::exp(0.5) / (std::exp(0.5) + 1), 1e-15);
    EXPECT_NEAR(ising_conditional(m, 0, x), 0.6224593312, 1e-10);
}

TEST(IsingConditional, RejectsOutOfAlphabetStates) {
    Rng rng(0);
    const auto m = build_ising(complete_graph(2), CouplingLaw::constant(0.25), rng);
    const std::vector<int> x{1, 0};
    EXPECT_THROW(ising_conditional(m, 0, x), std::invalid_argument);
}

TEST(PottsConditional, IsolatedVertexIsUniform) {
    Rng rng(0);
    const auto m = build_potts(Graph(3, {Edge(0, 1)}), 4, CouplingLaw::constant(0.25), rng);
    const std::vector<int> x{1, 2, 3};
    for (double v : potts_conditional(m, 2, x)) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(PottsConditional, TwoNodeValue) {
    Rng rng(0);
    const auto m = build_potts(complete_graph(2), 3, CouplingLaw::constant(0.25), rng);
    const std::vector<int> x{1, 2};
    const auto pr = potts_conditional(m, 0, x);
    const double z = 2 * std::exp(-0.25) + std::exp(0.25);
    EXPECT_NEAR(pr[0], std::exp(-0.25) / z, 1e-15);
    EXPECT_NEAR(pr[1], std::exp(0.25) / z, 1e-15);
    EXPECT_NEAR(pr[2], std::exp(-0.25) / z, 1e-15);
}

TEST(PottsConditional, RejectsOutOfRangeState) {
    Rng rng(0);
    const auto m = build_potts(complete_graph(2), 3, CouplingLaw::constant(0.25), rng);
    const std::vector<int> x{1, 4};
    EXPECT_THROW(potts_conditional(m, 0, x), std::invalid_argument);
}

TEST(ModelInvariants, ConditionalsMatchJointRatiosOnAllStates) {
    for (auto seed : kSeeds) {
        Rng rng(seed);
        // Ising on up to 8 vertices, Potts k=3 on 8 vertices (3^8 states).
        const Graph gi = random_bounded_degree(8, 4, 12, rng);
        const auto ising = build_ising(gi, CouplingLaw::uniform(-0.6, 0.6), rng);
        const auto di = enumerate_exact(ising);
        for (std::size_t idx = 0; idx < di.prob.size(); ++idx) {
            const auto x = outcome_state(ising, idx);
            for (int s = 0; s < ising.p; ++s) {
                const auto oracle = conditional_from_joint(ising, s, x);
                ASSERT_NEAR(ising_conditional(ising, s, x), oracle[1], 1e-10);
            }
        }
        const Graph gp = random_bounded_degree(8, 3, 10, rng);
        auto potts = build_potts(gp, 3, CouplingLaw::uniform(-0.5, 0.8), rng);
        potts.node_potentials(2, 1) = 0.3;
        const auto dp = enumerate_exact(potts);
        ASSERT_EQ(dp.prob.size(), 6561u);
        for (std::size_t idx = 0; idx < dp.prob.size(); idx += 7) {
            const auto x = outcome_state(potts, idx);
            for (int s = 0; s < potts.p; ++s) {
                const auto oracle = conditional_from_joint(potts, s, x);
                const auto got = potts_conditional(potts, s, x);
                for (int l = 0; l < 3; ++l) ASSERT_NEAR(got[l], oracle[l], 1e-10);
            }
        }
    }
}

TEST(ModelInvariants, PottsConditionalSumsToOne) {
    for (auto seed : kSeeds) {
        Rng rng(seed);
        const Graph g = random_bounded_degree(12, 5, 25, rng);
        const auto m = build_potts(g, 5, CouplingLaw::uniform(-1.0, 1.0), rng);
        std::uniform_int_distribution<int> st(1, 5);
        std::vector<int> x(12);
        for (int rep = 0; rep < 1000; ++rep) {
            for (int& v : x) v = st(rng);
            const auto pr = potts_conditional(m, rep % 12, x);
            double sum = 0.0;
            for (double v : pr) sum += v;
            ASSERT_NEAR(sum, 1.0, 1e-12);
        }
    }
}

TEST(ModelInvariants, SignFlipGaugeOnEvenCycles) {
    for (int p : {4, 6, 8}) {
        Rng rng(static_cast<std::uint64_t>(p));
        const auto m = build_ising(cycle_graph(p), CouplingLaw::uniform(0.1, 0.5), rng);
        std::vector<Coupling> flipped = m.couplings;
        for (auto& c : flipped) c.value = -c.value;
        const IsingParams neg(p, flipped);
        const auto dist = enumerate_exact(m);
        const auto dneg = enumerate_exact(neg);
        for (std::size_t idx = 0; idx < dist.prob.size(); ++idx) {
            const auto x = outcome_state(m, idx);
            for (int s = 0; s < p; ++s) {
                auto y = x;
                for (const auto& nb : m.adjacency[s]) y[nb.vertex] = -y[nb.vertex];
                ASSERT_NEAR(ising_conditional(neg, s, x), ising_conditional(m, s, y), 1e-14);
            }
            // bipartite gauge: flipping the odd vertices maps one law onto the other
            auto g = x;
            for (int s = 1; s < p; s += 2) g[s] = -g[s];
            ASSERT_NEAR(dneg.prob[idx], dist.prob[outcome_index(m, g)], 1e-14);
        }
    }
}

TEST(EnumerateExact, TwoNodeIsingTable) {
    Rng rng(0);
    const auto m = build_ising(complete_graph(2), CouplingLaw::constant(0.25), rng);
    const auto d = enumerate_exact(m);
    const double z = 2 * std::exp(0.25) + 2 * std::exp(-0.25);
    // index: vertex 0 most significant, digit 0 = -1
    EXPECT_NEAR(d.prob[0], std::exp(0.25) / z, 1e-15);  // --
    EXPECT_NEAR(d.prob[1], std::exp(-0.25) / z, 1e-15);  // -+
    EXPECT_NEAR(d.prob[2], std::exp(-0.25) / z, 1e-15);  // +-
    EXPECT_NEAR(d.prob[3], std::exp(0.25) / z, 1e-15);  // ++
    EXPECT_NEAR(d.z(), z, 1e-12);
}

TEST(EnumerateExact, EmptyIsingIsUniform) {
    const IsingParams m(3, {});
    const auto d = enumerate_exact(m);
    ASSERT_EQ(d.prob.size(), 8u);
    for (double v : d.prob) EXPECT_DOUBLE_EQ(v, 0.125);
}

TEST(EnumerateExact, PathPottsTableSumsToOne) {
    Rng rng(0);
    const auto m = build_potts(path_graph(3), 3, CouplingLaw::constant(0.25), rng);
    const auto d = enumerate_exact(m);
    ASSERT_EQ(d.prob.size(), 27u);
    double s = 0.0;
    for (double v : d.prob) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(EnumerateExact, RejectsHugeStateSpace) {
    const IsingParams m(21, {});
    EXPECT_THROW(enumerate_exact(m), std::invalid_argument);
}

TEST(ModelFile, RoundTripsAllKinds) {
    Rng rng(3);
    const Graph g = random_bounded_degree(10, 3, 12, rng);
    auto potts = build_potts(g, 4, CouplingLaw::uniform(0.1, 0.9), rng);
    potts.node_potentials(4, 2) = -0.125;
    const std::vector<Model> models{build_gmrf(g), build_ising(g, CouplingLaw::uniform(-1, 1), rng), potts};
    for (const auto& m : models) {
        std::ostringstream out;
        write_model(out, m);
        std::istringstream in(out.str());
        const Model back = read_model(in);
        EXPECT_EQ(back.index(), m.index());
        std::ostringstream again;
        write_model(again, back);
        EXPECT_EQ(out.str(), again.str());
    }
}

TEST(ModelFile, HeaderAndLineLayout) {
    Rng rng(3);
    std::ostringstream out;
    write_model(out, build_ising(complete_graph(2), CouplingLaw::constant(0.25), rng));
    EXPECT_EQ(out.str(), "ising 2 2\n1 2 0.25\n");
    std::istringstream bad("glauber 2 2\n");
    EXPECT_THROW(read_model(bad), std::runtime_error);
}
