#pragma once

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "mrfsel/glm.hpp"

namespace mrfsel::oracle {

inline DesignProblem random_gaussian(Rng& rng, int n, int q, double noise = 0.5) {
    std::normal_distribution<double> z(0.0, 1.0);
    DesignProblem pr;
    pr.x.resize(n, q);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < q; ++j) pr.x(i, j) = 2.0 * z(rng) + 0.3 * j;
    pr.y.resize(n);
    for (int i = 0; i < n; ++i) pr.y(i) = 1.0 + 1.5 * pr.x(i, 0) - pr.x(i, 1 % q) + noise * z(rng);
    return pr;
}

inline DesignProblem random_binomial(Rng& rng, int n, int q) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DesignProblem pr;
    pr.family = Family::binomial;
    pr.x.resize(n, q);
    pr.y.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < q; ++j) pr.x(i, j) = z(rng);
        const double eta = 0.4 + 1.2 * pr.x(i, 0) - 0.8 * pr.x(i, 1 % q);
        pr.y(i) = u(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
    }
    return pr;
}

inline DesignProblem random_multinomial(Rng& rng, int n, int q, int k) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DesignProblem pr;
    pr.family = Family::multinomial;
    pr.classes = k;
    pr.x.resize(n, q);
    pr.y.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < q; ++j) pr.x(i, j) = u(rng) < 0.5 ? 1.0 : 0.0;
        std::vector<double> w(k);
        double tot = 0.0;
        for (int l = 0; l < k; ++l) tot += (w[l] = std::exp((l == 0 ? 1.5 : -0.5) * pr.x(i, l % q) + 0.2 * l));
        double r = u(rng) * tot;
        int c = 0;
        for (; c + 1 < k; ++c) {
            r -= w[c];
            if (r < 0) break;
        }
        pr.y(i) = c;
    }
    return pr;
}

// Exact elastic-net minimizer for small gaussian problems: for every sign
// pattern solve the stationarity system on its support, keep the consistent
// solutions and return the one with the lowest objective.
inline Eigen::VectorXd enumerate_signs(const DesignProblem& pr, const PenaltySpec& pen) {
    const WorkingDesign w(pr);
    const int n = pr.n(), q = pr.q();
    const Eigen::VectorXd yc = pr.y.array() - pr.y.mean();
    Eigen::VectorXd best = Eigen::VectorXd::Zero(q);
    double best_obj = std::numeric_limits<double>::infinity();
    int patterns = 1;
    for (int j = 0; j < q; ++j) patterns *= 3;
    for (int code = 0; code < patterns; ++code) {
        std::vector<int> sign(q), support;
        for (int j = 0, c = code; j < q; ++j, c /= 3) {
            sign[j] = c % 3 - 1;
            if (sign[j]) support.push_back(j);
        }
        Eigen::VectorXd b = Eigen::VectorXd::Zero(q);
        if (!support.empty()) {
            const int s = static_cast<int>(support.size());
            Eigen::MatrixXd a(s, s);
            Eigen::VectorXd rhs(s);
            for (int r = 0; r < s; ++r) {
                for (int c = 0; c < s; ++c) a(r, c) = w.x.col(support[r]).dot(w.x.col(support[c])) / n;
                a(r, r) += 2.0 * pen.lambda2;
                rhs(r) = w.x.col(support[r]).dot(yc) / n - pen.lambda1 * sign[support[r]];
            }
            const Eigen::VectorXd sol = a.ldlt().solve(rhs);
            bool consistent = true;
            for (int r = 0; r < s; ++r) {
                if (sol(r) * sign[support[r]] <= 0) consistent = false;
                b(support[r]) = sol(r);
            }
            if (!consistent) continue;
        }
        const double obj = (yc - w.x * b).squaredNorm() / (2.0 * n) + pen.lambda1 * b.cwiseAbs().sum() +
                           pen.lambda2 * b.squaredNorm();
        if (obj < best_obj) {
            best_obj = obj;
            best = b;
        }
    }
    return best;
}

// Newton's method on the ridge-penalized logistic loss (working scale).
inline Eigen::VectorXd ridge_logistic_newton(const DesignProblem& pr, double lambda2) {
    const WorkingDesign w(pr);
    const int n = pr.n(), q = pr.q();
    Eigen::MatrixXd x(n, q + 1);
    x.col(0).setOnes();
    x.rightCols(q) = w.x;
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(q + 1);
    for (int it = 0; it < 100; ++it) {
        const Eigen::VectorXd eta = x * theta;
        Eigen::VectorXd p(n), wt(n);
        for (int i = 0; i < n; ++i) {
            p(i) = 1.0 / (1.0 + std::exp(-eta(i)));
            wt(i) = p(i) * (1 - p(i));
        }
        Eigen::VectorXd g = x.transpose() * (p - pr.y) / n;
        Eigen::MatrixXd h = x.transpose() * wt.asDiagonal() * x / n;
        for (int j = 1; j <= q; ++j) {
            g(j) += 2 * lambda2 * theta(j);
            h(j, j) += 2 * lambda2;
        }
        const Eigen::VectorXd step = h.ldlt().solve(g);
        theta -= step;
        if (step.cwiseAbs().maxCoeff() < 1e-14) break;
    }
    return theta;
}

}  // namespace mrfsel::oracle
