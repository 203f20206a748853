#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"

namespace mrfsel {

enum class Family { gaussian, binomial, multinomial };

/// Regression of y on the columns of x.
///
/// Responses are real for gaussian, 0/1 for binomial and class indices
/// 0..classes-1 for multinomial. `groups` maps each column to a predictor
/// group (used to count active predictors when one variable is expanded
/// into several indicator columns); empty means one group per column.
struct DesignProblem {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    Family family = Family::gaussian;
    int classes = 0;
    bool standardize = true;
    std::vector<int> groups;

    int n() const { return static_cast<int>(x.rows()); }
    int q() const { return static_cast<int>(x.cols()); }
    int outputs() const { return family == Family::multinomial ? classes : 1; }

    int group_of(int j) const { return groups.empty() ? j : groups[j]; }
    int group_count() const {
        if (groups.empty()) return q();
        return *std::max_element(groups.begin(), groups.end()) + 1;
    }

    void validate() const {
        if (n() < 2) throw std::invalid_argument("design needs n >= 2");
        if (q() < 1) throw std::invalid_argument("design needs q >= 1");
        if (y.size() != n()) throw std::invalid_argument("response length differs from design rows");
        if (!groups.empty() && static_cast<int>(groups.size()) != q()) throw std::invalid_argument("groups length differs from q");
        if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("design contains non-finite values");
        if (family == Family::binomial) {
            if (!(y.array() == 0.0 || y.array() == 1.0).all()) throw std::invalid_argument("binomial response must be 0/1");
            const double s = y.sum();
            if (s == 0.0 || s == n()) throw std::invalid_argument("degenerate response: only one class present");
        } else if (family == Family::multinomial) {
            if (classes < 2) throw std::invalid_argument("multinomial needs at least two classes");
            std::vector<int> count(classes, 0);
            for (int i = 0; i < n(); ++i) {
                const double c = y(i);
                if (c != std::floor(c) || c < 0 || c >= classes) throw std::invalid_argument("multinomial response out of range");
                ++count[static_cast<int>(c)];
            }
            if (std::count_if(count.begin(), count.end(), [](int c) { return c > 0; }) < 2) {
                throw std::invalid_argument("degenerate response: only one class present");
            }
        }
    }
};

/// lambda1 * ||theta||_1 + lambda2 * ||theta||_2^2 on top of (1/(2n)) * deviance.
struct PenaltySpec {
    double lambda1 = 0.0;
    double lambda2 = 0.0;

    double alpha() const { return lambda1 + lambda2 > 0.0 ? lambda1 / (lambda1 + lambda2) : 1.0; }

    /// Keeps lambda1 and sets lambda2 so that lambda1 / (lambda1 + lambda2) = alpha.
    static PenaltySpec from_alpha(double lambda1, double alpha) {
        if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in (0, 1]");
        return {lambda1, alpha == 1.0 ? 0.0 : lambda1 * (1.0 - alpha) / alpha};
    }

    void validate() const {
        if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0) || !std::isfinite(lambda1) || !std::isfinite(lambda2)) {
            throw std::invalid_argument("penalties must be finite and >= 0");
        }
    }
};

/// Converts between the per-sample penalty scale used here and the
/// unnormalized ||y - X theta||^2 + lambda * (...) scale.
inline double to_unnormalized_lambda(double lambda, int n) { return 2.0 * n * lambda; }
inline double from_unnormalized_lambda(double lambda, int n) { return lambda / (2.0 * n); }

struct FitOptions {
    double tol = 1e-7;
    int max_sweeps = 100000;
    bool trace_objective = false;
};

struct Fit {
    Eigen::MatrixXd beta;  // q x outputs, original predictor scale
    Eigen::VectorXd intercept;
    Eigen::MatrixXd beta_std;  // working (centered / scaled) scale
    Eigen::VectorXd intercept_std;
    int sweeps = 0;
    std::vector<double> objective_trace;

    /// Groups with at least one coefficient above `threshold` in magnitude.
    std::vector<int> active_groups(const DesignProblem& pr, double threshold = 0.0) const {
        std::vector<char> on(pr.group_count(), 0);
        for (int j = 0; j < beta.rows(); ++j)
            if (beta.row(j).cwiseAbs().maxCoeff() > threshold) on[pr.group_of(j)] = 1;
        std::vector<int> out;
        for (int g = 0; g < static_cast<int>(on.size()); ++g)
            if (on[g]) out.push_back(g);
        return out;
    }
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double kkt_proxy) : std::runtime_error(what), kkt_proxy_(kkt_proxy) {}
    double kkt_proxy() const { return kkt_proxy_; }

private:
    double kkt_proxy_;
};

/// Centered (and optionally unit-variance) copy of the predictors.
struct WorkingDesign {
    Eigen::MatrixXd x;
    Eigen::VectorXd center;
    Eigen::VectorXd scale;
    Eigen::VectorXd colsq;  // ||x_j||^2 / n on the working scale

    explicit WorkingDesign(const DesignProblem& pr) {
        const int n = pr.n(), q = pr.q();
        center = pr.x.colwise().mean().transpose();
        x = pr.x.rowwise() - center.transpose();
        scale = Eigen::VectorXd::Ones(q);
        colsq.resize(q);
        for (int j = 0; j < q; ++j) {
            const double ss = x.col(j).squaredNorm() / n;
            if (ss <= 1e-24 * std::max(1.0, center(j) * center(j))) {
                x.col(j).setZero();
                colsq(j) = 0.0;
                continue;
            }
            if (pr.standardize) {
                scale(j) = std::sqrt(ss);
                x.col(j) /= scale(j);
                colsq(j) = x.col(j).squaredNorm() / n;
            } else {
                colsq(j) = ss;
            }
        }
    }
};

namespace detail {

inline double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

inline double softplus(double eta) { return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

inline double sigmoid(double eta) {
    if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

inline Eigen::MatrixXd one_hot(const DesignProblem& pr) {
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(pr.n(), pr.outputs());
    if (pr.family == Family::multinomial) {
        for (int i = 0; i < pr.n(); ++i) y(i, static_cast<int>(pr.y(i))) = 1.0;
    } else {
        y.col(0) = pr.y;
    }
    return y;
}

}  // namespace detail

// ---- smooth loss and gradient (reference evaluation, working scale) ----------

/// (1/(2n)) RSS for gaussian, (1/n) negative log-likelihood otherwise.
inline double smooth_loss(const DesignProblem& pr, const WorkingDesign& w, const Eigen::VectorXd& b0,
                          const Eigen::MatrixXd& beta) {
    const int n = pr.n();
    Eigen::MatrixXd eta = w.x * beta;
    eta.rowwise() += b0.transpose();
    switch (pr.family) {
        case Family::gaussian:
            return (pr.y - eta.col(0)).squaredNorm() / (2.0 * n);
        case Family::binomial: {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += detail::softplus(eta(i, 0)) - pr.y(i) * eta(i, 0);
            return s / n;
        }
        case Family::multinomial: {
            double s = 0.0;
            for (int i = 0; i < n; ++i) {
                const double mx = eta.row(i).maxCoeff();
                const double lse = mx + std::log((eta.row(i).array() - mx).exp().sum());
                s += lse - eta(i, static_cast<int>(pr.y(i)));
            }
            return s / n;
        }
    }
    return 0.0;
}

struct LossGradient {
    Eigen::VectorXd intercept;
    Eigen::MatrixXd beta;
};

inline LossGradient smooth_gradient(const DesignProblem& pr, const WorkingDesign& w, const Eigen::VectorXd& b0,
                                    const Eigen::MatrixXd& beta) {
    const int n = pr.n();
    Eigen::MatrixXd eta = w.x * beta;
    eta.rowwise() += b0.transpose();
    Eigen::MatrixXd resid(n, pr.outputs());  // d(loss_i)/d(eta_i)
    const Eigen::MatrixXd y = detail::one_hot(pr);
    switch (pr.family) {
        case Family::gaussian:
            resid = eta - y;
            break;
        case Family::binomial:
            for (int i = 0; i < n; ++i) resid(i, 0) = detail::sigmoid(eta(i, 0)) - y(i, 0);
            break;
        case Family::multinomial:
            for (int i = 0; i < n; ++i) {
                Eigen::RowVectorXd e = (eta.row(i).array() - eta.row(i).maxCoeff()).exp();
                resid.row(i) = e / e.sum() - y.row(i);
            }
            break;
    }
    return {resid.colwise().sum().transpose() / n, w.x.transpose() * resid / n};
}

inline double penalized_objective(const DesignProblem& pr, const WorkingDesign& w, const PenaltySpec& pen,
                                  const Eigen::VectorXd& b0, const Eigen::MatrixXd& beta) {
    return smooth_loss(pr, w, b0, beta) + pen.lambda1 * beta.cwiseAbs().sum() + pen.lambda2 * beta.squaredNorm();
}

/// Largest violation of the elastic-net optimality conditions on the working
/// scale, computed from an independent full-gradient evaluation.
inline double kkt_residual(const DesignProblem& pr, const PenaltySpec& pen, const Fit& fit) {
    const WorkingDesign w(pr);
    const auto g = smooth_gradient(pr, w, fit.intercept_std, fit.beta_std);
    double worst = 0.0;
    const Eigen::MatrixXd y = detail::one_hot(pr);
    for (int l = 0; l < pr.outputs(); ++l) {
        if (y.col(l).sum() == 0.0 && pr.family == Family::multinomial) continue;  // absent class
        if (pr.family != Family::gaussian) worst = std::max(worst, std::abs(g.intercept(l)));
        for (int j = 0; j < pr.q(); ++j) {
            if (w.colsq(j) == 0.0) continue;
            const double b = fit.beta_std(j, l);
            const double r = b != 0.0 ? std::abs(g.beta(j, l) + pen.lambda1 * (b > 0 ? 1.0 : -1.0) + 2.0 * pen.lambda2 * b)
                                      : std::max(0.0, std::abs(g.beta(j, l)) - pen.lambda1);
            worst = std::max(worst, r);
        }
    }
    return worst;
}

namespace detail {

// Cyclic coordinate descent on the working scale. Every coordinate step is a
// one-dimensional proximal Newton step; if it fails to lower the objective
// the step is redone with the global curvature bound (1/4 for logistic and
// softmax losses), which majorizes the loss and guarantees descent.
class CoordinateSolver {
public:
    CoordinateSolver(const DesignProblem& pr, const WorkingDesign& w)
        : pr_(pr), w_(w), n_(pr.n()), q_(pr.q()), k_(pr.outputs()), y_(one_hot(pr)),
          beta_(Eigen::MatrixXd::Zero(q_, k_)), b0_(Eigen::VectorXd::Zero(k_)), present_(k_, 1) {
        for (int l = 0; l < k_; ++l)
            if (pr.family == Family::multinomial && y_.col(l).sum() == 0.0) present_[l] = 0;
        init_null();
    }

    void set_penalty(const PenaltySpec& pen) { pen_ = pen; }

    /// Intercept-only optimum with all slopes zero.
    void init_null() {
        beta_.setZero();
        const Eigen::VectorXd mean = y_.colwise().mean().transpose();
        switch (pr_.family) {
            case Family::gaussian:
                b0_(0) = mean(0);
                break;
            case Family::binomial:
                b0_(0) = std::log(mean(0) / (1.0 - mean(0)));
                break;
            case Family::multinomial: {
                double acc = 0.0;
                int cnt = 0;
                for (int l = 0; l < k_; ++l) {
                    if (!present_[l]) continue;
                    b0_(l) = std::log(mean(l));
                    acc += b0_(l);
                    ++cnt;
                }
                for (int l = 0; l < k_; ++l) b0_(l) = present_[l] ? b0_(l) - acc / cnt : kAbsentIntercept;
                break;
            }
        }
        refresh();
    }

    void init_from(const Eigen::MatrixXd& beta, const Eigen::VectorXd& b0) {
        beta_ = beta;
        b0_ = b0;
        refresh();
    }

    const Eigen::MatrixXd& beta() const { return beta_; }
    const Eigen::VectorXd& intercept() const { return b0_; }

    double objective() const {
        return loss_ + pen_.lambda1 * beta_.cwiseAbs().sum() + pen_.lambda2 * beta_.squaredNorm();
    }

    /// Slope gradient of the smooth loss at the current point.
    Eigen::MatrixXd gradient() const { return w_.x.transpose() * (prob_ - y_) / n_; }

    /// One pass over the intercepts and the selected coordinates. Returns the
    /// largest absolute coefficient change.
    double sweep(const std::vector<char>* active) {
        double change = 0.0;
        if (pr_.family != Family::gaussian) {
            for (int l = 0; l < k_; ++l)
                if (present_[l]) change = std::max(change, update(-1, l));
        }
        for (int j = 0; j < q_; ++j) {
            if (w_.colsq(j) == 0.0) continue;
            if (active && !(*active)[j]) continue;
            for (int l = 0; l < k_; ++l)
                if (present_[l]) change = std::max(change, update(j, l));
        }
        if (pr_.family == Family::multinomial) center_intercepts();
        return change;
    }

    std::vector<char> active_set() const {
        std::vector<char> a(q_, 0);
        for (int j = 0; j < q_; ++j) a[j] = (beta_.row(j).array() != 0.0).any();
        return a;
    }

    double kkt_proxy() const {
        const Eigen::MatrixXd g = gradient();
        double worst = 0.0;
        for (int j = 0; j < q_; ++j)
            for (int l = 0; l < k_; ++l) {
                const double b = beta_(j, l);
                worst = std::max(worst, b != 0.0 ? std::abs(g(j, l) + pen_.lambda1 * (b > 0 ? 1 : -1) + 2 * pen_.lambda2 * b)
                                                 : std::max(0.0, std::abs(g(j, l)) - pen_.lambda1));
            }
        return worst;
    }

private:
    static constexpr double kAbsentIntercept = -30.0;
    static constexpr double kProbClamp = 1e-9;

    void refresh() {
        eta_ = w_.x * beta_;
        eta_.rowwise() += b0_.transpose();
        prob_.resize(n_, k_);
        loss_ = compute(eta_, prob_);
    }

    // Fills probabilities (or fitted values) for `eta` and returns the loss.
    double compute(const Eigen::MatrixXd& eta, Eigen::MatrixXd& prob) const {
        double s = 0.0;
        switch (pr_.family) {
            case Family::gaussian:
                prob = eta;
                s = (eta.col(0) - y_.col(0)).squaredNorm() / 2.0;
                break;
            case Family::binomial:
                for (int i = 0; i < n_; ++i) {
                    prob(i, 0) = sigmoid(eta(i, 0));
                    s += softplus(eta(i, 0)) - y_(i, 0) * eta(i, 0);
                }
                break;
            case Family::multinomial:
                for (int i = 0; i < n_; ++i) s += softmax_row(eta, prob, i);
                break;
        }
        return s / n_;
    }

    double softmax_row(const Eigen::MatrixXd& eta, Eigen::MatrixXd& prob, int i) const {
        const double mx = eta.row(i).maxCoeff();
        double z = 0.0;
        for (int l = 0; l < k_; ++l) z += (prob(i, l) = std::exp(eta(i, l) - mx));
        prob.row(i) /= z;
        return mx + std::log(z) - eta(i, static_cast<int>(pr_.y(i)));
    }

    // Column j of the working design, or the all-ones intercept column (j < 0).
    double xval(int i, int j) const { return j < 0 ? 1.0 : w_.x(i, j); }

    double update(int j, int l) {
        double& coef = j < 0 ? b0_(l) : beta_(j, l);
        const double l1 = j < 0 ? 0.0 : pen_.lambda1;
        const double l2 = j < 0 ? 0.0 : pen_.lambda2;
        const double old = coef;

        double g = 0.0, h = 0.0;
        for (int i = 0; i < n_; ++i) {
            const double xi = xval(i, j);
            g += xi * (prob_(i, l) - y_(i, l));
            if (pr_.family != Family::gaussian) {
                const double pc = std::clamp(prob_(i, l), kProbClamp, 1.0 - kProbClamp);
                h += xi * xi * pc * (1.0 - pc);
            }
        }
        g /= n_;
        const double bound = j < 0 ? 1.0 : w_.colsq(j);
        h = pr_.family == Family::gaussian ? bound : h / n_;
        if (h + 2.0 * l2 <= 0.0) return 0.0;

        double next = soft_threshold(h * old - g, l1) / (h + 2.0 * l2);
        if (next == old) return 0.0;
        if (pr_.family == Family::gaussian) {
            apply(j, l, next - old);
            coef = next;
            return std::abs(next - old);
        }

        const double pen_old = l1 * std::abs(old) + l2 * old * old;
        double trial_loss = try_step(j, l, next - old);
        if (trial_loss + l1 * std::abs(next) + l2 * next * next > loss_ + pen_old) {
            const double hb = 0.25 * bound;
            next = soft_threshold(hb * old - g, l1) / (hb + 2.0 * l2);
            if (next == old) return 0.0;
            trial_loss = try_step(j, l, next - old);
        }
        eta_.swap(eta_trial_);
        prob_.swap(prob_trial_);
        loss_ = trial_loss;
        coef = next;
        return std::abs(next - old);
    }

    // Gaussian steps update fitted values and loss in place.
    void apply(int j, int l, double delta) {
        for (int i = 0; i < n_; ++i) eta_(i, l) += delta * xval(i, j);
        prob_.col(l) = eta_.col(l);
        loss_ = (eta_.col(0) - y_.col(0)).squaredNorm() / (2.0 * n_);
    }

    double try_step(int j, int l, double delta) {
        eta_trial_ = eta_;
        prob_trial_.resize(n_, k_);
        for (int i = 0; i < n_; ++i) eta_trial_(i, l) += delta * xval(i, j);
        return compute(eta_trial_, prob_trial_);
    }

    // Softmax is invariant to a common shift of the intercepts.
    void center_intercepts() {
        double acc = 0.0;
        int cnt = 0;
        for (int l = 0; l < k_; ++l)
            if (present_[l]) {
                acc += b0_(l);
                ++cnt;
            }
        const double shift = acc / cnt;
        if (shift == 0.0) return;
        for (int l = 0; l < k_; ++l) {
            if (!present_[l]) continue;
            b0_(l) -= shift;
            eta_.col(l).array() -= shift;
        }
    }

    const DesignProblem& pr_;
    const WorkingDesign& w_;
    int n_, q_, k_;
    Eigen::MatrixXd y_;
    Eigen::MatrixXd beta_;
    Eigen::VectorXd b0_;
    std::vector<char> present_;
    PenaltySpec pen_;
    Eigen::MatrixXd eta_, prob_, eta_trial_, prob_trial_;
    double loss_ = 0.0;
};

inline Fit make_fit(const WorkingDesign& w, const CoordinateSolver& s, int sweeps, std::vector<double> trace) {
    Fit f;
    f.beta_std = s.beta();
    f.intercept_std = s.intercept();
    f.beta = f.beta_std.array().colwise() / w.scale.array();
    f.intercept = f.intercept_std - f.beta.transpose() * w.center;
    f.sweeps = sweeps;
    f.objective_trace = std::move(trace);
    return f;
}

// Runs sweeps until a full sweep moves no coefficient by more than
// tol * max(1, |beta|_inf). Between full sweeps only the active set is cycled.
inline int solve(CoordinateSolver& s, const FitOptions& opts, std::vector<double>* trace) {
    int sweeps = 0;
    auto tick = [&](double change) {
        ++sweeps;
        if (trace) trace->push_back(s.objective());
        const double scale = std::max(1.0, s.beta().cwiseAbs().maxCoeff());
        if (sweeps >= opts.max_sweeps) {
            throw ConvergenceError("coordinate descent did not converge in " + std::to_string(opts.max_sweeps) +
                                       " sweeps (kkt proxy " + std::to_string(s.kkt_proxy()) + ")",
                                   s.kkt_proxy());
        }
        return change < opts.tol * scale;
    };
    if (trace) trace->push_back(s.objective());
    for (;;) {
        if (tick(s.sweep(nullptr))) return sweeps;
        const auto active = s.active_set();
        while (!tick(s.sweep(&active))) {
        }
    }
}

}  // namespace detail

/// Minimizes (1/(2n)) deviance + lambda1 |theta|_1 + lambda2 |theta|_2^2 over
/// the slopes (intercepts unpenalized).
inline Fit fit(const DesignProblem& pr, const PenaltySpec& pen, const FitOptions& opts = {}) {
    pr.validate();
    pen.validate();
    if (pen.lambda1 == 0.0 && pen.lambda2 == 0.0 && pr.q() >= pr.n()) {
        throw std::invalid_argument("unpenalized fit needs q < n");
    }
    const WorkingDesign w(pr);
    detail::CoordinateSolver s(pr, w);
    s.set_penalty(pen);
    std::vector<double> trace;
    const int sweeps = detail::solve(s, opts, opts.trace_objective ? &trace : nullptr);
    return detail::make_fit(w, s, sweeps, std::move(trace));
}

/// Fit started from arbitrary working-scale coefficients.
inline Fit fit_from(const DesignProblem& pr, const PenaltySpec& pen, const Eigen::MatrixXd& beta_std,
                    const Eigen::VectorXd& intercept_std, const FitOptions& opts = {}) {
    pr.validate();
    pen.validate();
    const WorkingDesign w(pr);
    detail::CoordinateSolver s(pr, w);
    s.set_penalty(pen);
    s.init_from(beta_std, intercept_std);
    std::vector<double> trace;
    const int sweeps = detail::solve(s, opts, opts.trace_objective ? &trace : nullptr);
    return detail::make_fit(w, s, sweeps, std::move(trace));
}

struct CoefficientPath {
    std::vector<double> lambdas;  // strictly decreasing lambda1 values
    double lambda2 = 0.0;
    std::vector<Fit> fits;
    std::vector<int> active_counts;  // active predictor groups per grid point
};

/// Smallest lambda1 at which the intercept-only model is optimal.
inline double lambda_max(const DesignProblem& pr) {
    pr.validate();
    const WorkingDesign w(pr);
    detail::CoordinateSolver s(pr, w);
    const Eigen::MatrixXd g = s.gradient();
    return g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
}

/// Warm-started fits along a caller-supplied decreasing lambda1 grid.
inline CoefficientPath fit_path(const DesignProblem& pr, std::vector<double> lambdas, double lambda2,
                                const FitOptions& opts = {}) {
    pr.validate();
    for (std::size_t i = 1; i < lambdas.size(); ++i) {
        if (!(lambdas[i] < lambdas[i - 1])) throw std::invalid_argument("lambda grid must be strictly decreasing");
    }
    const WorkingDesign w(pr);
    detail::CoordinateSolver s(pr, w);
    const double lmax = [&] {
        const Eigen::MatrixXd g = s.gradient();
        return g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
    }();
    CoefficientPath path;
    path.lambda2 = lambda2;
    for (double lam : lambdas) {
        const PenaltySpec pen{lam, lambda2};
        pen.validate();
        s.set_penalty(pen);
        int sweeps = 0;
        // At or above lambda_max the null model is already optimal.
        if (lam < lmax) sweeps = detail::solve(s, opts, nullptr);
        path.fits.push_back(detail::make_fit(w, s, sweeps, {}));
        path.active_counts.push_back(static_cast<int>(path.fits.back().active_groups(pr).size()));
    }
    path.lambdas = std::move(lambdas);
    return path;
}

/// Log-spaced grid from lambda_max down to lambda_max * ratio. A ratio of 0
/// picks 1e-4 when n > q and 1e-2 otherwise.
inline std::vector<double> lambda_grid(const DesignProblem& pr, int grid_size, double ratio = 0.0) {
    if (grid_size < 2) throw std::invalid_argument("lambda grid needs at least two points");
    if (ratio <= 0.0) ratio = pr.n() > pr.q() ? 1e-4 : 1e-2;
    if (!(ratio < 1.0)) throw std::invalid_argument("lambda ratio must be < 1");
    double lmax = lambda_max(pr);
    if (!(lmax > 0.0)) lmax = 1.0;
    std::vector<double> grid(grid_size);
    for (int i = 0; i < grid_size; ++i) grid[i] = lmax * std::pow(ratio, static_cast<double>(i) / (grid_size - 1));
    return grid;
}

inline CoefficientPath lambda_path(const DesignProblem& pr, double lambda2, int grid_size, double ratio = 0.0,
                                   const FitOptions& opts = {}) {
    return fit_path(pr, lambda_grid(pr, grid_size, ratio), lambda2, opts);
}

struct PathSelection {
    std::size_t index = 0;
    Fit fit;
    bool saturated = false;  // the requested count was never reached
    bool overshoot = false;  // the first qualifying row has more than k active
};

/// First (largest lambda1) row of the path with at least k active groups.
inline PathSelection first_k_active(const CoefficientPath& path, int k) {
    if (k < 0) throw std::invalid_argument("k must be >= 0");
    if (path.fits.empty()) throw std::invalid_argument("empty path");
    for (std::size_t i = 0; i < path.fits.size(); ++i) {
        if (path.active_counts[i] >= k) return {i, path.fits[i], false, path.active_counts[i] > k};
    }
    const std::size_t last = path.fits.size() - 1;
    return {last, path.fits[last], true, false};
}

// ---- prediction, deviance, cross-validation ----------------------------------

inline Eigen::MatrixXd linear_predictor(const Fit& f, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd eta = x * f.beta;
    eta.rowwise() += f.intercept.transpose();
    return eta;
}

/// Mean per-observation deviance (squared error for gaussian).
inline double mean_deviance(const DesignProblem& pr, const Fit& f) {
    const Eigen::MatrixXd eta = linear_predictor(f, pr.x);
    double s = 0.0;
    for (int i = 0; i < pr.n(); ++i) {
        switch (pr.family) {
            case Family::gaussian:
                s += (pr.y(i) - eta(i, 0)) * (pr.y(i) - eta(i, 0));
                break;
            case Family::binomial:
                s += 2.0 * (detail::softplus(eta(i, 0)) - pr.y(i) * eta(i, 0));
                break;
            case Family::multinomial: {
                const double mx = eta.row(i).maxCoeff();
                const double lse = mx + std::log((eta.row(i).array() - mx).exp().sum());
                s += 2.0 * (lse - eta(i, static_cast<int>(pr.y(i))));
                break;
            }
        }
    }
    return s / pr.n();
}

inline DesignProblem subset_rows(const DesignProblem& pr, const std::vector<int>& rows) {
    DesignProblem out;
    out.family = pr.family;
    out.classes = pr.classes;
    out.standardize = pr.standardize;
    out.groups = pr.groups;
    out.x.resize(static_cast<int>(rows.size()), pr.q());
    out.y.resize(static_cast<int>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.x.row(static_cast<int>(r)) = pr.x.row(rows[r]);
        out.y(static_cast<int>(r)) = pr.y(rows[r]);
    }
    return out;
}

/// Fold label per observation. Discrete responses are stratified: each class
/// is shuffled and dealt round-robin so every fold sees every class in turn.
inline std::vector<int> assign_folds(const DesignProblem& pr, int folds, Rng& rng) {
    std::vector<int> fold(pr.n());
    if (pr.family == Family::gaussian) {
        std::vector<int> idx(pr.n());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (int r = 0; r < pr.n(); ++r) fold[idx[r]] = r % folds;
        return fold;
    }
    const int k = pr.family == Family::binomial ? 2 : pr.classes;
    std::vector<std::vector<int>> by_class(k);
    for (int i = 0; i < pr.n(); ++i) by_class[static_cast<int>(pr.y(i))].push_back(i);
    int next = 0;
    for (auto& members : by_class) {
        std::shuffle(members.begin(), members.end(), rng);
        for (int i : members) fold[i] = next++ % folds;
    }
    return fold;
}

struct CrossValidation {
    double lambda1 = 0.0;
    std::size_t index = 0;
    Fit fit;  // full-data fit at the chosen lambda1
    CoefficientPath path;
    std::vector<double> mean_deviance;
};

/// K-fold cross-validation over a lambda1 grid at fixed lambda2. Ties in the
/// mean held-out deviance go to the larger lambda1.
inline CrossValidation cross_validate(const DesignProblem& pr, double lambda2, int folds, Rng& rng,
                                      int grid_size = 50, const FitOptions& opts = {}) {
    pr.validate();
    if (folds < 2 || folds > pr.n()) throw std::invalid_argument("cross_validate needs 2 <= folds <= n");

    const Eigen::MatrixXd y = detail::one_hot(pr);
    std::vector<int> fold;
    bool ok = false;
    for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
        fold = assign_folds(pr, folds, rng);
        ok = true;
        if (pr.family == Family::gaussian) break;
        // every training split must keep every class present in the data
        for (int f = 0; f < folds && ok; ++f) {
            for (int l = 0; l < pr.outputs() && ok; ++l) {
                const int want = pr.family == Family::binomial ? -1 : l;
                bool seen_train = false, seen_any = false;
                for (int i = 0; i < pr.n(); ++i) {
                    const bool member = want < 0 ? true : static_cast<int>(pr.y(i)) == want;
                    if (!member) continue;
                    seen_any = true;
                    if (fold[i] != f) seen_train = true;
                }
                if (seen_any && !seen_train) ok = false;
            }
            if (pr.family == Family::binomial) {
                double s = 0.0;
                int cnt = 0;
                for (int i = 0; i < pr.n(); ++i)
                    if (fold[i] != f) {
                        s += pr.y(i);
                        ++cnt;
                    }
                if (s == 0.0 || s == cnt) ok = false;
            }
        }
    }
    if (!ok) throw std::invalid_argument("cross_validate: cannot stratify folds so every training split keeps all classes");

    CrossValidation cv;
    cv.path = lambda_path(pr, lambda2, grid_size, 0.0, opts);
    std::vector<double> total(cv.path.lambdas.size(), 0.0);
    for (int f = 0; f < folds; ++f) {
        std::vector<int> train, test;
        for (int i = 0; i < pr.n(); ++i) (fold[i] == f ? test : train).push_back(i);
        const DesignProblem tr = subset_rows(pr, train);
        const DesignProblem te = subset_rows(pr, test);
        const CoefficientPath p = fit_path(tr, cv.path.lambdas, lambda2, opts);
        for (std::size_t g = 0; g < p.fits.size(); ++g) total[g] += mean_deviance(te, p.fits[g]);
    }
    cv.mean_deviance.resize(total.size());
    for (std::size_t g = 0; g < total.size(); ++g) cv.mean_deviance[g] = total[g] / folds;
    std::size_t best = 0;
    for (std::size_t g = 1; g < total.size(); ++g)
        if (cv.mean_deviance[g] < cv.mean_deviance[best]) best = g;
    cv.index = best;
    cv.lambda1 = cv.path.lambdas[best];
    cv.fit = cv.path.fits[best];
    return cv;
}

}  // namespace mrfsel
