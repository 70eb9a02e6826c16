#ifndef DERCOORD_BARRIER_SOLVER_HPP
#define DERCOORD_BARRIER_SOLVER_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dercoord/errors.hpp"

namespace dercoord {

// minimize   c'x - sum_k w_k log(b_k - L_k x)
// subject to C x <= d
//            x_i^2 + x_j^2 + coef * x_k <= rhs   (one entry per disc)
struct BarrierProblem {
    struct Disc {
        int i = 0;
        int j = 0;
        double rhs = 0.0;
        int k = -1;  // optional linear term
        double coef = 0.0;
    };

    Eigen::Index n = 0;
    Eigen::VectorXd c;
    Eigen::MatrixXd L;
    Eigen::VectorXd b;
    Eigen::VectorXd w;
    Eigen::MatrixXd C;
    Eigen::VectorXd d;
    std::vector<Disc> discs;

    Eigen::Index constraint_count() const { return C.rows() + static_cast<Eigen::Index>(discs.size()); }

    // Constraint values g(x) (feasible iff all <= 0).
    Eigen::VectorXd constraints(const Eigen::VectorXd& x) const {
        Eigen::VectorXd g(constraint_count());
        if (C.rows() > 0) g.head(C.rows()) = C * x - d;
        for (std::size_t q = 0; q < discs.size(); ++q) {
            const auto& e = discs[q];
            double v = x(e.i) * x(e.i) + x(e.j) * x(e.j) - e.rhs;
            if (e.k >= 0) v += e.coef * x(e.k);
            g(C.rows() + static_cast<Eigen::Index>(q)) = v;
        }
        return g;
    }

    Eigen::VectorXd objective_gradient(const Eigen::VectorXd& x) const {
        Eigen::VectorXd grad = c.size() ? c : Eigen::VectorXd::Zero(n);
        for (Eigen::Index r = 0; r < L.rows(); ++r) grad += (w(r) / (b(r) - L.row(r).dot(x))) * L.row(r).transpose();
        return grad;
    }

    // Constraint gradients as rows, ordered like constraints().
    Eigen::MatrixXd constraint_jacobian(const Eigen::VectorXd& x) const {
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(constraint_count(), n);
        if (C.rows() > 0) J.topRows(C.rows()) = C;
        for (std::size_t q = 0; q < discs.size(); ++q) {
            const auto& e = discs[q];
            const Eigen::Index r = C.rows() + static_cast<Eigen::Index>(q);
            J(r, e.i) += 2.0 * x(e.i);
            J(r, e.j) += 2.0 * x(e.j);
            if (e.k >= 0) J(r, e.k) += e.coef;
        }
        return J;
    }

    double objective(const Eigen::VectorXd& x) const {
        double f = c.size() ? c.dot(x) : 0.0;
        for (Eigen::Index r = 0; r < L.rows(); ++r) f -= w(r) * std::log(b(r) - L.row(r).dot(x));
        return f;
    }
};

struct BarrierOptions {
    double tol = 1e-6;  // target bound on the duality gap and KKT residual
    double mu = 10.0;
    double t0 = 1.0;
    int max_newton = 5000;
    // Phase I stops as soon as its slack variable drops below -margin.
    double phase1_margin = 1e-6;
};

struct BarrierResult {
    Eigen::VectorXd x;
    double objective = 0.0;
    int iterations = 0;
    double kkt_residual = 0.0;
    double duality_gap = 0.0;
};

namespace detail {

// Value and gradient of t*f0 + barrier, returning +inf outside the domain.
// When `root` is given it receives a matrix M with M'M equal to the Hessian,
// so Newton systems can be solved by QR without squaring the conditioning.
inline double barrier_eval(const BarrierProblem& P, double t, const Eigen::VectorXd& x, Eigen::VectorXd* grad,
                           Eigen::MatrixXd* root) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (grad) grad->setZero(P.n);
    Eigen::Index row_index = 0;
    if (root) root->setZero(P.L.rows() + P.C.rows() + 3 * static_cast<Eigen::Index>(P.discs.size()), P.n);
    double val = 0.0;
    if (P.c.size()) {
        val += t * P.c.dot(x);
        if (grad) *grad += t * P.c;
    }
    auto log_term = [&](const auto& row, double slack, double weight) {
        if (!(slack > 0.0)) return false;
        val -= weight * std::log(slack);
        if (grad) *grad += (weight / slack) * row.transpose();
        if (root) root->row(row_index++) = (std::sqrt(weight) / slack) * row;
        return true;
    };
    for (Eigen::Index r = 0; r < P.L.rows(); ++r)
        if (!log_term(P.L.row(r), P.b(r) - P.L.row(r).dot(x), t * P.w(r))) return inf;
    for (Eigen::Index r = 0; r < P.C.rows(); ++r)
        if (!log_term(P.C.row(r), P.d(r) - P.C.row(r).dot(x), 1.0)) return inf;
    for (const auto& e : P.discs) {
        double slack = e.rhs - x(e.i) * x(e.i) - x(e.j) * x(e.j);
        if (e.k >= 0) slack -= e.coef * x(e.k);
        if (!(slack > 0.0)) return inf;
        val -= std::log(slack);
        if (!grad && !root) continue;
        Eigen::RowVectorXd dg = Eigen::RowVectorXd::Zero(P.n);
        dg(e.i) += 2.0 * x(e.i);
        dg(e.j) += 2.0 * x(e.j);
        if (e.k >= 0) dg(e.k) += e.coef;
        if (grad) *grad += dg.transpose() / slack;
        if (root) {
            root->row(row_index++) = dg / slack;
            const double curv = std::sqrt(2.0 / slack);
            (*root)(row_index++, e.i) = curv;
            (*root)(row_index++, e.j) = curv;
        }
    }
    return val;
}

// Damped Newton minimisation of the barrier function at fixed t.
// Returns the number of Newton steps; throws SolverStall when the budget runs out.
template <class EarlyExit>
int center(const BarrierProblem& P, double t, Eigen::VectorXd& x, int budget, EarlyExit early_exit) {
    Eigen::VectorXd grad(P.n), step(P.n);
    Eigen::MatrixXd root;
    double previous = std::numeric_limits<double>::infinity();
    for (int it = 0; it < budget; ++it) {
        const double f = barrier_eval(P, t, x, &grad, &root);
        // H = M'M = R'R with R from a QR factorisation of M.
        const Eigen::HouseholderQR<Eigen::MatrixXd> qr(root);
        const auto R = qr.matrixQR().topRows(P.n).template triangularView<Eigen::Upper>();
        step = -grad;
        R.transpose().solveInPlace(step);
        R.solveInPlace(step);
        if (!step.allFinite()) {
            Eigen::MatrixXd hess = root.transpose() * root;
            hess.diagonal().array() += 1e-12 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
            step = -hess.ldlt().solve(grad);
        }
        const double decrement = -grad.dot(step);  // squared Newton decrement
        if (!(decrement >= 0.0) || decrement / 2.0 <= 1e-16) return it;
        // Past this point rounding in the Hessian solve dominates.
        if (decrement < 1e-8 && decrement >= 0.5 * previous) return it;
        previous = decrement;
        double alpha = 1.0;
        if (decrement < 0.1) {
            // Quadratic convergence region of a self-concordant function:
            // full steps, backtracking only to stay inside the domain.
            while (!std::isfinite(barrier_eval(P, t, x + alpha * step, nullptr, nullptr))) {
                alpha *= 0.5;
                if (alpha < 1e-16) return it;
            }
        } else {
            double trial = barrier_eval(P, t, x + step, nullptr, nullptr);
            while (!(trial <= f - 0.01 * alpha * decrement)) {
                alpha *= 0.5;
                if (alpha < 1e-16) return it;  // no progress possible in floating point
                trial = barrier_eval(P, t, x + alpha * step, nullptr, nullptr);
            }
        }
        x += alpha * step;
        if (early_exit(x)) return it + 1;
    }
    throw SolverStall(budget, "barrier centering did not converge");
}

}  // namespace detail

/// Finds a strictly feasible point of the inequality system, starting from
/// any x0 in the domain. Returns nullopt when the system has no interior.
inline std::optional<Eigen::VectorXd> phase_one(const BarrierProblem& P, const Eigen::VectorXd& x0,
                                                const BarrierOptions& opt = {}, int* iterations = nullptr) {
    const Eigen::Index n = P.n;
    const Eigen::Index m = P.constraint_count();
    if (m == 0 || P.constraints(x0).maxCoeff() < -opt.phase1_margin) return x0;

    BarrierProblem Q;
    Q.n = n + 1;
    Q.c = Eigen::VectorXd::Zero(n + 1);
    Q.c(n) = 1.0;
    Q.C.resize(P.C.rows(), n + 1);
    Q.C << P.C, -Eigen::VectorXd::Ones(P.C.rows());
    Q.d = P.d;
    for (auto e : P.discs) {
        if (e.k >= 0) throw std::invalid_argument("phase one supports plain discs only");
        e.k = static_cast<int>(n);
        e.coef = -1.0;
        Q.discs.push_back(e);
    }
    // Keep the slack bounded below so the auxiliary problem has a minimiser.
    Q.C.conservativeResize(Q.C.rows() + 1, Eigen::NoChange);
    Q.C.row(Q.C.rows() - 1).setZero();
    Q.C(Q.C.rows() - 1, n) = -1.0;
    Q.d.conservativeResize(Q.d.size() + 1);
    Q.d(Q.d.size() - 1) = 1.0;

    Eigen::VectorXd z(n + 1);
    z.head(n) = x0;
    z(n) = std::max(P.constraints(x0).maxCoeff(), -0.5) + 1.0;

    const double mq = static_cast<double>(Q.constraint_count());
    double t = opt.t0;
    int total = 0;
    auto done = [&](const Eigen::VectorXd& y) { return y(n) < -opt.phase1_margin; };
    while (true) {
        total += detail::center(Q, t, z, opt.max_newton - total, done);
        if (done(z)) break;
        // Central point: the optimal slack is at least z(n) - mq / t.
        if (z(n) - mq / t > 0.0 || mq / t < 1e-12) break;
        t *= opt.mu;
    }
    if (iterations) *iterations = total;
    if (!(z(n) < -1e-12)) return std::nullopt;
    Eigen::VectorXd x = z.head(n);
    if (!(P.constraints(x).maxCoeff() < 0.0)) return std::nullopt;
    return x;
}

/// KKT residual at x: the smaller of two multiplier certificates, the
/// barrier estimates 1/(t s_k) and a nonnegative least-squares fit on the
/// nearly active constraints. Each certificate scores
/// max(stationarity, complementarity, primal infeasibility).
inline double kkt_residual(const BarrierProblem& P, const Eigen::VectorXd& x, double t) {
    const Eigen::VectorXd g0 = P.objective_gradient(x);
    const Eigen::MatrixXd J = P.constraint_jacobian(x);
    const Eigen::VectorXd slack = -P.constraints(x);
    const double infeas = std::max(0.0, -slack.minCoeff());

    const Eigen::VectorXd lam_bar = (t * slack.array()).inverse().matrix();
    const double bar = std::max({(g0 + J.transpose() * lam_bar).cwiseAbs().maxCoeff(),
                                 (lam_bar.array() * slack.array()).abs().maxCoeff(), infeas});

    std::vector<Eigen::Index> active;
    for (Eigen::Index k = 0; k < slack.size(); ++k)
        if (slack(k) < 1e-5) active.push_back(k);
    double fit = std::numeric_limits<double>::infinity();
    while (true) {
        Eigen::MatrixXd JA(P.n, static_cast<Eigen::Index>(active.size()));
        for (std::size_t a = 0; a < active.size(); ++a) JA.col(static_cast<Eigen::Index>(a)) = J.row(active[a]).transpose();
        Eigen::VectorXd lam = Eigen::VectorXd::Zero(JA.cols());
        if (JA.cols() > 0) lam = JA.colPivHouseholderQr().solve(-g0);
        Eigen::Index worst = -1;
        for (Eigen::Index a = 0; a < lam.size(); ++a)
            if (lam(a) < 0.0 && (worst < 0 || lam(a) < lam(worst))) worst = a;
        if (worst >= 0) {
            active.erase(active.begin() + worst);
            continue;
        }
        double comp = 0.0;
        for (std::size_t a = 0; a < active.size(); ++a)
            comp = std::max(comp, lam(static_cast<Eigen::Index>(a)) * std::abs(slack(active[a])));
        fit = std::max({(g0 + JA * lam).cwiseAbs().maxCoeff(), comp, infeas});
        break;
    }
    return std::min(bar, fit);
}

/// Log-barrier interior-point method. x0 must be strictly feasible.
inline BarrierResult barrier_solve(const BarrierProblem& P, Eigen::VectorXd x0, const BarrierOptions& opt = {}) {
    const double m = static_cast<double>(std::max<Eigen::Index>(P.constraint_count(), 1));
    BarrierResult res;
    res.x = std::move(x0);
    double t = opt.t0;
    auto never = [](const Eigen::VectorXd&) { return false; };
    while (true) {
        res.iterations += detail::center(P, t, res.x, opt.max_newton - res.iterations, never);
        if (m / t < opt.tol * 0.1) break;
        t *= opt.mu;
    }
    res.duality_gap = m / t;
    res.kkt_residual = kkt_residual(P, res.x, t);
    res.objective = P.objective(res.x);
    return res;
}

}  // namespace dercoord

#endif
