#ifndef DERCOORD_SPARSE_LP_HPP
#define DERCOORD_SPARSE_LP_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "dercoord/errors.hpp"
#include "dercoord/simplex.hpp"

namespace dercoord {

/// Accumulates min c'x s.t. rows, lo <= x <= hi. Inequality rows get a
/// nonnegative slack column so the solver sees equality form only.
class SparseLPBuilder {
public:
    int add_var(double lo, double hi, double cost) {
        lo_.push_back(lo);
        hi_.push_back(hi);
        c_.push_back(cost);
        return static_cast<int>(c_.size()) - 1;
    }

    void add_cost(int var, double cost) { c_[static_cast<std::size_t>(var)] += cost; }

    // terms: (variable, coefficient). slack_hi caps the slack of an
    // inequality row when the caller knows its range.
    int add_row(const std::vector<std::pair<int, double>>& terms, RowSense sense, double rhs,
                double slack_hi = std::numeric_limits<double>::infinity()) {
        const int r = static_cast<int>(b_.size());
        for (const auto& [j, v] : terms)
            if (v != 0.0) trips_.emplace_back(r, j, v);
        if (sense != RowSense::eq) {
            const int s = add_var(0.0, slack_hi, 0.0);
            trips_.emplace_back(r, s, sense == RowSense::le ? 1.0 : -1.0);
        }
        b_.push_back(rhs);
        return r;
    }

    int vars() const { return static_cast<int>(c_.size()); }
    int rows() const { return static_cast<int>(b_.size()); }

    Eigen::SparseMatrix<double> matrix() const {
        Eigen::SparseMatrix<double> A(rows(), vars());
        A.setFromTriplets(trips_.begin(), trips_.end());
        return A;
    }
    Eigen::VectorXd rhs() const { return Eigen::Map<const Eigen::VectorXd>(b_.data(), rows()); }
    Eigen::VectorXd cost() const { return Eigen::Map<const Eigen::VectorXd>(c_.data(), vars()); }
    Eigen::VectorXd lower() const { return Eigen::Map<const Eigen::VectorXd>(lo_.data(), vars()); }
    Eigen::VectorXd upper() const { return Eigen::Map<const Eigen::VectorXd>(hi_.data(), vars()); }

private:
    std::vector<double> lo_, hi_, c_, b_;
    std::vector<Eigen::Triplet<double>> trips_;
};

struct IPMOptions {
    double tol = 1e-8;
    int max_iter = 200;
};

struct IPMResult {
    Eigen::VectorXd x;
    double objective = 0.0;
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double gap = 0.0;
};

/// Mehrotra predictor-corrector on min c'x, Ax = b, lo <= x <= hi with
/// finite lo. Each Newton step factors the regularized augmented system
/// with a sparse LDL'.
inline IPMResult solve_sparse_lp(const SparseLPBuilder& lp, const IPMOptions& opt = {}) {
    using Eigen::VectorXd;
    const Eigen::SparseMatrix<double> Afull = lp.matrix();
    const VectorXd lo = lp.lower(), ufull = lp.upper() - lo;
    const int nfull = lp.vars(), m = lp.rows();
    if (!lo.allFinite()) throw std::invalid_argument("sparse LP needs finite lower bounds");
    if ((ufull.array() < 0.0).any()) throw Infeasible("variable bounds cross");
    const VectorXd b = lp.rhs() - Afull * lo;

    // Fixed variables have no interior; drop their columns.
    std::vector<int> keep;
    for (int j = 0; j < nfull; ++j)
        if (!(ufull[j] <= 1e-14)) keep.push_back(j);
    const int n = static_cast<int>(keep.size());
    VectorXd c(n), u(n);
    std::vector<Eigen::Triplet<double>> trips;
    {
        std::vector<int> col_of(static_cast<std::size_t>(nfull), -1);
        for (int k = 0; k < n; ++k) {
            col_of[static_cast<std::size_t>(keep[static_cast<std::size_t>(k)])] = k;
            c[k] = lp.cost()[keep[static_cast<std::size_t>(k)]];
            u[k] = ufull[keep[static_cast<std::size_t>(k)]];
        }
        for (int j = 0; j < Afull.outerSize(); ++j)
            for (Eigen::SparseMatrix<double>::InnerIterator itr(Afull, j); itr; ++itr)
                if (const int k = col_of[static_cast<std::size_t>(itr.col())]; k >= 0)
                    trips.emplace_back(static_cast<int>(itr.row()), k, itr.value());
    }
    auto scatter = [&](const VectorXd& xr) {
        VectorXd x = lo;
        for (int k = 0; k < n; ++k) x[keep[static_cast<std::size_t>(k)]] += xr[k];
        return x;
    };
    if (n == 0 || m == 0) {
        // Nothing couples the variables: each sits at its cheaper bound.
        if (m > 0 && b.lpNorm<Eigen::Infinity>() > 1e-9) throw SolverStall(0, "fixed variables violate rows");
        IPMResult res;
        VectorXd xr = VectorXd::Zero(n);
        for (int j = 0; j < n; ++j) {
            if (c[j] < 0.0 && !std::isfinite(u[j])) throw SolverStall(0, "unbounded variable");
            xr[j] = c[j] < 0.0 ? u[j] : 0.0;
        }
        res.x = scatter(xr);
        res.objective = lp.cost().dot(res.x);
        return res;
    }
    Eigen::SparseMatrix<double> A(m, n);
    A.setFromTriplets(trips.begin(), trips.end());
    const Eigen::SparseMatrix<double> At = A.transpose();
    const Eigen::Array<bool, Eigen::Dynamic, 1> bounded = u.array().isFinite();
    const VectorXd ub = bounded.select(u, 0.0);

    VectorXd x(n), w = VectorXd::Zero(n), z = VectorXd::Ones(n), s = VectorXd::Zero(n), y = VectorXd::Zero(m);
    for (int j = 0; j < n; ++j) {
        x[j] = bounded[j] ? std::max(0.5 * u[j], 1e-6) : 1.0;
        if (bounded[j]) {
            w[j] = std::max(u[j] - x[j], 1e-6);
            s[j] = 1.0;
        }
    }
    const VectorXd bmask = bounded.cast<double>().matrix();
    const double nb = static_cast<double>(bounded.count());
    const double scale_b = 1.0 + b.lpNorm<Eigen::Infinity>(), scale_c = 1.0 + c.lpNorm<Eigen::Infinity>();

    constexpr double kRho = 1e-8, kDelta = 1e-8;
    Eigen::SparseMatrix<double> K(n + m, n + m);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    bool analyzed = false;
    IPMResult res;

    auto max_step = [](const VectorXd& v, const VectorXd& dv) {
        double a = 1.0;
        for (Eigen::Index i = 0; i < v.size(); ++i)
            if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
        return a;
    };

    for (int it = 0; it < opt.max_iter; ++it) {
        const VectorXd rp = b - A * x;
        const VectorXd ru = bmask.cwiseProduct(ub - x - w);
        const VectorXd rd = c - At * y - z + s;
        const double mu = (x.dot(z) + w.dot(s)) / (n + nb);
        const double pobj = c.dot(x);
        res.primal_residual = std::max(rp.lpNorm<Eigen::Infinity>() / scale_b, ru.lpNorm<Eigen::Infinity>() / scale_b);
        res.dual_residual = rd.lpNorm<Eigen::Infinity>() / scale_c;
        res.gap = mu * (n + nb) / (1.0 + std::abs(pobj));
        res.iterations = it;
        if (res.primal_residual < opt.tol && res.dual_residual < opt.tol && res.gap < opt.tol) break;

        VectorXd D(n);
        for (int j = 0; j < n; ++j) D[j] = z[j] / x[j] + (bounded[j] ? s[j] / w[j] : 0.0);
        // Quasi-definite augmented system [-(D + rho) A'; A delta]. It
        // tolerates the extreme spread in D near a degenerate optimum far
        // better than the normal equations do.
        {
            std::vector<Eigen::Triplet<double>> kt;
            kt.reserve(static_cast<std::size_t>(n + m) + trips.size());
            for (int j = 0; j < n; ++j) kt.emplace_back(j, j, -(D[j] + kRho));
            for (const auto& t : trips) kt.emplace_back(n + t.row(), t.col(), t.value());
            for (int i = 0; i < m; ++i) kt.emplace_back(n + i, n + i, kDelta);
            K.setFromTriplets(kt.begin(), kt.end());
        }
        if (!analyzed) {
            ldlt.analyzePattern(K);
            analyzed = true;
        }
        ldlt.factorize(K);
        if (ldlt.info() != Eigen::Success) throw SolverStall(it, "augmented system factorization failed");

        auto solve_dir = [&](const VectorXd& rxz, const VectorXd& rws, VectorXd& dx, VectorXd& dw, VectorXd& dy,
                             VectorXd& dz, VectorXd& ds) {
            VectorXd rhat = rd - rxz.cwiseQuotient(x);
            for (int j = 0; j < n; ++j)
                if (bounded[j]) rhat[j] += (rws[j] - s[j] * ru[j]) / w[j];
            VectorXd sol = VectorXd::Zero(n + m);
            // Refine against the unregularized matrix.
            for (int pass = 0; pass < 10; ++pass) {
                const VectorXd px = sol.head(n), py = sol.tail(m);
                VectorXd err(n + m);
                err << rhat + D.cwiseProduct(px) - At * py, rp - A * px;
                if (pass > 0 && err.lpNorm<Eigen::Infinity>() <= 1e-15 * (scale_b + scale_c)) break;
                sol += ldlt.solve(err);
            }
            dx = sol.head(n);
            dy = sol.tail(m);
            dz = (rxz - z.cwiseProduct(dx)).cwiseQuotient(x);
            dw = bmask.cwiseProduct(ru - dx);
            ds = VectorXd::Zero(n);
            for (int j = 0; j < n; ++j)
                if (bounded[j]) ds[j] = (rws[j] - s[j] * dw[j]) / w[j];
        };

        VectorXd dx, dw, dy, dz, ds;
        const VectorXd rxz_aff = -x.cwiseProduct(z);
        const VectorXd rws_aff = -w.cwiseProduct(s);
        solve_dir(rxz_aff, rws_aff, dx, dw, dy, dz, ds);
        const double ap_aff = std::min(max_step(x, dx), max_step(w, dw));
        const double ad_aff = std::min(max_step(z, dz), max_step(s, ds));
        const double mu_aff = ((x + ap_aff * dx).dot(z + ad_aff * dz) + (w + ap_aff * dw).dot(s + ad_aff * ds)) / (n + nb);
        const double sigma = std::pow(mu_aff / mu, 3.0);

        const VectorXd rxz = VectorXd::Constant(n, sigma * mu) - x.cwiseProduct(z) - dx.cwiseProduct(dz);
        VectorXd rws = bmask * (sigma * mu) - w.cwiseProduct(s) - dw.cwiseProduct(ds);
        rws = bmask.cwiseProduct(rws);
        solve_dir(rxz, rws, dx, dw, dy, dz, ds);
        const double ap = std::min(1.0, 0.995 * std::min(max_step(x, dx), max_step(w, dw)));
        const double ad = std::min(1.0, 0.995 * std::min(max_step(z, dz), max_step(s, ds)));
        x += ap * dx;
        w += ap * dw;
        y += ad * dy;
        z += ad * dz;
        s += ad * ds;
        for (int j = 0; j < n; ++j)
            if (!bounded[j]) {
                w[j] = 0.0;
                s[j] = 0.0;
            }
        if (!x.allFinite() || !y.allFinite()) throw SolverStall(it, "interior point diverged");
        res.iterations = it + 1;
    }
    if (!(res.primal_residual < opt.tol && res.dual_residual < opt.tol && res.gap < opt.tol))
        throw SolverStall(res.iterations, "interior point did not converge");
    res.x = scatter(x);
    res.objective = lp.cost().dot(res.x);
    return res;
}

}  // namespace dercoord

#endif
