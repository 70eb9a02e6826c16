#ifndef DERCOORD_SIMPLEX_HPP
#define DERCOORD_SIMPLEX_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace dercoord {

enum class RowSense { le, ge, eq };

struct LPRow {
    Eigen::VectorXd a;
    RowSense sense = RowSense::le;
    double rhs = 0.0;
};

/// minimize c'x subject to rows and 0 <= x <= upper (upper may be +inf).
struct DenseLP {
    int n = 0;
    Eigen::VectorXd c;
    Eigen::VectorXd upper;
    std::vector<LPRow> rows;

    explicit DenseLP(int n_vars = 0)
        : n(n_vars), c(Eigen::VectorXd::Zero(n_vars)),
          upper(Eigen::VectorXd::Constant(n_vars, std::numeric_limits<double>::infinity())) {}

    LPRow& add_row(RowSense sense, double rhs) {
        rows.push_back({Eigen::VectorXd::Zero(n), sense, rhs});
        return rows.back();
    }
};

enum class LPStatus { optimal, infeasible, unbounded };

struct LPResult {
    LPStatus status = LPStatus::infeasible;
    Eigen::VectorXd x;
    double objective = 0.0;
    int pivots = 0;
};

namespace detail {

// Tableau with the objective in the last row and rhs in the last column.
class Tableau {
public:
    Tableau(int rows, int cols) : T(Eigen::MatrixXd::Zero(rows + 1, cols + 1)), basis(static_cast<std::size_t>(rows)) {}

    Eigen::MatrixXd T;
    std::vector<int> basis;
    int pivots = 0;

    int m() const { return static_cast<int>(T.rows()) - 1; }
    int cols() const { return static_cast<int>(T.cols()) - 1; }

    void pivot(int r, int col) {
        T.row(r) /= T(r, col);
        for (int i = 0; i <= m(); ++i) {
            if (i == r) continue;
            const double f = T(i, col);
            if (f != 0.0) T.row(i) -= f * T.row(r);
        }
        basis[static_cast<std::size_t>(r)] = col;
        ++pivots;
    }

    // Bland's rule over columns in [0, allowed). Returns false if unbounded.
    bool optimize(int allowed, double eps) {
        const int rows = std::max(m(), 0);
        for (;;) {
            int enter = -1;
            for (int j = 0; j < allowed; ++j)
                if (T(rows, j) < -eps) {
                    enter = j;
                    break;
                }
            if (enter < 0) return true;
            int leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < rows; ++i) {
                if (T(i, enter) <= eps) continue;
                const double ratio = T(i, cols()) / T(i, enter);
                const bool tie = leave >= 0 && std::abs(ratio - best) <= 1e-12 &&
                                 basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)];
                if (leave < 0 || ratio < best - 1e-12 || tie) {
                    best = std::min(best, ratio);
                    leave = i;
                }
            }
            if (leave < 0) return false;
            pivot(leave, enter);
        }
    }
};

}  // namespace detail

/// Two-phase dense simplex with Bland's anti-cycling rule.
inline LPResult solve_lp(const DenseLP& lp, double eps = 1e-10) {
    std::vector<LPRow> rows = lp.rows;
    for (int j = 0; j < lp.n; ++j) {
        if (!std::isfinite(lp.upper[j])) continue;
        LPRow r{Eigen::VectorXd::Zero(lp.n), RowSense::le, lp.upper[j]};
        r.a[j] = 1.0;
        rows.push_back(std::move(r));
    }
    const int m = static_cast<int>(rows.size());
    for (auto& r : rows) {
        if (r.rhs < 0.0) {
            r.a = -r.a;
            r.rhs = -r.rhs;
            if (r.sense == RowSense::le)
                r.sense = RowSense::ge;
            else if (r.sense == RowSense::ge)
                r.sense = RowSense::le;
        }
    }
    int n_slack = 0, n_art = 0;
    for (const auto& r : rows) {
        if (r.sense != RowSense::eq) ++n_slack;
        if (r.sense != RowSense::le) ++n_art;
    }
    const int n_real = lp.n + n_slack;
    const int cols = n_real + n_art;
    detail::Tableau tab(m, cols);
    int s = lp.n, a = n_real;
    for (int i = 0; i < m; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        tab.T.row(i).head(lp.n) = r.a.transpose();
        tab.T(i, cols) = r.rhs;
        if (r.sense == RowSense::le) {
            tab.T(i, s) = 1.0;
            tab.basis[static_cast<std::size_t>(i)] = s++;
        } else {
            if (r.sense == RowSense::ge) tab.T(i, s++) = -1.0;
            tab.T(i, a) = 1.0;
            tab.basis[static_cast<std::size_t>(i)] = a++;
        }
    }

    LPResult res;
    if (n_art > 0) {
        // Phase I: minimize the sum of artificials.
        for (int i = 0; i < m; ++i)
            if (tab.basis[static_cast<std::size_t>(i)] >= n_real) tab.T.row(m) -= tab.T.row(i);
        for (int j = n_real; j < cols; ++j) tab.T(m, j) = 0.0;
        tab.optimize(cols, eps);
        if (-tab.T(m, cols) > 1e-8 * (1.0 + tab.T.col(cols).head(m).cwiseAbs().maxCoeff())) {
            res.status = LPStatus::infeasible;
            res.pivots = tab.pivots;
            return res;
        }
        // Drive remaining artificials out of the basis.
        for (int i = 0; i < m; ++i) {
            if (tab.basis[static_cast<std::size_t>(i)] < n_real) continue;
            for (int j = 0; j < n_real; ++j)
                if (std::abs(tab.T(i, j)) > 1e-9) {
                    tab.pivot(i, j);
                    break;
                }
        }
        for (int j = n_real; j < cols; ++j) tab.T.col(j).setZero();
    }

    tab.T.row(m).setZero();
    tab.T.row(m).head(lp.n) = lp.c.transpose();
    for (int i = 0; i < m; ++i) {
        const int b = tab.basis[static_cast<std::size_t>(i)];
        if (b < n_real && tab.T(m, b) != 0.0) tab.T.row(m) -= tab.T(m, b) * tab.T.row(i);
    }
    if (!tab.optimize(n_real, eps)) {
        res.status = LPStatus::unbounded;
        res.pivots = tab.pivots;
        return res;
    }
    res.status = LPStatus::optimal;
    res.x = Eigen::VectorXd::Zero(lp.n);
    for (int i = 0; i < m; ++i) {
        const int b = tab.basis[static_cast<std::size_t>(i)];
        if (b < lp.n) res.x[b] = std::max(0.0, tab.T(i, cols));
    }
    res.objective = lp.c.dot(res.x);
    res.pivots = tab.pivots;
    return res;
}

}  // namespace dercoord

#endif
