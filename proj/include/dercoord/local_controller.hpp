#ifndef DERCOORD_LOCAL_CONTROLLER_HPP
#define DERCOORD_LOCAL_CONTROLLER_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "dercoord/der.hpp"
#include "dercoord/errors.hpp"
#include "dercoord/simplex.hpp"
#include "dercoord/tariff.hpp"

namespace dercoord {

struct LCWeights {
    double lambda_b = 10.0;
    double lambda_f = 1.0;
};

inline int hour_of_step(int step) { return (step % kStepsPerDay) / kStepsPerHour; }

/// Bounds for the current hour and the running intra-hour credits.
/// eps_u = sum over earlier steps of (p_u - net), eps_l = sum of (net - p_l).
struct LCState {
    double p_upper = std::numeric_limits<double>::infinity();
    double p_lower = -std::numeric_limits<double>::infinity();
    double eps_u = 0.0;
    double eps_l = 0.0;

    void begin_hour(double upper, double lower) {
        p_upper = upper;
        p_lower = lower;
        eps_u = 0.0;
        eps_l = 0.0;
    }

    // Tightest net power that keeps the hourly means feasible.
    double step_upper() const { return p_upper + eps_u; }
    double step_lower() const { return p_lower - eps_l; }

    void record(double net) {
        if (std::isfinite(p_upper)) eps_u += p_upper - net;
        if (std::isfinite(p_lower)) eps_l += net - p_lower;
    }
};

/// Q^max in the 12 hours before the peak, Q^min during the peak, nothing otherwise.
inline std::optional<double> compute_target(const TouTariff& tariff, const DerUnit& unit, int step, double delta) {
    const int h = hour_of_step(step);
    const Envelope env = soc_envelope(unit, step, delta);
    if (tariff.period(h) == TariffPeriod::peak) return env.lo;
    if (tariff.pre_peak(h)) return env.hi;
    return std::nullopt;
}

struct DispatchResult {
    std::vector<double> c;
    std::vector<double> d;
    double net = 0.0;        // kW, p_uncontrollable + sum(c - d)
    double objective = 0.0;  // lambda_b L^b + sum lambda_f L^f
    double bound_penalty = 0.0;
};

namespace detail {

struct LCLayout {
    std::vector<int> c, d, f;  // -1 where absent
    int eu = -1, el = -1;
    int n = 0;
};

}  // namespace detail

/// Solves the single-step LP for one node, commits the DER transitions and
/// updates the hourly credits. Ties are broken by least total throughput.
inline DispatchResult dispatch_step(LCState& state, std::vector<DerUnit>& units, double p_uncontrollable, int step,
                                    double delta, const TouTariff& tariff, const LCWeights& w = {},
                                    double slack = 0.0) {
    const std::size_t K = units.size();
    detail::LCLayout lay;
    lay.c.assign(K, -1);
    lay.d.assign(K, -1);
    lay.f.assign(K, -1);
    std::vector<std::optional<double>> targets(K);
    for (std::size_t k = 0; k < K; ++k) {
        lay.c[k] = lay.n++;
        if (units[k].kind == DerKind::storage) lay.d[k] = lay.n++;
        targets[k] = compute_target(tariff, units[k], step, delta);
        if (targets[k]) lay.f[k] = lay.n++;
    }
    const bool has_u = std::isfinite(state.p_upper), has_l = std::isfinite(state.p_lower);
    if (has_u) lay.eu = lay.n++;
    if (has_l) lay.el = lay.n++;

    DenseLP lp(lay.n);
    for (std::size_t k = 0; k < K; ++k) {
        const DerUnit& u = units[k];
        lp.upper[lay.c[k]] = charge_limit(u, step);
        if (lay.d[k] >= 0) lp.upper[lay.d[k]] = discharge_limit(u);
        const double q0 = state_before(u, step);
        const Envelope env = soc_envelope(u, step, delta);
        auto state_row = [&](RowSense sense, double rhs) -> LPRow& {
            LPRow& r = lp.add_row(sense, rhs);
            r.a[lay.c[k]] = u.eta_c * delta;
            if (lay.d[k] >= 0) r.a[lay.d[k]] = -u.eta_d * delta;
            return r;
        };
        state_row(RowSense::le, env.hi - q0 + slack);
        state_row(RowSense::ge, env.lo - q0 - slack);
        if (targets[k]) {
            // f >= |q0 + dq - target|
            state_row(RowSense::le, *targets[k] - q0).a[lay.f[k]] = -1.0;
            state_row(RowSense::ge, *targets[k] - q0).a[lay.f[k]] = 1.0;
            lp.c[lay.f[k]] = w.lambda_f;
        }
    }
    auto net_row = [&](RowSense sense, double rhs, double sign) -> LPRow& {
        LPRow& r = lp.add_row(sense, rhs);
        for (std::size_t k = 0; k < K; ++k) {
            r.a[lay.c[k]] = sign;
            if (lay.d[k] >= 0) r.a[lay.d[k]] = -sign;
        }
        return r;
    };
    if (has_u) {
        // e_u >= p + sum(c - d) - p_u - eps_u
        net_row(RowSense::le, state.step_upper() - p_uncontrollable, 1.0).a[lay.eu] = -1.0;
        lp.c[lay.eu] = w.lambda_b;
    }
    if (has_l) {
        // e_l >= p_l - eps_l - p - sum(c - d)
        net_row(RowSense::ge, state.step_lower() - p_uncontrollable, 1.0).a[lay.el] = 1.0;
        lp.c[lay.el] = w.lambda_b;
    }

    LPResult first = solve_lp(lp);
    if (first.status != LPStatus::optimal) {
        // Round-off can leave an envelope a hair out of reach; retry once with a tolerance.
        if (slack == 0.0) return dispatch_step(state, units, p_uncontrollable, step, delta, tariff, w, 0.5 * kEnvelopeTol);
        throw InfeasibleDispatch("local dispatch infeasible at step " + std::to_string(step));
    }

    // Secondary objective: least throughput among optimal dispatches.
    DenseLP lex = lp;
    LPRow& cap = lex.add_row(RowSense::le, first.objective + 1e-12 * (1.0 + std::abs(first.objective)));
    cap.a = lp.c;
    lex.c.setZero();
    for (std::size_t k = 0; k < K; ++k) {
        lex.c[lay.c[k]] = 1.0;
        if (lay.d[k] >= 0) lex.c[lay.d[k]] = 1.0;
    }
    LPResult second = solve_lp(lex);
    const LPResult& sol = second.status == LPStatus::optimal ? second : first;

    DispatchResult out;
    out.c.assign(K, 0.0);
    out.d.assign(K, 0.0);
    out.net = p_uncontrollable;
    for (std::size_t k = 0; k < K; ++k) {
        out.c[k] = std::min(sol.x[lay.c[k]], charge_limit(units[k], step));
        if (lay.d[k] >= 0) out.d[k] = std::min(sol.x[lay.d[k]], discharge_limit(units[k]));
        step_dynamics(units[k], step, out.c[k], out.d[k], delta);
        out.net += out.c[k] - out.d[k];
    }
    if (has_u) out.bound_penalty += std::max(0.0, out.net - state.step_upper());
    if (has_l) out.bound_penalty += std::max(0.0, state.step_lower() - out.net);
    out.objective = w.lambda_b * out.bound_penalty;
    for (std::size_t k = 0; k < K; ++k)
        if (targets[k]) out.objective += w.lambda_f * std::abs(units[k].soc - *targets[k]);
    state.record(out.net);
    return out;
}

// Mean net injection over the hour lies within [p_l, p_u].
inline bool hourly_average_respected(const std::vector<double>& nets, double p_upper, double p_lower,
                                     double tol = 1e-9) {
    if (nets.empty()) return true;
    double mean = 0.0;
    for (double v : nets) mean += v;
    mean /= static_cast<double>(nets.size());
    return mean <= p_upper + tol && mean >= p_lower - tol;
}

}  // namespace dercoord

#endif
