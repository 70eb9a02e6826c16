#ifndef DERCOORD_BOOKEND_HPP
#define DERCOORD_BOOKEND_HPP

#include <cmath>
#include <numbers>
#include <vector>

#include "dercoord/der.hpp"
#include "dercoord/errors.hpp"
#include "dercoord/linear_model.hpp"
#include "dercoord/local_controller.hpp"
#include "dercoord/network.hpp"
#include "dercoord/sparse_lp.hpp"
#include "dercoord/tariff.hpp"

namespace dercoord {

/// Greedy cost-minimizing rule: fill storage, EVs and thermal load during
/// off-peak hours, empty storage during the peak, otherwise do only what the
/// envelope forces (EV deadlines, thermal end-of-day energy).
inline std::pair<double, double> local_heuristic_dispatch(const DerUnit& unit, const TouTariff& tariff, int step,
                                                          double delta) {
    const TariffPeriod period = tariff.period(hour_of_step(step));
    double c = 0.0, d = 0.0;
    if (period == TariffPeriod::off_peak) c = unit.c_max;
    if (period == TariffPeriod::peak && unit.kind == DerKind::storage) d = unit.d_max;
    clamp_to_envelope(unit, step, delta, c, d);
    return {c, d};
}

// Uncontrollable injections per consumer (kW), indexed by absolute step.
struct NodeProfiles {
    std::vector<std::vector<double>> p;
    std::vector<std::vector<double>> q;

    std::size_t steps() const { return p.empty() ? 0 : p.front().size(); }
};

struct CentralizedWeights {
    double voltage = 1000.0;     // $ per p.u. outside limits per step
    double transformer = 1.0;    // $ per kVA above rating per step
    double throughput = 0.01;    // $ per kWh of storage charge plus discharge
    int polygon_sides = 8;       // apparent-power outer polygon
};

struct CentralizedPlan {
    int start = 0;
    int steps = 0;
    // [consumer][unit][step - start]
    std::vector<std::vector<std::vector<double>>> c, d;
    double energy_cost = 0.0;
    double voltage_penalty = 0.0;
    double transformer_penalty = 0.0;
    double throughput_cost = 0.0;
    double objective = 0.0;
    int iterations = 0;
};

namespace detail {

inline bool voltage_row_constant(const LinearPFModel& m, Eigen::Index r) {
    return m.A.row(r).cwiseAbs().maxCoeff() <= 1e-14;
}

}  // namespace detail

/// One LP over [start, start + steps) with perfect knowledge of the loads:
/// TOU energy cost, hinge penalties on linear-model voltage deviation and on
/// transformer apparent power above rating (outer polygon), and a small
/// storage throughput cost. DER dynamics and envelopes are hard constraints.
inline CentralizedPlan centralized_dispatch(const Network& net, const LinearPFModel& model, const DERFleet& fleet,
                                            const NodeProfiles& loads, const TouTariff& tariff, int start, int steps,
                                            double delta, const CentralizedWeights& w = {},
                                            const IPMOptions& ipm = {}) {
    const double base = net.power_base_kw;
    const auto nc = fleet.nodes.size();
    if (static_cast<Eigen::Index>(2 * nc) != model.A.cols() || loads.p.size() != nc)
        throw std::invalid_argument("centralized dispatch dimensions do not match");
    if (static_cast<std::size_t>(start + steps) > loads.steps())
        throw std::invalid_argument("load profiles do not cover the horizon");

    CentralizedPlan plan;
    plan.start = start;
    plan.steps = steps;
    plan.c.resize(nc);
    plan.d.resize(nc);

    SparseLPBuilder lp;
    // Variable indices per [consumer][unit][t], -1 when absent.
    std::vector<std::vector<std::vector<int>>> cv(nc), dv(nc);
    for (std::size_t i = 0; i < nc; ++i) {
        const auto& units = fleet.nodes[i];
        cv[i].assign(units.size(), std::vector<int>(static_cast<std::size_t>(steps), -1));
        dv[i] = cv[i];
        plan.c[i].assign(units.size(), std::vector<double>(static_cast<std::size_t>(steps), 0.0));
        plan.d[i] = plan.c[i];
        for (std::size_t k = 0; k < units.size(); ++k) {
            const DerUnit& u = units[k];
            int prev_q = -1;
            for (int t = 0; t < steps; ++t) {
                const int step = start + t;
                const auto ts = static_cast<std::size_t>(t);
                const double rate = tariff.rate(hour_of_step(step));
                const double climit = charge_limit(u, step), dlimit = discharge_limit(u);
                const Envelope env = soc_envelope(u, step, delta);
                if (env.lo > env.hi + 1e-9)
                    throw InfeasibleHorizon("empty DER envelope at step " + std::to_string(step));
                const double throughput = u.kind == DerKind::storage ? w.throughput * delta : 0.0;
                if (climit > 0.0) cv[i][k][ts] = lp.add_var(0.0, climit, rate * delta + throughput);
                if (dlimit > 0.0) dv[i][k][ts] = lp.add_var(0.0, dlimit, -rate * delta + throughput);
                const bool reset = (u.kind == DerKind::thermal && step % kStepsPerDay == 0) ||
                                   (u.kind == DerKind::ev && (!u.window_at(step) || u.window_at(step)->start == step));
                const int q = lp.add_var(env.lo, std::max(env.lo, env.hi), 0.0);
                std::vector<std::pair<int, double>> terms{{q, 1.0}};
                if (cv[i][k][ts] >= 0) terms.emplace_back(cv[i][k][ts], -u.eta_c * delta);
                if (dv[i][k][ts] >= 0) terms.emplace_back(dv[i][k][ts], u.eta_d * delta);
                double rhs = 0.0;
                if (!reset) {
                    if (t == 0)
                        rhs = state_before(u, step);
                    else
                        terms.emplace_back(prev_q, -1.0);
                }
                lp.add_row(terms, RowSense::eq, rhs);
                prev_q = q;
            }
        }
    }

    // Auxiliary per-step variables keep the network rows short: controllable
    // injection of each consumer (p.u.) and transformer flow (kW, kVAr). Their
    // bounds are the implied interval ranges plus a margin, so the shift to
    // zero lower bounds stays well scaled.
    struct Aux {
        int var = -1;
        double lo = 0.0, hi = 0.0;
    };
    auto aux_injection = [&](std::size_t i, int t, bool reactive) {
        std::vector<std::pair<int, double>> terms;
        const auto ts = static_cast<std::size_t>(t);
        const int step = start + t;
        Aux a;
        for (std::size_t k = 0; k < fleet.nodes[i].size(); ++k) {
            const DerUnit& u = fleet.nodes[i][k];
            if (reactive) {
                if (u.kind == DerKind::thermal && cv[i][k][ts] >= 0) {
                    terms.emplace_back(cv[i][k][ts], kThermalReactiveRatio / base);
                    a.hi += kThermalReactiveRatio * charge_limit(u, step) / base;
                }
                continue;
            }
            if (cv[i][k][ts] >= 0) {
                terms.emplace_back(cv[i][k][ts], 1.0 / base);
                a.hi += charge_limit(u, step) / base;
            }
            if (dv[i][k][ts] >= 0) {
                terms.emplace_back(dv[i][k][ts], -1.0 / base);
                a.lo -= discharge_limit(u) / base;
            }
        }
        if (terms.empty()) return a;
        a.lo -= 1e-3;
        a.hi += 1e-3;
        a.var = lp.add_var(a.lo, a.hi, 0.0);
        terms.emplace_back(a.var, -1.0);
        lp.add_row(terms, RowSense::eq, 0.0);
        return a;
    };

    std::vector<int> vpen, tpen;
    const auto nrows = model.A.rows();
    for (int t = 0; t < steps; ++t) {
        const auto step = static_cast<std::size_t>(start + t);
        std::vector<Aux> xp(nc), xq(nc);
        Eigen::VectorXd s_unc(static_cast<Eigen::Index>(2 * nc));
        for (std::size_t i = 0; i < nc; ++i) {
            xp[i] = aux_injection(i, t, false);
            xq[i] = aux_injection(i, t, true);
            s_unc(static_cast<Eigen::Index>(i)) = loads.p[i][step] / base;
            s_unc(static_cast<Eigen::Index>(nc + i)) = loads.q[i][step] / base;
        }
        // row . s over the controllable part, scaled.
        auto map_terms = [&](const Eigen::RowVectorXd& row, double scale) {
            std::vector<std::pair<int, double>> terms;
            for (std::size_t i = 0; i < nc; ++i) {
                if (xp[i].var >= 0) terms.emplace_back(xp[i].var, scale * row(static_cast<Eigen::Index>(i)));
                if (xq[i].var >= 0) terms.emplace_back(xq[i].var, scale * row(static_cast<Eigen::Index>(nc + i)));
            }
            return terms;
        };
        // Interval range of row . s over the auxiliary boxes, scaled, plus one unit of margin.
        auto map_range = [&](const Eigen::RowVectorXd& row, double scale, double constant) {
            double lo = constant, hi = constant;
            for (std::size_t i = 0; i < nc; ++i)
                for (const auto& [a, coef] : {std::pair{xp[i], row(static_cast<Eigen::Index>(i))},
                                              std::pair{xq[i], row(static_cast<Eigen::Index>(nc + i))}}) {
                    if (a.var < 0) continue;
                    const double c1 = scale * coef * a.lo, c2 = scale * coef * a.hi;
                    lo += std::min(c1, c2);
                    hi += std::max(c1, c2);
                }
            return std::pair{lo - 1.0, hi + 1.0};
        };
        for (Eigen::Index r = 0; r < nrows; ++r) {
            if (detail::voltage_row_constant(model, r)) continue;
            const Node& node = net.nodes[static_cast<std::size_t>(r)];
            const double v0 = model.A.row(r).dot(s_unc) + model.a(r);
            auto up = map_terms(model.A.row(r), 1.0);
            if (up.empty()) {
                // Nothing controllable moves this voltage.
                continue;
            }
            auto dn = map_terms(model.A.row(r), -1.0);
            // Finite ranges for the hinge and slack columns keep the interior start well scaled.
            auto [vlo, vhi] = map_range(model.A.row(r), 1.0, v0);
            vlo += 0.99;
            vhi -= 0.99;
            const double eu_hi = std::max(0.0, vhi - node.vmax) + 0.01, el_hi = std::max(0.0, node.vmin - vlo) + 0.01;
            const int eu = lp.add_var(0.0, eu_hi, w.voltage);
            const int el = lp.add_var(0.0, el_hi, w.voltage);
            vpen.push_back(eu);
            vpen.push_back(el);
            up.emplace_back(eu, -1.0);
            dn.emplace_back(el, -1.0);
            lp.add_row(up, RowSense::le, node.vmax - v0, node.vmax - vlo + eu_hi + 0.01);
            lp.add_row(dn, RowSense::le, v0 - node.vmin, vhi - node.vmin + el_hi + 0.01);
        }
        for (Eigen::Index k = 0; k < model.F.rows(); ++k) {
            const double rating = net.transformers[static_cast<std::size_t>(k)].rating() * base;
            auto pt = map_terms(model.F.row(k), base);
            auto qt = map_terms(model.G.row(k), base);
            if (pt.empty() && qt.empty()) continue;
            const double p0 = base * (model.F.row(k).dot(s_unc) + model.f(k));
            const double q0 = base * (model.G.row(k).dot(s_unc) + model.g(k));
            const auto [plo, phi] = map_range(model.F.row(k), base, p0);
            const auto [qlo, qhi] = map_range(model.G.row(k), base, q0);
            const int P = lp.add_var(plo, phi, 0.0), Q = lp.add_var(qlo, qhi, 0.0);
            pt.emplace_back(P, -1.0);
            qt.emplace_back(Q, -1.0);
            lp.add_row(pt, RowSense::eq, -p0);
            lp.add_row(qt, RowSense::eq, -q0);
            const double pmax = std::max(std::abs(plo), std::abs(phi)), qmax = std::max(std::abs(qlo), std::abs(qhi));
            const double e_hi = std::max(0.0, std::hypot(pmax, qmax) - rating) + 1.0;
            const int e = lp.add_var(0.0, e_hi, w.transformer);
            tpen.push_back(e);
            for (int j = 0; j < w.polygon_sides; ++j) {
                const double th = 2.0 * std::numbers::pi * j / w.polygon_sides;
                lp.add_row({{P, std::cos(th)}, {Q, std::sin(th)}, {e, -1.0}}, RowSense::le, rating,
                           rating + e_hi + pmax + qmax + 1.0);
            }
        }
    }

    IPMResult sol;
    try {
        sol = solve_sparse_lp(lp, ipm);
    } catch (const SolverStall& e) {
        throw InfeasibleHorizon(std::string("centralized horizon LP failed: ") + e.what());
    }
    plan.iterations = sol.iterations;
    for (std::size_t i = 0; i < nc; ++i)
        for (std::size_t k = 0; k < fleet.nodes[i].size(); ++k)
            for (int t = 0; t < steps; ++t) {
                const auto ts = static_cast<std::size_t>(t);
                const int step = start + t;
                const double rate = tariff.rate(hour_of_step(step));
                double c = cv[i][k][ts] >= 0 ? sol.x[cv[i][k][ts]] : 0.0;
                double d = dv[i][k][ts] >= 0 ? sol.x[dv[i][k][ts]] : 0.0;
                // Interior points leave simultaneous charge and discharge of order tol.
                const double both = std::min(c, d);
                c = std::max(0.0, c - both);
                d = std::max(0.0, d - both);
                plan.c[i][k][ts] = c;
                plan.d[i][k][ts] = d;
                plan.energy_cost += rate * delta * (c - d);
                if (fleet.nodes[i][k].kind == DerKind::storage) plan.throughput_cost += w.throughput * delta * (c + d);
            }
    for (int j : vpen) plan.voltage_penalty += w.voltage * sol.x[j];
    for (int j : tpen) plan.transformer_penalty += w.transformer * sol.x[j];
    plan.objective = sol.objective;
    return plan;
}

}  // namespace dercoord

#endif
