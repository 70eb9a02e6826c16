#ifndef DERCOORD_GLOBAL_CONTROLLER_HPP
#define DERCOORD_GLOBAL_CONTROLLER_HPP

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dercoord/barrier_solver.hpp"
#include "dercoord/demand_bounds.hpp"
#include "dercoord/errors.hpp"
#include "dercoord/linear_model.hpp"
#include "dercoord/network.hpp"
#include "dercoord/reactive_model.hpp"

namespace dercoord {

// One hour's box program, all quantities in p.u. Reactive maps are scaled
// accordingly (slope unchanged, intercept divided by the power base).
struct BoxProblem {
    Eigen::VectorXd p_demand_lower;
    Eigen::VectorXd p_demand_upper;
    std::vector<ReactiveLine> q_upper_map;
    std::vector<ReactiveLine> q_lower_map;
    SplitModel model;
    Eigen::VectorXd vmin;  // one entry per voltage row of the model
    Eigen::VectorXd vmax;
    Eigen::VectorXd tau_max;  // one entry per transformer

    Eigen::Index consumers() const { return p_demand_lower.size(); }
    Eigen::Index transformers() const { return tau_max.size(); }
};

/// Raises each upper reactive map where it would dip below the lower map
/// at either end of the node's demand range.
inline void repair_reactive_maps(BoxProblem& prob) {
    for (Eigen::Index i = 0; i < prob.consumers(); ++i) {
        auto& up = prob.q_upper_map[static_cast<std::size_t>(i)];
        const auto& lo = prob.q_lower_map[static_cast<std::size_t>(i)];
        const double gap = std::min(up(prob.p_demand_lower(i)) - lo(prob.p_demand_lower(i)),
                                    up(prob.p_demand_upper(i)) - lo(prob.p_demand_upper(i)));
        if (gap < 0.0) up.intercept -= gap;
    }
}

inline BoxProblem make_box_problem(const Network& net, const LinearPFModel& model, const ReactiveBoundModel& rmodel,
                                   const DemandBox& demand, int hour) {
    const double base = net.power_base_kw;
    const auto nc = static_cast<Eigen::Index>(net.consumer_count());
    const auto h = static_cast<std::size_t>(hour);
    if (static_cast<Eigen::Index>(demand.node_ids.size()) != nc || model.A.cols() != 2 * nc ||
        rmodel.node_count() != static_cast<std::size_t>(nc))
        throw std::invalid_argument("box problem dimensions do not match the network");
    BoxProblem prob;
    prob.p_demand_lower.resize(nc);
    prob.p_demand_upper.resize(nc);
    for (Eigen::Index i = 0; i < nc; ++i) {
        prob.p_demand_lower(i) = demand.lower[h][static_cast<std::size_t>(i)] / base;
        prob.p_demand_upper(i) = demand.upper[h][static_cast<std::size_t>(i)] / base;
        const auto& up = rmodel.upper[h][static_cast<std::size_t>(i)];
        const auto& lo = rmodel.lower[h][static_cast<std::size_t>(i)];
        prob.q_upper_map.push_back({up.slope, up.intercept / base});
        prob.q_lower_map.push_back({lo.slope, lo.intercept / base});
    }
    prob.model = split_pos_neg(model);
    prob.vmin.resize(model.A.rows());
    prob.vmax.resize(model.A.rows());
    for (Eigen::Index r = 0; r < model.A.rows(); ++r) {
        prob.vmin(r) = net.nodes[static_cast<std::size_t>(r)].vmin;
        prob.vmax(r) = net.nodes[static_cast<std::size_t>(r)].vmax;
    }
    prob.tau_max.resize(static_cast<Eigen::Index>(net.transformers.size()));
    for (std::size_t k = 0; k < net.transformers.size(); ++k)
        prob.tau_max(static_cast<Eigen::Index>(k)) = net.transformers[k].rating_sq;
    return prob;
}

// The upper and lower box vertices as affine functions of the decision
// vector x = (delta_upper, delta_lower, m_F, m_G):  s = s0 + S x.
struct BoxVertices {
    Eigen::VectorXd su0, sl0;
    Eigen::MatrixXd Su, Sl;
};

inline BoxVertices box_vertices(const BoxProblem& prob) {
    const Eigen::Index n = prob.consumers();
    const Eigen::Index nx = 2 * n + 2 * prob.transformers();
    BoxVertices bv;
    bv.su0 = Eigen::VectorXd::Zero(2 * n);
    bv.sl0 = Eigen::VectorXd::Zero(2 * n);
    bv.Su = Eigen::MatrixXd::Zero(2 * n, nx);
    bv.Sl = Eigen::MatrixXd::Zero(2 * n, nx);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double pud = prob.p_demand_upper(i), pld = prob.p_demand_lower(i), w = pud - pld;
        const auto& hu = prob.q_upper_map[static_cast<std::size_t>(i)];
        const auto& hl = prob.q_lower_map[static_cast<std::size_t>(i)];
        const double hu_pos = std::max(hu.slope, 0.0), hu_neg = std::min(hu.slope, 0.0);
        const double hl_pos = std::max(hl.slope, 0.0), hl_neg = std::min(hl.slope, 0.0);
        // p^u = pud - w du,  p^l = pld + w dl
        bv.su0(i) = pud;
        bv.Su(i, i) = -w;
        bv.sl0(i) = pld;
        bv.Sl(i, n + i) = w;
        // Worst-case reactive power over [p^l, p^u] under each map.
        bv.su0(n + i) = hu_pos * pud + hu_neg * pld + hu.intercept;
        bv.Su(n + i, i) = -hu_pos * w;
        bv.Su(n + i, n + i) = hu_neg * w;
        bv.sl0(n + i) = hl_pos * pld + hl_neg * pud + hl.intercept;
        bv.Sl(n + i, n + i) = hl_pos * w;
        bv.Sl(n + i, i) = -hl_neg * w;
    }
    return bv;
}

// Inequality system C x <= d plus channel discs; see build_vertex_constraints.
struct VertexConstraints {
    Eigen::MatrixXd C;
    Eigen::VectorXd d;
    std::vector<BarrierProblem::Disc> discs;
    std::vector<std::string> labels;  // one per row of C
};

inline constexpr double kStrictWidthMargin = 1e-9;

/// Vertex reformulation: voltage limits at the two extreme vertices, the
/// interval worst case of each transformer channel bounded by m_F, m_G, and
/// m_F^2 + m_G^2 <= tau_max, plus delta >= 0 and delta_u + delta_l < 1.
/// Rows whose coefficients all vanish are checked once and omitted; a
/// violated constant row makes the problem infeasible.
inline VertexConstraints build_vertex_constraints(const BoxProblem& prob) {
    const Eigen::Index n = prob.consumers();
    const Eigen::Index nt = prob.transformers();
    const Eigen::Index nx = 2 * n + 2 * nt;
    const auto& M = prob.model;
    const BoxVertices bv = box_vertices(prob);

    std::vector<Eigen::RowVectorXd> rows;
    std::vector<double> rhs;
    VertexConstraints vc;
    auto add = [&](const Eigen::RowVectorXd& row, double limit, std::string label) {
        if (row.cwiseAbs().maxCoeff() <= 1e-14) {
            if (limit < 0.0) throw Infeasible("constant constraint violated: " + label);
            return;
        }
        rows.push_back(row);
        rhs.push_back(limit);
        vc.labels.push_back(std::move(label));
    };

    const Eigen::MatrixXd vu_lin = M.A_pos * bv.Su + M.A_neg * bv.Sl;
    const Eigen::VectorXd vu_const = M.A_pos * bv.su0 + M.A_neg * bv.sl0 + M.a_pos + M.a_neg;
    const Eigen::MatrixXd vl_lin = M.A_pos * bv.Sl + M.A_neg * bv.Su;
    const Eigen::VectorXd vl_const = M.A_pos * bv.sl0 + M.A_neg * bv.su0 + M.a_pos + M.a_neg;
    for (Eigen::Index r = 0; r < M.A_pos.rows(); ++r) {
        add(vu_lin.row(r), prob.vmax(r) - vu_const(r), "vmax row " + std::to_string(r));
        add(-vl_lin.row(r), vl_const(r) - prob.vmin(r), "vmin row " + std::to_string(r));
    }

    auto channel = [&](const Eigen::MatrixXd& Pp, const Eigen::MatrixXd& Pn, const Eigen::VectorXd& cp,
                       const Eigen::VectorXd& cn, Eigen::Index offset, const char* name) {
        const Eigen::MatrixXd hi_lin = Pp * bv.Su + Pn * bv.Sl;
        const Eigen::VectorXd hi_const = Pp * bv.su0 + Pn * bv.sl0 + cp + cn;
        const Eigen::MatrixXd lo_lin = Pp * bv.Sl + Pn * bv.Su;
        const Eigen::VectorXd lo_const = Pp * bv.sl0 + Pn * bv.su0 + cp + cn;
        for (Eigen::Index k = 0; k < nt; ++k) {
            Eigen::RowVectorXd row = hi_lin.row(k);
            row(offset + k) -= 1.0;
            add(row, -hi_const(k), std::string(name) + " upper transformer " + std::to_string(k));
            row = -lo_lin.row(k);
            row(offset + k) -= 1.0;
            add(row, lo_const(k), std::string(name) + " lower transformer " + std::to_string(k));
        }
    };
    channel(M.F_pos, M.F_neg, M.f_pos, M.f_neg, 2 * n, "F");
    channel(M.G_pos, M.G_neg, M.g_pos, M.g_neg, 2 * n + nt, "G");

    for (Eigen::Index i = 0; i < 2 * n; ++i) {
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nx);
        row(i) = -1.0;
        add(row, 0.0, "delta >= 0, var " + std::to_string(i));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nx);
        row(i) = 1.0;
        row(n + i) = 1.0;
        add(row, 1.0 - kStrictWidthMargin, "width of consumer " + std::to_string(i));
    }

    vc.C.resize(static_cast<Eigen::Index>(rows.size()), nx);
    vc.d.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        vc.C.row(static_cast<Eigen::Index>(r)) = rows[r];
        vc.d(static_cast<Eigen::Index>(r)) = rhs[r];
    }
    for (Eigen::Index k = 0; k < nt; ++k)
        vc.discs.push_back({static_cast<int>(2 * n + k), static_cast<int>(2 * n + nt + k), prob.tau_max(k)});
    return vc;
}

// Worst-case linear-model quantities over the box [s^l, s^u].
struct VertexValues {
    Eigen::VectorXd v_upper;
    Eigen::VectorXd v_lower;
    Eigen::VectorXd f_abs_max;  // max |F s + f| over the box (interval bound)
    Eigen::VectorXd g_abs_max;
    Eigen::VectorXd tau_bound;  // f_abs_max^2 + g_abs_max^2
};

inline VertexValues evaluate_vertices(const SplitModel& M, const Eigen::VectorXd& s_upper,
                                      const Eigen::VectorXd& s_lower) {
    VertexValues vv;
    vv.v_upper = M.A_pos * s_upper + M.A_neg * s_lower + M.a_pos + M.a_neg;
    vv.v_lower = M.A_pos * s_lower + M.A_neg * s_upper + M.a_pos + M.a_neg;
    const Eigen::VectorXd fh = M.F_pos * s_upper + M.F_neg * s_lower + M.f_pos + M.f_neg;
    const Eigen::VectorXd fl = M.F_pos * s_lower + M.F_neg * s_upper + M.f_pos + M.f_neg;
    const Eigen::VectorXd gh = M.G_pos * s_upper + M.G_neg * s_lower + M.g_pos + M.g_neg;
    const Eigen::VectorXd gl = M.G_pos * s_lower + M.G_neg * s_upper + M.g_pos + M.g_neg;
    vv.f_abs_max = fh.cwiseMax(-fl);
    vv.g_abs_max = gh.cwiseMax(-gl);
    vv.tau_bound = vv.f_abs_max.array().square() + vv.g_abs_max.array().square();
    return vv;
}

// Box vertices (p.u.) for a given delta vector (length 2n).
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> vertices_at(const BoxProblem& prob, const Eigen::VectorXd& delta) {
    const BoxVertices bv = box_vertices(prob);
    const Eigen::Index n2 = 2 * prob.consumers();
    return {bv.su0 + bv.Su.leftCols(n2) * delta, bv.sl0 + bv.Sl.leftCols(n2) * delta};
}

inline bool box_feasible(const BoxProblem& prob, const Eigen::VectorXd& delta, double slack = 0.0) {
    const Eigen::Index n = prob.consumers();
    for (Eigen::Index i = 0; i < n; ++i)
        if (delta(i) < 0.0 || delta(n + i) < 0.0 || delta(i) + delta(n + i) > 1.0 - kStrictWidthMargin)
            return false;
    const auto [su, sl] = vertices_at(prob, delta);
    const auto vv = evaluate_vertices(prob.model, su, sl);
    return (vv.v_upper.array() <= prob.vmax.array() + slack).all() &&
           (vv.v_lower.array() >= prob.vmin.array() - slack).all() &&
           (vv.tau_bound.array() <= prob.tau_max.array() + slack).all();
}

// Solution of one hour's box program; powers in p.u.
struct HourSupply {
    Eigen::VectorXd delta_upper;
    Eigen::VectorXd delta_lower;
    Eigen::VectorXd p_upper;
    Eigen::VectorXd p_lower;
    Eigen::VectorXd q_upper;  // worst-case reactive bounds over the box
    Eigen::VectorXd q_lower;
    std::vector<ReactiveLine> q_upper_map;  // maps in effect after repair
    std::vector<ReactiveLine> q_lower_map;
    double objective = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
    bool fallback = false;
};

inline double box_objective(const Eigen::VectorXd& du, const Eigen::VectorXd& dl) {
    double f = 0.0;
    for (Eigen::Index i = 0; i < du.size(); ++i) f += std::log(1.0 - du(i) - dl(i));
    return f;
}

inline HourSupply supply_from_delta(const BoxProblem& prob, const Eigen::VectorXd& delta) {
    const Eigen::Index n = prob.consumers();
    HourSupply out;
    out.delta_upper = delta.head(n);
    out.delta_lower = delta.segment(n, n);
    const auto [su, sl] = vertices_at(prob, delta);
    out.p_upper = su.head(n);
    out.p_lower = sl.head(n);
    out.q_upper = su.tail(n);
    out.q_lower = sl.tail(n);
    out.q_upper_map = prob.q_upper_map;
    out.q_lower_map = prob.q_lower_map;
    out.objective = box_objective(out.delta_upper, out.delta_lower);
    return out;
}

/// Maximises sum log(1 - du - dl) over the vertex constraints with a
/// log-barrier method. Throws Infeasible when the feasible set has no
/// interior and SolverStall when Newton iterations run out.
inline HourSupply solve_supply_bounds(BoxProblem prob, double tol = 1e-6) {
    const Eigen::Index n = prob.consumers();
    const Eigen::Index nt = prob.transformers();
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(prob.p_demand_upper(i) > prob.p_demand_lower(i)))
            throw std::invalid_argument("degenerate demand box for consumer " + std::to_string(i));
    repair_reactive_maps(prob);
    const VertexConstraints vc = build_vertex_constraints(prob);

    BarrierProblem bp;
    bp.n = 2 * n + 2 * nt;
    bp.C = vc.C;
    bp.d = vc.d;
    bp.discs = vc.discs;
    bp.L = Eigen::MatrixXd::Zero(n, bp.n);
    for (Eigen::Index i = 0; i < n; ++i) bp.L(i, i) = bp.L(i, n + i) = 1.0;
    bp.b = Eigen::VectorXd::Ones(n);
    bp.w = Eigen::VectorXd::Ones(n);

    // Phase I from the centre of the width simplex, channel bounds at their
    // current worst case.
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(bp.n);
    x0.head(2 * n).setConstant(0.25);
    {
        const auto [su, sl] = vertices_at(prob, x0.head(2 * n));
        const auto vv = evaluate_vertices(prob.model, su, sl);
        x0.segment(2 * n, nt) = vv.f_abs_max.cwiseMax(0.0).array() + 1e-3;
        x0.segment(2 * n + nt, nt) = vv.g_abs_max.cwiseMax(0.0).array() + 1e-3;
    }
    BarrierOptions opt;
    opt.tol = tol;
    int p1_iters = 0;
    const auto start = phase_one(bp, x0, opt, &p1_iters);
    if (!start) throw Infeasible("supply box program has no strictly feasible point");
    BarrierResult res = barrier_solve(bp, *start, opt);

    Eigen::VectorXd delta = res.x.head(2 * n);
    // Widths at the barrier's resolution are zero at the optimum; snap them
    // when the exact box stays feasible.
    Eigen::VectorXd snapped = delta;
    for (Eigen::Index i = 0; i < 2 * n; ++i)
        if (snapped(i) < 10.0 * tol) snapped(i) = 0.0;
    if (snapped != delta && box_feasible(prob, snapped)) delta = snapped;
    delta = delta.cwiseMax(0.0);

    HourSupply out = supply_from_delta(prob, delta);
    out.kkt_residual = res.kkt_residual;
    out.iterations = res.iterations + p1_iters;
    return out;
}

// Demand box used as supply box, for hours whose program could not be solved.
inline HourSupply demand_as_supply(BoxProblem prob) {
    repair_reactive_maps(prob);
    HourSupply out = supply_from_delta(prob, Eigen::VectorXd::Zero(2 * prob.consumers()));
    out.fallback = true;
    return out;
}

struct DaySupply {
    std::vector<int> node_ids;
    double power_base_kw = 100.0;
    std::array<HourSupply, 24> hours;

    double p_upper_kw(int hour, std::size_t i) const {
        return hours[static_cast<std::size_t>(hour)].p_upper(static_cast<Eigen::Index>(i)) * power_base_kw;
    }
    double p_lower_kw(int hour, std::size_t i) const {
        return hours[static_cast<std::size_t>(hour)].p_lower(static_cast<Eigen::Index>(i)) * power_base_kw;
    }
    int fallback_hours() const {
        int k = 0;
        for (const auto& h : hours) k += h.fallback;
        return k;
    }
};

struct DayAheadOptions {
    double tol = 1e-6;
    bool fallback_to_demand = false;  // otherwise per-hour errors propagate
};

/// Independent box programs for the 24 hours of the next day.
inline DaySupply compute_day_ahead_bounds(const Network& net, const LinearPFModel& model,
                                          const ReactiveBoundModel& rmodel, const DemandBox& demand,
                                          const DayAheadOptions& opt = {}) {
    DaySupply day;
    day.node_ids = demand.node_ids;
    day.power_base_kw = net.power_base_kw;
    for (int h = 0; h < 24; ++h) {
        BoxProblem prob = make_box_problem(net, model, rmodel, demand, h);
        auto& slot = day.hours[static_cast<std::size_t>(h)];
        const std::string tag = "hour " + std::to_string(h) + ": ";
        try {
            slot = solve_supply_bounds(prob, opt.tol);
        } catch (const Infeasible& e) {
            if (!opt.fallback_to_demand) throw Infeasible(tag + e.what());
            slot = demand_as_supply(prob);
        } catch (const SolverStall& e) {
            if (!opt.fallback_to_demand) throw Error(tag + e.what());
            slot = demand_as_supply(prob);
        }
    }
    return day;
}

// Wire format sent to local controllers, keyed by node and hour (kW / kVAr).
inline void to_json(nlohmann::json& j, const DaySupply& day) {
    j = nlohmann::json{{"power_base_kw", day.power_base_kw}, {"hours", nlohmann::json::array()}};
    for (std::size_t h = 0; h < 24; ++h) {
        const auto& hs = day.hours[h];
        nlohmann::json nodes = nlohmann::json::array();
        for (std::size_t i = 0; i < day.node_ids.size(); ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            const double base = day.power_base_kw;
            nodes.push_back({{"node", day.node_ids[i]},
                             {"p_upper_kw", hs.p_upper(k) * base},
                             {"p_lower_kw", hs.p_lower(k) * base},
                             {"q_upper_kvar", hs.q_upper(k) * base},
                             {"q_lower_kvar", hs.q_lower(k) * base},
                             {"delta_upper", hs.delta_upper(k)},
                             {"delta_lower", hs.delta_lower(k)},
                             {"q_upper_map", ReactiveLine{hs.q_upper_map[i].slope, hs.q_upper_map[i].intercept * base}},
                             {"q_lower_map", ReactiveLine{hs.q_lower_map[i].slope, hs.q_lower_map[i].intercept * base}}});
        }
        j["hours"].push_back({{"hour", h},
                              {"fallback", hs.fallback},
                              {"objective", hs.objective},
                              {"kkt_residual", hs.kkt_residual},
                              {"iterations", hs.iterations},
                              {"nodes", nodes}});
    }
}

inline void from_json(const nlohmann::json& j, DaySupply& day) {
    day.power_base_kw = j.at("power_base_kw").get<double>();
    const double base = day.power_base_kw;
    const auto& hours = j.at("hours");
    if (hours.size() != 24) throw FormatError("supply box needs 24 hours");
    day.node_ids.clear();
    for (const auto& entry : hours) {
        const auto h = entry.at("hour").get<std::size_t>();
        if (h >= 24) throw FormatError("supply box hour out of range");
        auto& hs = day.hours[h];
        const auto& nodes = entry.at("nodes");
        const auto n = static_cast<Eigen::Index>(nodes.size());
        hs.delta_upper.resize(n);
        hs.delta_lower.resize(n);
        hs.p_upper.resize(n);
        hs.p_lower.resize(n);
        hs.q_upper.resize(n);
        hs.q_lower.resize(n);
        hs.q_upper_map.clear();
        hs.q_lower_map.clear();
        std::vector<int> ids;
        for (Eigen::Index k = 0; k < n; ++k) {
            const auto& nd = nodes[static_cast<std::size_t>(k)];
            ids.push_back(nd.at("node").get<int>());
            hs.p_upper(k) = nd.at("p_upper_kw").get<double>() / base;
            hs.p_lower(k) = nd.at("p_lower_kw").get<double>() / base;
            hs.q_upper(k) = nd.at("q_upper_kvar").get<double>() / base;
            hs.q_lower(k) = nd.at("q_lower_kvar").get<double>() / base;
            hs.delta_upper(k) = nd.at("delta_upper").get<double>();
            hs.delta_lower(k) = nd.at("delta_lower").get<double>();
            auto up = nd.at("q_upper_map").get<ReactiveLine>();
            auto lo = nd.at("q_lower_map").get<ReactiveLine>();
            hs.q_upper_map.push_back({up.slope, up.intercept / base});
            hs.q_lower_map.push_back({lo.slope, lo.intercept / base});
        }
        if (day.node_ids.empty()) day.node_ids = ids;
        else if (ids != day.node_ids) throw FormatError("supply box node lists differ between hours");
        hs.fallback = entry.at("fallback").get<bool>();
        hs.objective = entry.at("objective").get<double>();
        hs.kkt_residual = entry.at("kkt_residual").get<double>();
        hs.iterations = entry.at("iterations").get<int>();
    }
}

}  // namespace dercoord

#endif
