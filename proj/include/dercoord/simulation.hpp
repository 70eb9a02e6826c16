#ifndef DERCOORD_SIMULATION_HPP
#define DERCOORD_SIMULATION_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "dercoord/bookend.hpp"
#include "dercoord/demand_bounds.hpp"
#include "dercoord/der.hpp"
#include "dercoord/global_controller.hpp"
#include "dercoord/linear_model.hpp"
#include "dercoord/local_controller.hpp"
#include "dercoord/metrics.hpp"
#include "dercoord/powerflow.hpp"
#include "dercoord/reactive_model.hpp"
#include "dercoord/scenario.hpp"

namespace dercoord {

enum class ControllerKind { bounds, centralized, local };

NLOHMANN_JSON_SERIALIZE_ENUM(ControllerKind, {
    {ControllerKind::bounds, "bounds"},
    {ControllerKind::centralized, "centralized"},
    {ControllerKind::local, "local"},
})

inline std::string controller_name(ControllerKind k) { return nlohmann::json(k).get<std::string>(); }

// Accepts "central" as a short form of "centralized".
inline ControllerKind parse_controller(const std::string& s) {
    if (s == "bounds") return ControllerKind::bounds;
    if (s == "centralized" || s == "central") return ControllerKind::centralized;
    if (s == "local") return ControllerKind::local;
    throw std::invalid_argument("unknown controller: " + s);
}

struct RunConfig {
    // Scenario source: a scenario file, or a generated one.
    std::string scenario_path;
    std::string network_path;
    int consumers = 8;
    std::uint64_t seed = 1;
    std::optional<std::uint64_t> network_seed;  // defaults to seed
    ScenarioKnobs knobs{0.5, 0.2, 0.5, 0.3};
    std::string start_date = "2030-01-07";

    ControllerKind controller = ControllerKind::bounds;
    int days = 7;
    int warmup_days = 35;

    double gc_tol = 1e-6;
    double pf_tol = 1e-8;
    double ipm_tol = 1e-8;
    int fit_samples = 500;
    double discount = 0.8;
    LCWeights lc;
    CentralizedWeights centralized;

    std::string output_dir = "out";
    bool write_dispatch = true;

    // Days the scenario must cover: warm-up, simulated days and one day of
    // lookahead for the centralized horizon.
    int span_days() const { return warmup_days + days + 1; }

    void validate() const {
        if (!(gc_tol > 0.0 && pf_tol > 0.0 && ipm_tol > 0.0)) throw std::invalid_argument("tolerances must be positive");
        if (days < 1) throw std::invalid_argument("days must be at least 1");
        if (warmup_days < 7) throw std::invalid_argument("warm-up needs at least a week of history");
        if (fit_samples < 10) throw std::invalid_argument("fit_samples too small");
        if (!(discount > 0.0 && discount <= 1.0)) throw std::invalid_argument("discount must lie in (0, 1]");
        knobs.validate();
    }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = {{"scenario", c.scenario_path},
         {"network", c.network_path},
         {"consumers", c.consumers},
         {"seed", c.seed},
         {"knobs", c.knobs},
         {"start_date", c.start_date},
         {"controller", c.controller},
         {"days", c.days},
         {"warmup_days", c.warmup_days},
         {"tolerances", {{"gc", c.gc_tol}, {"pf", c.pf_tol}, {"ipm", c.ipm_tol}}},
         {"fit_samples", c.fit_samples},
         {"discount", c.discount},
         {"weights",
          {{"lambda_b", c.lc.lambda_b},
           {"lambda_f", c.lc.lambda_f},
           {"voltage", c.centralized.voltage},
           {"transformer", c.centralized.transformer},
           {"throughput", c.centralized.throughput},
           {"polygon_sides", c.centralized.polygon_sides}}},
         {"output_dir", c.output_dir},
         {"write_dispatch", c.write_dispatch}};
    if (c.network_seed) j["network_seed"] = *c.network_seed;
}

// Missing keys keep the values already in `c`, so a file layers over defaults.
inline void from_json(const nlohmann::json& j, RunConfig& c) {
    c.scenario_path = j.value("scenario", c.scenario_path);
    c.network_path = j.value("network", c.network_path);
    c.consumers = j.value("consumers", c.consumers);
    c.seed = j.value("seed", c.seed);
    if (j.contains("network_seed")) c.network_seed = j.at("network_seed").get<std::uint64_t>();
    if (j.contains("knobs")) {
        const auto& k = j.at("knobs");
        c.knobs.pv = k.value("pv", c.knobs.pv);
        c.knobs.ev = k.value("ev", c.knobs.ev);
        c.knobs.storage = k.value("storage", c.knobs.storage);
        c.knobs.phi = k.value("phi", c.knobs.phi);
    }
    c.start_date = j.value("start_date", c.start_date);
    if (j.contains("controller")) c.controller = parse_controller(j.at("controller").get<std::string>());
    c.days = j.value("days", c.days);
    c.warmup_days = j.value("warmup_days", c.warmup_days);
    if (j.contains("tolerances")) {
        const auto& t = j.at("tolerances");
        c.gc_tol = t.value("gc", c.gc_tol);
        c.pf_tol = t.value("pf", c.pf_tol);
        c.ipm_tol = t.value("ipm", c.ipm_tol);
    }
    c.fit_samples = j.value("fit_samples", c.fit_samples);
    c.discount = j.value("discount", c.discount);
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        c.lc.lambda_b = w.value("lambda_b", c.lc.lambda_b);
        c.lc.lambda_f = w.value("lambda_f", c.lc.lambda_f);
        c.centralized.voltage = w.value("voltage", c.centralized.voltage);
        c.centralized.transformer = w.value("transformer", c.centralized.transformer);
        c.centralized.throughput = w.value("throughput", c.centralized.throughput);
        c.centralized.polygon_sides = w.value("polygon_sides", c.centralized.polygon_sides);
    }
    c.output_dir = j.value("output_dir", c.output_dir);
    c.write_dispatch = j.value("write_dispatch", c.write_dispatch);
}

/// Builds the scenario named by the config (file, or generated from the seed).
inline Scenario make_run_scenario(const RunConfig& cfg) {
    Scenario sc;
    if (!cfg.scenario_path.empty()) {
        sc = load_scenario(cfg.scenario_path);
    } else {
        Network net;
        if (!cfg.network_path.empty()) {
            std::ifstream in(cfg.network_path);
            if (!in) throw FormatError("cannot open network file " + cfg.network_path);
            try {
                net = nlohmann::json::parse(in).get<Network>();
            } catch (const nlohmann::json::exception& e) {
                throw FormatError("network " + cfg.network_path + ": " + e.what());
            }
        } else {
            net = generate_radial_network(cfg.consumers, cfg.network_seed.value_or(cfg.seed));
        }
        sc = generate_scenario(net, cfg.knobs, cfg.seed, cfg.span_days(), parse_date(cfg.start_date));
    }
    if (sc.days() < cfg.span_days())
        throw std::invalid_argument("scenario covers " + std::to_string(sc.days()) + " days, run needs " +
                                    std::to_string(cfg.span_days()));
    if (const auto issues = validate_topology(sc.net); !issues.empty())
        throw std::invalid_argument("invalid network: " + issues.front());
    return sc;
}

// Per simulated day.
struct DayReport {
    int day = 0;  // index after the warm-up
    std::string date;
    std::vector<WindowFlag> voltage;      // per non-substation node
    std::vector<WindowFlag> transformer;  // per transformer
    double peak_kw = 0.0;
    double cost_billed = 0.0;
    double cost_undiscounted = 0.0;
    int hours_in_bounds = 0;
    int gc_fallback_hours = 0;
    int gc_iterations = 0;
    double bound_penalty = 0.0;  // LC hinge total
    int pf_iterations = 0;

    int voltage_flags() const {
        return static_cast<int>(std::count_if(voltage.begin(), voltage.end(), [](const WindowFlag& w) { return w.flag; }));
    }
    int overload_flags() const {
        return static_cast<int>(
            std::count_if(transformer.begin(), transformer.end(), [](const WindowFlag& w) { return w.flag; }));
    }
};

inline void to_json(nlohmann::json& j, const DayReport& d) {
    j = {{"day", d.day},
         {"date", d.date},
         {"voltage", d.voltage},
         {"transformer", d.transformer},
         {"peak_kw", d.peak_kw},
         {"cost_billed", d.cost_billed},
         {"cost_undiscounted", d.cost_undiscounted},
         {"hours_in_bounds", d.hours_in_bounds},
         {"gc_fallback_hours", d.gc_fallback_hours},
         {"gc_iterations", d.gc_iterations},
         {"bound_penalty", d.bound_penalty},
         {"pf_iterations", d.pf_iterations}};
}

inline void from_json(const nlohmann::json& j, DayReport& d) {
    j.at("day").get_to(d.day);
    j.at("date").get_to(d.date);
    j.at("voltage").get_to(d.voltage);
    j.at("transformer").get_to(d.transformer);
    j.at("peak_kw").get_to(d.peak_kw);
    j.at("cost_billed").get_to(d.cost_billed);
    j.at("cost_undiscounted").get_to(d.cost_undiscounted);
    d.hours_in_bounds = j.value("hours_in_bounds", 0);
    d.gc_fallback_hours = j.value("gc_fallback_hours", 0);
    d.gc_iterations = j.value("gc_iterations", 0);
    d.bound_penalty = j.value("bound_penalty", 0.0);
    d.pf_iterations = j.value("pf_iterations", 0);
}

// Whole-run figures compared across controllers.
struct RunSummary {
    double overload_pct = 0.0;  // flagged transformer-days, % of all transformer-days
    double voltage_pct = 0.0;   // flagged node-days, % of all node-days
    double peak_kw = 0.0;       // largest substation draw over the run
    double cost_billed = 0.0;
    double cost_undiscounted = 0.0;
    int gc_fallback_hours = 0;
    long long der_checks = 0;
    long long der_violations = 0;
};

inline void to_json(nlohmann::json& j, const RunSummary& s) {
    j = {{"overload_pct", s.overload_pct},
         {"voltage_pct", s.voltage_pct},
         {"peak_kw", s.peak_kw},
         {"cost_billed", s.cost_billed},
         {"cost_undiscounted", s.cost_undiscounted},
         {"gc_fallback_hours", s.gc_fallback_hours},
         {"der_checks", s.der_checks},
         {"der_violations", s.der_violations}};
}

inline void from_json(const nlohmann::json& j, RunSummary& s) {
    j.at("overload_pct").get_to(s.overload_pct);
    j.at("voltage_pct").get_to(s.voltage_pct);
    j.at("peak_kw").get_to(s.peak_kw);
    j.at("cost_billed").get_to(s.cost_billed);
    j.at("cost_undiscounted").get_to(s.cost_undiscounted);
    s.gc_fallback_hours = j.value("gc_fallback_hours", 0);
    s.der_checks = j.value("der_checks", 0LL);
    s.der_violations = j.value("der_violations", 0LL);
}

// One row per step and consumer.
struct DispatchRecord {
    int step = 0;
    int node_id = 0;
    double p_uncontrollable = 0.0;
    double charge = 0.0;     // total over the node's DERs
    double discharge = 0.0;
    double net_p = 0.0;
    double net_q = 0.0;
    double voltage = 0.0;
};

struct Timings {
    double warmup_s = 0.0;
    double fit_s = 0.0;
    double gc_s = 0.0;
    double dispatch_s = 0.0;
    double powerflow_s = 0.0;
    double total_s = 0.0;
};

inline void to_json(nlohmann::json& j, const Timings& t) {
    j = {{"warmup_s", t.warmup_s},   {"fit_s", t.fit_s},         {"gc_s", t.gc_s},
         {"dispatch_s", t.dispatch_s}, {"powerflow_s", t.powerflow_s}, {"total_s", t.total_s}};
}

struct SimulationReport {
    std::string controller;
    std::uint64_t seed = 0;
    int consumers = 0;
    int days = 0;
    std::string first_day;
    std::vector<DayReport> day_reports;
    RunSummary summary;
    std::vector<std::string> der_violation_samples;
    std::vector<DispatchRecord> dispatch;  // not part of report.json
    Timings timings;                       // wall-clock, kept out of report.json
};

inline void to_json(nlohmann::json& j, const SimulationReport& r) {
    j = {{"controller", r.controller}, {"seed", r.seed},       {"consumers", r.consumers},
         {"days", r.days},             {"first_day", r.first_day}, {"summary", r.summary},
         {"daily", r.day_reports},     {"der_violation_samples", r.der_violation_samples}};
}

inline void from_json(const nlohmann::json& j, SimulationReport& r) {
    j.at("controller").get_to(r.controller);
    j.at("seed").get_to(r.seed);
    j.at("consumers").get_to(r.consumers);
    j.at("days").get_to(r.days);
    j.at("first_day").get_to(r.first_day);
    j.at("summary").get_to(r.summary);
    j.at("daily").get_to(r.day_reports);
    r.der_violation_samples = j.value("der_violation_samples", std::vector<std::string>{});
}

/// Warm-up history and models shared by every controller run on one scenario.
struct PreparedRun {
    const Scenario* scenario = nullptr;
    RunConfig config;
    NodeProfiles uncontrollable;
    LoadHistory history;
    LinearPFModel model;
    ReactiveBoundModel reactive;
    DERFleet fleet;  // DER state at the end of the warm-up
    DerAudit audit;
    Timings timings;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Net power per consumer for one step, in kW.
struct StepInjection {
    std::vector<double> p, q, charge, discharge;
};

inline PFSolution solve_step(const RadialPowerFlow& pf, const StepInjection& inj, int step, double tol) {
    InjectionVector v;
    v.timestep = step;
    const double base = pf.network().power_base_kw;
    v.p.resize(inj.p.size());
    v.q.resize(inj.q.size());
    for (std::size_t i = 0; i < inj.p.size(); ++i) {
        v.p[i] = inj.p[i] / base;
        v.q[i] = inj.q[i] / base;
    }
    PFSolution sol = pf.solve(v, tol);
    if (!sol.converged) throw NonConvergence(sol.iterations, sol.max_residual);
    return sol;
}

inline Timestamp timestamp_of(const Scenario& sc, int step) {
    return {sc.date_of_step(step), (step % kStepsPerDay) * 15};
}

// Applies (c, d) after trimming to the hard limits and audits the move.
inline void commit(DerUnit& u, int step, double& c, double& d, double delta, DerAudit& audit) {
    clamp_to_envelope(u, step, delta, c, d);
    const DerUnit before = u;
    step_dynamics(u, step, c, d, delta);
    audit_transition(audit, before, u, step, c, d, delta);
}

}  // namespace detail

/// Runs the warm-up under the local heuristic with oracle power flow, then
/// fits the linear and reactive models once for the scenario.
inline PreparedRun prepare_run(const Scenario& sc, const RunConfig& cfg) {
    cfg.validate();
    const auto t_start = detail::Clock::now();
    PreparedRun pr;
    pr.scenario = &sc;
    pr.config = cfg;
    pr.uncontrollable = sc.uncontrollable();
    pr.fleet = sc.fleet;
    const auto nc = static_cast<std::size_t>(sc.consumers());
    const auto ids = sc.net.consumers();
    const RadialPowerFlow pf(sc.net);
    const double delta = sc.delta;

    std::vector<ReactiveSample> rsamples;
    std::vector<std::vector<double>> hist_p(nc), hist_q(nc);
    const int warm_steps = cfg.warmup_days * kStepsPerDay;
    detail::StepInjection inj{std::vector<double>(nc), std::vector<double>(nc), {}, {}};
    for (int step = 0; step < warm_steps; ++step) {
        for (std::size_t i = 0; i < nc; ++i) {
            double p = pr.uncontrollable.p[i][static_cast<std::size_t>(step)];
            double q = pr.uncontrollable.q[i][static_cast<std::size_t>(step)];
            for (auto& u : pr.fleet.nodes[i]) {
                auto [c, d] = local_heuristic_dispatch(u, sc.tariff, step, delta);
                detail::commit(u, step, c, d, delta, pr.audit);
                p += c - d;
                q += der_reactive(u, c);
            }
            inj.p[i] = p;
            inj.q[i] = q;
            pr.history.add_sample(ids[i], detail::timestamp_of(sc, step), p, q);
            rsamples.push_back({static_cast<int>(i), hour_of_step(step), p, q});
            hist_p[i].push_back(p / sc.net.power_base_kw);
            hist_q[i].push_back(q / sc.net.power_base_kw);
        }
        // The oracle confirms the warm-up trajectory is physically solvable.
        detail::solve_step(pf, inj, step, cfg.pf_tol);
    }
    pr.timings.warmup_s = detail::seconds_since(t_start);

    const auto t_fit = detail::Clock::now();
    // Training points around the observed operating range, widened by the
    // DER power each node could add or remove.
    std::vector<double> spread(nc);
    for (std::size_t i = 0; i < nc; ++i) {
        double der = 0.0;
        for (const auto& u : sc.fleet.nodes[i]) der += u.c_max + u.d_max;
        const auto [lo, hi] = std::minmax_element(hist_p[i].begin(), hist_p[i].end());
        spread[i] = std::max(0.5 * (*hi - *lo), der / sc.net.power_base_kw) + 1e-3;
    }
    const auto samples =
        solve_samples(pf, perturbed_profile_injections(hist_p, hist_q, spread, cfg.fit_samples, sc.seed ^ 0x5EEDULL));
    pr.model = fit_linear_model(samples);
    pr.reactive = fit_reactive_bounds(rsamples, nc);
    pr.timings.fit_s = detail::seconds_since(t_fit);
    return pr;
}

/// Simulates the configured days under one controller, continuing from the
/// prepared warm-up state.
inline SimulationReport simulate(const PreparedRun& pr, ControllerKind kind) {
    const Scenario& sc = *pr.scenario;
    const RunConfig& cfg = pr.config;
    const auto t_start = detail::Clock::now();
    const auto nc = static_cast<std::size_t>(sc.consumers());
    const auto ids = sc.net.consumers();
    const RadialPowerFlow pf(sc.net);
    const double delta = sc.delta;
    const double base = sc.net.power_base_kw;

    SimulationReport rep;
    rep.controller = controller_name(kind);
    rep.seed = sc.seed;
    rep.consumers = static_cast<int>(nc);
    rep.days = cfg.days;
    rep.first_day = format_date(sc.date_of_step(cfg.warmup_days * kStepsPerDay));
    rep.timings = pr.timings;

    DERFleet fleet = pr.fleet;
    DerAudit audit = pr.audit;
    LoadHistory history = pr.history;
    std::vector<LCState> lc(nc);
    std::vector<double> ratings;
    for (const auto& t : sc.net.transformers) ratings.push_back(std::sqrt(t.rating_sq));
    const auto node_count = static_cast<std::size_t>(sc.net.node_count());
    std::optional<IPMOptions> ipm;
    if (kind == ControllerKind::centralized) ipm = IPMOptions{cfg.ipm_tol, 200};

    long long flagged_tr = 0, flagged_v = 0;
    for (int day = 0; day < cfg.days; ++day) {
        const int day_start = (cfg.warmup_days + day) * kStepsPerDay;
        const Date date = sc.date_of_step(day_start);
        DayReport dr;
        dr.day = day;
        dr.date = format_date(date);
        const std::string ctx = "day " + dr.date;

        std::optional<DaySupply> supply;
        std::optional<CentralizedPlan> plan;
        try {
            const auto t_gc = detail::Clock::now();
            if (kind == ControllerKind::bounds) {
                const DemandBox demand = compute_demand_bounds(history, date, ids, {cfg.warmup_days, 1.0});
                supply = compute_day_ahead_bounds(sc.net, pr.model, pr.reactive, demand, {cfg.gc_tol, true});
                dr.gc_fallback_hours = supply->fallback_hours();
                for (const auto& h : supply->hours) dr.gc_iterations += h.iterations;
            } else if (kind == ControllerKind::centralized) {
                plan = centralized_dispatch(sc.net, pr.model, fleet, pr.uncontrollable, sc.tariff, day_start,
                                            2 * kStepsPerDay, delta, cfg.centralized, *ipm);
                dr.gc_iterations = plan->iterations;
            }
            rep.timings.gc_s += detail::seconds_since(t_gc);
        } catch (const Error& e) {
            throw Error(ctx + ": " + e.what());
        }

        std::vector<std::vector<double>> v_trace(node_count - 1), tau_trace(sc.net.transformers.size()),
            net_trace(nc);
        std::vector<double> sub_trace;
        std::vector<std::vector<HourBounds>> bounds(nc, std::vector<HourBounds>(24));
        detail::StepInjection inj{std::vector<double>(nc), std::vector<double>(nc), std::vector<double>(nc),
                                  std::vector<double>(nc)};
        for (int t = 0; t < kStepsPerDay; ++t) {
            const int step = day_start + t;
            const int hour = t / kStepsPerHour;
            const auto t_lc = detail::Clock::now();
            for (std::size_t i = 0; i < nc; ++i) {
                const double p_unc = pr.uncontrollable.p[i][static_cast<std::size_t>(step)];
                double q = pr.uncontrollable.q[i][static_cast<std::size_t>(step)];
                double p = p_unc, csum = 0.0, dsum = 0.0;
                auto& units = fleet.nodes[i];
                try {
                    if (kind == ControllerKind::bounds) {
                        if (t % kStepsPerHour == 0) {
                            const double up = supply->p_upper_kw(hour, i), lo = supply->p_lower_kw(hour, i);
                            lc[i].begin_hour(up, lo);
                            bounds[i][static_cast<std::size_t>(hour)] = {up, lo};
                        }
                        std::vector<DerUnit> before = units;
                        const DispatchResult r = dispatch_step(lc[i], units, p_unc, step, delta, sc.tariff, cfg.lc);
                        dr.bound_penalty += r.bound_penalty;
                        for (std::size_t k = 0; k < units.size(); ++k) {
                            audit_transition(audit, before[k], units[k], step, r.c[k], r.d[k], delta);
                            csum += r.c[k];
                            dsum += r.d[k];
                            q += der_reactive(units[k], r.c[k]);
                        }
                        p = r.net;
                    } else {
                        for (std::size_t k = 0; k < units.size(); ++k) {
                            double c = 0.0, d = 0.0;
                            if (kind == ControllerKind::local) {
                                std::tie(c, d) = local_heuristic_dispatch(units[k], sc.tariff, step, delta);
                            } else {
                                c = plan->c[i][k][static_cast<std::size_t>(t)];
                                d = plan->d[i][k][static_cast<std::size_t>(t)];
                            }
                            detail::commit(units[k], step, c, d, delta, audit);
                            csum += c;
                            dsum += d;
                            p += c - d;
                            q += der_reactive(units[k], c);
                        }
                    }
                } catch (const Error& e) {
                    throw Error(ctx + " step " + std::to_string(t) + " consumer " + std::to_string(ids[i]) + ": " +
                                e.what());
                }
                inj.p[i] = p;
                inj.q[i] = q;
                inj.charge[i] = csum;
                inj.discharge[i] = dsum;
                net_trace[i].push_back(p);
                history.add_sample(ids[i], detail::timestamp_of(sc, step), p, q);
            }
            rep.timings.dispatch_s += detail::seconds_since(t_lc);

            const auto t_pf = detail::Clock::now();
            PFSolution sol;
            try {
                sol = detail::solve_step(pf, inj, step, cfg.pf_tol);
            } catch (const Error& e) {
                throw Error(ctx + " step " + std::to_string(t) + ": " + e.what());
            }
            rep.timings.powerflow_s += detail::seconds_since(t_pf);
            dr.pf_iterations += sol.iterations;
            for (std::size_t n = 1; n < node_count; ++n) v_trace[n - 1].push_back(sol.voltage[n]);
            for (std::size_t k = 0; k < tau_trace.size(); ++k) tau_trace[k].push_back(sol.tau[k]);
            sub_trace.push_back(sol.substation_power.real() * base);
            if (cfg.write_dispatch)
                for (std::size_t i = 0; i < nc; ++i)
                    rep.dispatch.push_back({step, ids[i], pr.uncontrollable.p[i][static_cast<std::size_t>(step)],
                                            inj.charge[i], inj.discharge[i], inj.p[i], inj.q[i],
                                            sol.voltage[static_cast<std::size_t>(ids[i] - 1)]});
        }

        dr.voltage = voltage_violations(v_trace);
        dr.transformer = transformer_overloads(tau_trace, ratings);
        dr.peak_kw = peak_load(sub_trace);
        for (std::size_t i = 0; i < nc; ++i) {
            // Only consumers on the bounds programme can earn the discount.
            const double discount = kind == ControllerKind::bounds ? cfg.discount : 1.0;
            const auto& hb = kind == ControllerKind::bounds ? bounds[i] : std::vector<HourBounds>{};
            const NodeCost nc_cost = electricity_cost(net_trace[i], sc.tariff, hb, delta, day_start, discount);
            dr.cost_billed += nc_cost.billed;
            dr.cost_undiscounted += nc_cost.undiscounted;
            dr.hours_in_bounds += kind == ControllerKind::bounds ? nc_cost.hours_in_bounds : 0;
        }
        flagged_tr += dr.overload_flags();
        flagged_v += dr.voltage_flags();
        rep.summary.peak_kw = std::max(rep.summary.peak_kw, dr.peak_kw);
        rep.summary.cost_billed += dr.cost_billed;
        rep.summary.cost_undiscounted += dr.cost_undiscounted;
        rep.summary.gc_fallback_hours += dr.gc_fallback_hours;
        rep.day_reports.push_back(std::move(dr));
        history.prune_before(date - std::chrono::days{cfg.warmup_days});
    }
    rep.summary.overload_pct =
        100.0 * static_cast<double>(flagged_tr) / static_cast<double>(cfg.days * sc.net.transformers.size());
    rep.summary.voltage_pct = 100.0 * static_cast<double>(flagged_v) / static_cast<double>(cfg.days * (node_count - 1));
    rep.summary.der_checks = audit.checks;
    rep.summary.der_violations = audit.violations;
    rep.der_violation_samples = audit.samples;
    rep.timings.total_s = pr.timings.warmup_s + pr.timings.fit_s + detail::seconds_since(t_start);
    return rep;
}

inline SimulationReport run(const RunConfig& cfg) {
    const Scenario sc = make_run_scenario(cfg);
    return simulate(prepare_run(sc, cfg), cfg.controller);
}

// ---- output files --------------------------------------------------------

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline void write_violations_csv(std::ostream& out, const std::vector<SimulationReport>& reports) {
    out << "controller,seed,day,date,kind,element,flag,worst_pct\n";
    for (const auto& r : reports)
        for (const auto& d : r.day_reports) {
            for (std::size_t k = 0; k < d.voltage.size(); ++k)
                out << r.controller << ',' << r.seed << ',' << d.day << ',' << d.date << ",voltage," << k + 2 << ','
                    << (d.voltage[k].flag ? 1 : 0) << ',' << format_number(d.voltage[k].worst_pct) << '\n';
            for (std::size_t k = 0; k < d.transformer.size(); ++k)
                out << r.controller << ',' << r.seed << ',' << d.day << ',' << d.date << ",transformer," << k << ','
                    << (d.transformer[k].flag ? 1 : 0) << ',' << format_number(d.transformer[k].worst_pct) << '\n';
        }
}

inline void write_dispatch_csv(std::ostream& out, const SimulationReport& r) {
    out << "controller,step,node_id,p_uncontrollable_kw,charge_kw,discharge_kw,net_p_kw,net_q_kvar,voltage_pu\n";
    for (const auto& d : r.dispatch)
        out << r.controller << ',' << d.step << ',' << d.node_id << ',' << format_number(d.p_uncontrollable) << ','
            << format_number(d.charge) << ',' << format_number(d.discharge) << ',' << format_number(d.net_p) << ','
            << format_number(d.net_q) << ',' << format_number(d.voltage) << '\n';
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

/// Writes report.json, violations.csv, dispatch.csv and timings.json.
inline void write_run_outputs(const std::filesystem::path& dir, const std::vector<SimulationReport>& reports) {
    std::filesystem::create_directories(dir);
    nlohmann::json doc = reports.size() == 1 ? nlohmann::json(reports.front()) : nlohmann::json(reports);
    write_text(dir / "report.json", doc.dump(2) + "\n");
    std::ostringstream v, d;
    write_violations_csv(v, reports);
    write_text(dir / "violations.csv", v.str());
    for (std::size_t k = 0; k < reports.size(); ++k) {
        std::ostringstream one;
        write_dispatch_csv(one, reports[k]);
        std::string s = one.str();
        if (k > 0) s.erase(0, s.find('\n') + 1);  // one header only
        d << s;
    }
    write_text(dir / "dispatch.csv", d.str());
    nlohmann::json t = nlohmann::json::array();
    for (const auto& r : reports) t.push_back({{"controller", r.controller}, {"seed", r.seed}, {"timings", r.timings}});
    write_text(dir / "timings.json", t.dump(2) + "\n");
}

// ---- ensembles -----------------------------------------------------------

struct Stat {
    double mean = 0.0;
    double se = 0.0;
    int n = 0;
};

inline void to_json(nlohmann::json& j, const Stat& s) { j = {{"mean", s.mean}, {"se", s.se}, {"n", s.n}}; }

/// Mean and standard error (sample standard deviation over sqrt(n)).
inline Stat mean_se(const std::vector<double>& xs) {
    Stat s;
    s.n = static_cast<int>(xs.size());
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= s.n;
    if (s.n < 2) return s;
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / (s.n - 1)) / std::sqrt(static_cast<double>(s.n));
    return s;
}

struct ControllerStats {
    std::string controller;
    Stat overload_pct, voltage_pct, peak_kw, cost_billed, cost_undiscounted;
    long long der_violations = 0;
    int gc_fallback_hours = 0;
};

inline void to_json(nlohmann::json& j, const ControllerStats& c) {
    j = {{"controller", c.controller},          {"overload_pct", c.overload_pct},
         {"voltage_pct", c.voltage_pct},        {"peak_kw", c.peak_kw},
         {"cost_billed", c.cost_billed},        {"cost_undiscounted", c.cost_undiscounted},
         {"der_violations", c.der_violations},  {"gc_fallback_hours", c.gc_fallback_hours}};
}

inline ControllerStats aggregate_reports(const std::string& controller, const std::vector<SimulationReport>& reports) {
    ControllerStats cs;
    cs.controller = controller;
    std::vector<double> o, v, p, cb, cu;
    for (const auto& r : reports) {
        if (r.controller != controller) continue;
        o.push_back(r.summary.overload_pct);
        v.push_back(r.summary.voltage_pct);
        p.push_back(r.summary.peak_kw);
        cb.push_back(r.summary.cost_billed);
        cu.push_back(r.summary.cost_undiscounted);
        cs.der_violations += r.summary.der_violations;
        cs.gc_fallback_hours += r.summary.gc_fallback_hours;
    }
    cs.overload_pct = mean_se(o);
    cs.voltage_pct = mean_se(v);
    cs.peak_kw = mean_se(p);
    cs.cost_billed = mean_se(cb);
    cs.cost_undiscounted = mean_se(cu);
    return cs;
}

/// Runs every controller on every seed. Scenarios run concurrently on up to
/// `jobs` threads; results are ordered by seed then controller, so the
/// output does not depend on scheduling.
inline std::vector<SimulationReport> run_ensemble(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                                                  const std::vector<ControllerKind>& controllers, int jobs = 1) {
    if (seeds.empty()) throw std::invalid_argument("ensemble needs at least one seed");
    std::vector<std::vector<SimulationReport>> per_seed(seeds.size());
    std::vector<std::exception_ptr> errors(seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < seeds.size(); k = next++) {
            try {
                RunConfig cfg = base;
                cfg.seed = seeds[k];
                const Scenario sc = make_run_scenario(cfg);
                const PreparedRun pr = prepare_run(sc, cfg);
                for (ControllerKind c : controllers) per_seed[k].push_back(simulate(pr, c));
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const int n = std::clamp(jobs, 1, static_cast<int>(seeds.size()));
    std::vector<std::thread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<SimulationReport> out;
    for (auto& v : per_seed)
        for (auto& r : v) out.push_back(std::move(r));
    return out;
}

/// Side-by-side ensemble table, one row per controller.
inline void write_compare_csv(std::ostream& out, const std::vector<ControllerStats>& stats) {
    out << "controller,n,overload_pct_mean,overload_pct_se,voltage_pct_mean,voltage_pct_se,peak_kw_mean,peak_kw_se,"
           "cost_mean,cost_se,cost_undiscounted_mean,cost_undiscounted_se\n";
    for (const auto& s : stats)
        out << s.controller << ',' << s.overload_pct.n << ',' << format_number(s.overload_pct.mean) << ','
            << format_number(s.overload_pct.se) << ',' << format_number(s.voltage_pct.mean) << ','
            << format_number(s.voltage_pct.se) << ',' << format_number(s.peak_kw.mean) << ','
            << format_number(s.peak_kw.se) << ',' << format_number(s.cost_billed.mean) << ','
            << format_number(s.cost_billed.se) << ',' << format_number(s.cost_undiscounted.mean) << ','
            << format_number(s.cost_undiscounted.se) << '\n';
}

}  // namespace dercoord

#endif
