// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <array>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dercoord/simulation.hpp"
#include "support/box_oracle.hpp"

using namespace dercoord;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// DER checks and violations seen by every simulated trajectory in this run.
long long g_der_checks = 0, g_der_violations = 0;

void tally(const SimulationReport& r) {
    g_der_checks += r.summary.der_checks;
    g_der_violations += r.summary.der_violations;
}

// ---- 1: every injection inside the supply box meets the linear-model limits

Outcome soundness() {
    const auto t0 = Clock::now();
    long long hours = 0, fallback = 0, samples = 0, bad = 0;
    double worst_v = -1e9, worst_t = -1e9;  // largest limit excess seen (<= 0 is fine)
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        RunConfig cfg;
        cfg.seed = seed;
        cfg.consumers = 8 + static_cast<int>((seed - 1) % 9);
        cfg.days = 1;
        const Scenario sc = make_run_scenario(cfg);
        const PreparedRun pr = prepare_run(sc, cfg);
        g_der_checks += pr.audit.checks;
        g_der_violations += pr.audit.violations;
        const Date day = sc.date_of_step(cfg.warmup_days * kStepsPerDay);
        const DemandBox demand = compute_demand_bounds(pr.history, day, sc.net.consumers(), {cfg.warmup_days, 1.0});
        const DaySupply supply = compute_day_ahead_bounds(sc.net, pr.model, pr.reactive, demand, {cfg.gc_tol, true});
        const auto n = static_cast<Eigen::Index>(sc.net.consumers().size());
        Rng rng(seed * 7919 + 1);
        Eigen::VectorXd s(2 * n);
        for (const HourSupply& h : supply.hours) {
            if (h.fallback) {
                ++fallback;
                continue;
            }
            ++hours;
            for (int k = 0; k < 10000; ++k) {
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double p = rng.uniform(h.p_lower(i), h.p_upper(i));
                    const double qa = h.q_lower_map[static_cast<std::size_t>(i)](p);
                    const double qb = h.q_upper_map[static_cast<std::size_t>(i)](p);
                    s(i) = p;
                    s(n + i) = rng.uniform(std::min(qa, qb), std::max(qa, qb));
                }
                const Eigen::VectorXd v = pr.model.voltage(s);
                const Eigen::VectorXd tau = pr.model.tau(s);
                bool ok = true;
                for (Eigen::Index r = 0; r < v.size(); ++r) {
                    const Node& node = sc.net.nodes[static_cast<std::size_t>(r)];
                    const double excess = std::max(v(r) - node.vmax, node.vmin - v(r));
                    worst_v = std::max(worst_v, excess);
                    ok = ok && excess <= 1e-9;
                }
                for (Eigen::Index t = 0; t < tau.size(); ++t) {
                    const double rating_sq = sc.net.transformers[static_cast<std::size_t>(t)].rating_sq;
                    const double excess = (tau(t) - rating_sq) / rating_sq;
                    worst_t = std::max(worst_t, excess);
                    ok = ok && excess <= 1e-9;
                }
                ++samples;
                bad += ok ? 0 : 1;
            }
        }
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = bad == 0 && hours > 0 && secs < 120.0;
    o.detail = fmt("%lld solved hours (%lld fallback), %lld samples, %lld outside limits, worst voltage excess %.3g p.u., "
                   "worst loading excess %.3g, %.1f s",
                   hours, fallback, samples, bad, worst_v, worst_t, secs);
    return o;
}

// ---- 2: box program against exhaustive grid search

Outcome optimality() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto inst = oracle::shared_cap_instance(seed);
        const auto sol = solve_supply_bounds(inst.prob);
        const auto grid = oracle::GridBox(inst.prob, inst.model, 1e-3).search();
        worst = std::max(worst, std::abs(sol.objective - grid.objective));
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-3 && secs < 60.0, fmt("worst |objective - grid| %.3g over 10 instances, %.1f s", worst, secs)};
}

// ---- 3, 4, 5: controller ensemble

struct EnsembleResult {
    ControllerStats bounds, centralized, local;
    double seconds = 0.0;
};

EnsembleResult ensemble() {
    const auto t0 = Clock::now();
    RunConfig base;
    base.consumers = 8;
    base.network_seed = 1;
    base.days = 14;
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 1; s <= 16; ++s) seeds.push_back(s);
    const int jobs = std::max(1u, std::thread::hardware_concurrency());
    const auto reports = run_ensemble(base, seeds,
                                      {ControllerKind::bounds, ControllerKind::centralized, ControllerKind::local}, jobs);
    for (const auto& r : reports) tally(r);
    EnsembleResult e;
    e.bounds = aggregate_reports("bounds", reports);
    e.centralized = aggregate_reports("centralized", reports);
    e.local = aggregate_reports("local", reports);
    e.seconds = seconds_since(t0);
    return e;
}

Outcome ordering(const EnsembleResult& e) {
    const double c = e.centralized.overload_pct.mean, b = e.bounds.overload_pct.mean, l = e.local.overload_pct.mean;
    const double share = l > c ? (l - b) / (l - c) : 0.0;
    Outcome o;
    o.pass = c <= b && b <= l && l > c && share >= 0.30 && e.seconds < 1800.0;
    o.detail = fmt("overload %% centralized %.2f (se %.2f) <= bounds %.2f (se %.2f) <= local %.2f (se %.2f); "
                   "bounds share of reduction %.1f%%; ensemble %.0f s",
                   c, e.centralized.overload_pct.se, b, e.bounds.overload_pct.se, l, e.local.overload_pct.se,
                   100.0 * share, e.seconds);
    return o;
}

Outcome peak(const EnsembleResult& e) {
    const double b = e.bounds.peak_kw.mean, l = e.local.peak_kw.mean;
    return {b < l, fmt("mean peak bounds %.2f kW (se %.2f) vs local %.2f kW (se %.2f), reduction %.1f%%", b,
                       e.bounds.peak_kw.se, l, e.local.peak_kw.se, 100.0 * (l - b) / l)};
}

Outcome cost(const EnsembleResult& e) {
    const double b = e.bounds.cost_billed.mean, bu = e.bounds.cost_undiscounted.mean, l = e.local.cost_billed.mean;
    const double ratio = b / l;
    return {ratio >= 0.80 && ratio <= 1.00 && bu >= l,
            fmt("bounds billed %.2f = %.1f%% of local %.2f; bounds undiscounted %.2f", b, 100.0 * ratio, l, bu)};
}

// ---- 6: linear model fit

Outcome fidelity() {
    Rng rng(17);
    auto rnd = [&](Eigen::Index r, Eigen::Index c) {
        Eigen::MatrixXd m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
        return m;
    };
    const Eigen::MatrixXd A0 = rnd(9, 8), F0 = rnd(4, 8), G0 = rnd(4, 8);
    const Eigen::VectorXd a0 = rnd(9, 1), f0 = rnd(4, 1), g0 = rnd(4, 1);
    std::vector<TrainingSample> synth;
    for (auto& inj : uniform_injections(4, 60, 3, 0.3)) {
        const Eigen::VectorXd x = stack_injection(inj);
        const Eigen::VectorXd v = A0 * x + a0, re = F0 * x + f0, im = G0 * x + g0;
        PFSolution sol;
        sol.voltage.assign(v.data(), v.data() + v.size());
        for (Eigen::Index k = 0; k < re.size(); ++k) {
            sol.transformer_flow.emplace_back(re(k), im(k));
            sol.tau.push_back(re(k) * re(k) + im(k) * im(k));
        }
        synth.push_back({inj, sol});
    }
    const auto m = fit_linear_model(synth);
    const double recovery = std::max({(m.A - A0).cwiseAbs().maxCoeff(), (m.a - a0).cwiseAbs().maxCoeff(),
                                      (m.F - F0).cwiseAbs().maxCoeff(), (m.f - f0).cwiseAbs().maxCoeff(),
                                      (m.G - G0).cwiseAbs().maxCoeff(), (m.g - g0).cwiseAbs().maxCoeff()});

    double held_out = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto net = generate_radial_network(8, seed);
        const RadialPowerFlow pf(net);
        const auto fit = fit_linear_model(solve_samples(pf, uniform_injections(8, 500, seed, 0.2)));
        for (const auto& s : solve_samples(pf, uniform_injections(8, 300, seed + 100, 0.2))) {
            const Eigen::VectorXd v = fit.voltage(stack_injection(s.injection));
            for (Eigen::Index i = 0; i < v.size(); ++i)
                held_out = std::max(held_out, std::abs(v(i) - s.solution.voltage[static_cast<std::size_t>(i)]));
        }
    }
    return {recovery <= 1e-8 && held_out < 0.005,
            fmt("exact recovery error %.3g; worst held-out voltage error %.3g p.u.", recovery, held_out)};
}

// ---- 7: power flow

// Kirchhoff balance recomputed from the returned phasors.
double balance_residual(const Network& net, const PFSolution& sol, const InjectionVector& inj) {
    using C = std::complex<double>;
    std::vector<C> net_in(static_cast<std::size_t>(net.node_count()));
    for (const Line& l : net.lines) {
        const C vf = sol.voltage_phasor[static_cast<std::size_t>(l.from - 1)];
        const C vt = sol.voltage_phasor[static_cast<std::size_t>(l.to - 1)];
        const C i = (vf - vt) / C(l.resistance, l.reactance);
        net_in[static_cast<std::size_t>(l.to - 1)] += vt * std::conj(i);
        net_in[static_cast<std::size_t>(l.from - 1)] -= vf * std::conj(i);
    }
    const auto ids = net.consumers();
    std::vector<C> load(net_in.size());
    for (std::size_t c = 0; c < ids.size(); ++c) load[static_cast<std::size_t>(ids[c] - 1)] = C(inj.p[c], inj.q[c]);
    double worst = 0.0;
    for (std::size_t k = 0; k < net_in.size(); ++k) {
        if (net.nodes[k].kind == NodeKind::substation) continue;
        worst = std::max(worst, std::abs(net_in[k] - load[k]));
    }
    return worst;
}

Outcome oracle_check() {
    double closed = 0.0;
    for (auto [r, x, p, q] : {std::array{0.01, 0.01, 0.1, 0.0}, std::array{0.02, 0.03, 0.3, 0.1},
                              std::array{0.02, 0.03, -0.2, 0.05}, std::array{0.05, 0.02, 0.5, -0.2}}) {
        Network net;
        net.nodes = {{1, NodeKind::substation}, {2, NodeKind::consumer}};
        net.lines = {{1, 2, r, x}};
        net.transformers = {{1, 2, 1.0}};
        InjectionVector inj;
        inj.p = {p};
        inj.q = {q};
        const auto sol = solve_pf(net, inj);
        const double b = 1.0 - 2.0 * (r * p + x * q), c = (r * r + x * x) * (p * p + q * q);
        closed = std::max(closed, std::abs(sol.voltage[1] - std::sqrt((b + std::sqrt(b * b - 4.0 * c)) / 2.0)));
    }
    int solves = 0, converged = 0;
    double worst_reported = 0.0, worst_recomputed = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const int n = 8 + static_cast<int>(seed % 9);
        const auto net = generate_radial_network(n, seed);
        const RadialPowerFlow pf(net);
        for (const auto& inj : uniform_injections(n, 50, seed + 500, 0.3)) {
            ++solves;
            PFSolution sol;
            try {
                sol = pf.solve(inj);
            } catch (const NonConvergence&) {
                continue;
            }
            if (!sol.converged) continue;
            ++converged;
            worst_reported = std::max(worst_reported, sol.max_residual);
            worst_recomputed = std::max(worst_recomputed, balance_residual(net, sol, inj));
        }
    }
    return {closed <= 1e-8 && worst_reported <= 1e-8 && worst_recomputed <= 1e-8 && converged > 0,
            fmt("2-bus error %.3g; %d/%d solves converged, worst residual %.3g (recomputed %.3g)", closed, converged,
                solves, worst_reported, worst_recomputed)};
}

// ---- 8: DER invariants across every trajectory simulated above

Outcome der_invariants() {
    return {g_der_checks > 0 && g_der_violations == 0,
            fmt("%lld transition checks, %lld violations", g_der_checks, g_der_violations)};
}

// ---- 9: windowed metrics

Outcome metric_examples() {
    int ok = 0;
    auto check = [&](const WindowFlag& w, bool flag, double pct) { ok += (w.flag == flag && std::abs(w.worst_pct - pct) <= 1e-9); };
    check(voltage_violations({std::vector<double>(8, 1.0)})[0], false, 0.0);
    check(voltage_violations({std::vector<double>(8, 0.94)})[0], true, 6.0);
    check(voltage_violations({{0.94, 0.94, 1.0, 1.0}})[0], false, 3.0);
    check(transformer_overloads({std::vector<double>(16, 1.0)}, {1.0})[0], false, 100.0);
    check(transformer_overloads({std::vector<double>(16, 1.3 * 1.3)}, {1.0})[0], true, 130.0);
    std::vector<double> tau(16, 1.0);
    for (int t = 0; t < 8; ++t) tau[static_cast<std::size_t>(t)] = 1.21 * 1.21;
    check(transformer_overloads({tau}, {1.0})[0], true, 121.0);
    return {ok == 6, fmt("%d/6 examples", ok)};
}

// ---- 10: determinism

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "dercoord_acceptance_determinism";
    fs::remove_all(root);
    int identical = 0, compared = 0;
    for (auto kind : {ControllerKind::bounds, ControllerKind::centralized, ControllerKind::local}) {
        RunConfig cfg;
        cfg.seed = 11;
        cfg.days = 2;
        cfg.controller = kind;
        for (int rep = 0; rep < 2; ++rep) {
            const auto r = run(cfg);
            tally(r);
            write_run_outputs(root / controller_name(kind) / std::to_string(rep), {r});
        }
        for (const char* f : {"report.json", "violations.csv", "dispatch.csv"}) {
            ++compared;
            const auto dir = root / controller_name(kind);
            identical += slurp(dir / "0" / f) == slurp(dir / "1" / f) && !slurp(dir / "0" / f).empty();
        }
    }
    fs::remove_all(root);
    return {identical == compared, fmt("%d/%d output files byte-identical across repeated runs", identical, compared)};
}

}  // namespace

int main() {
    struct Row {
        int id;
        const char* name;
        Outcome outcome;
    };
    std::vector<Row> rows;
    auto record = [&](int id, const char* name, const std::function<Outcome()>& f) {
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        rows.push_back({id, name, o});
        std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
        std::fflush(stdout);
    };

    record(1, "supply-bound soundness", soundness);
    record(2, "box program optimality", optimality);
    std::optional<EnsembleResult> ens;
    std::string ens_error;
    try {
        ens = ensemble();
    } catch (const std::exception& e) {
        ens_error = e.what();
    }
    auto from_ensemble = [&](Outcome (*f)(const EnsembleResult&)) {
        return [&, f]() -> Outcome {
            if (!ens) return {false, "ensemble failed: " + ens_error};
            return f(*ens);
        };
    };
    record(3, "controller overload ordering", from_ensemble(ordering));
    record(4, "peak load", from_ensemble(peak));
    record(5, "cost bracket", from_ensemble(cost));
    record(6, "linear model fidelity", fidelity);
    record(7, "power flow oracle", oracle_check);
    record(10, "determinism", determinism);
    record(8, "DER invariants", der_invariants);
    record(9, "windowed metrics", metric_examples);

    int failed = 0;
    for (const auto& r : rows) failed += r.outcome.pass ? 0 : 1;
    std::printf("%d/%zu criteria passed\n", static_cast<int>(rows.size()) - failed, rows.size());
    return failed == 0 ? 0 : 1;
}
