#ifndef DERCOORD_DER_HPP
#define DERCOORD_DER_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dercoord/errors.hpp"

namespace dercoord {

inline constexpr int kStepsPerDay = 96;
inline constexpr int kStepsPerHour = 4;
inline const double kOneWayEfficiency = std::sqrt(0.86);
inline constexpr double kThermalReactiveRatio = 0.426;  // tan(acos(0.92))
inline constexpr double kEnvelopeTol = 1e-7;             // kWh

enum class DerKind { storage, ev, thermal };

NLOHMANN_JSON_SERIALIZE_ENUM(DerKind, {
    {DerKind::storage, "storage"},
    {DerKind::ev, "ev"},
    {DerKind::thermal, "thermal"},
})

// Charging window over absolute steps [start, end); `energy_kwh` must be
// stored by the end of step end - 1.
struct EVWindow {
    int start = 0;
    int end = 0;
    double energy_kwh = 0.0;

    bool operator==(const EVWindow&) const = default;
};

/// One storage-like DER. State `soc` is stored energy (kWh): battery energy
/// for storage, energy delivered in the current window for an EV, and
/// energy consumed since midnight for a thermal load. Step indices are
/// absolute simulation steps of length delta hours.
struct DerUnit {
    DerKind kind = DerKind::storage;
    double c_max = 0.0;  // kW
    double d_max = 0.0;  // kW, zero except for storage
    double eta_c = 1.0;
    double eta_d = 1.0;
    double soc = 0.0;

    double capacity = 0.0;        // storage
    std::vector<EVWindow> windows;  // ev
    std::vector<double> baseline;   // thermal: baseline power per absolute step (kW)
    double phi = 0.0;               // thermal flexible fraction

    // Cumulative baseline energy at the end of each step within its day.
    std::vector<double> baseline_cum;

    bool operator==(const DerUnit& o) const {
        return kind == o.kind && c_max == o.c_max && d_max == o.d_max && eta_c == o.eta_c && eta_d == o.eta_d &&
               soc == o.soc && capacity == o.capacity && windows == o.windows && baseline == o.baseline &&
               phi == o.phi;
    }

    void prepare(double delta) {
        if (kind != DerKind::thermal) return;
        baseline_cum.resize(baseline.size());
        double acc = 0.0;
        for (std::size_t k = 0; k < baseline.size(); ++k) {
            if (k % kStepsPerDay == 0) acc = 0.0;
            acc += delta * baseline[k];
            baseline_cum[k] = acc;
        }
    }

    // Window containing `step`, or nullptr.
    const EVWindow* window_at(int step) const {
        for (const auto& w : windows)
            if (step >= w.start && step < w.end) return &w;
        return nullptr;
    }
};

inline DerUnit make_storage(double capacity_kwh, double c_max_kw, double d_max_kw, double soc_kwh,
                            double eta_c = kOneWayEfficiency, double eta_d = kOneWayEfficiency) {
    DerUnit u;
    u.kind = DerKind::storage;
    u.capacity = capacity_kwh;
    u.c_max = c_max_kw;
    u.d_max = d_max_kw;
    u.soc = soc_kwh;
    u.eta_c = eta_c;
    u.eta_d = eta_d;
    return u;
}

inline DerUnit make_ev(double c_max_kw, std::vector<EVWindow> windows, double eta_c = 1.0) {
    DerUnit u;
    u.kind = DerKind::ev;
    u.c_max = c_max_kw;
    u.eta_c = eta_c;
    u.windows = std::move(windows);
    return u;
}

// u_max defaults to the largest baseline power.
inline DerUnit make_thermal(std::vector<double> baseline_kw, double phi, double delta, double u_max = -1.0) {
    DerUnit u;
    u.kind = DerKind::thermal;
    u.baseline = std::move(baseline_kw);
    u.phi = phi;
    u.c_max = u_max >= 0.0 ? u_max : (u.baseline.empty() ? 0.0 : *std::max_element(u.baseline.begin(), u.baseline.end()));
    u.prepare(delta);
    return u;
}

struct Envelope {
    double lo = 0.0;
    double hi = 0.0;
};

/// Thermal bounds on cumulative energy at step t in [1, T_d] of a day:
///   Q^max(t) = min(Q^base(t) + phi Q^base(T_d), Q^base(T_d))
///   Q^min(t) = max(0, Q^base(t) - phi Q^base(T_d), Q^base(T_d) - (T_d - t) delta u^max)
inline Envelope thermal_envelope(double q_base_t, double q_base_end, double phi, int t, int t_day, double delta,
                                 double u_max) {
    Envelope e;
    e.hi = std::min(q_base_t + phi * q_base_end, q_base_end);
    e.lo = std::max({0.0, q_base_t - phi * q_base_end, q_base_end - (t_day - t) * delta * u_max});
    return e;
}

inline Envelope thermal_envelope(const DerUnit& u, int step, double delta) {
    const int day = step / kStepsPerDay;
    const int t = step % kStepsPerDay + 1;
    const auto end = static_cast<std::size_t>(day * kStepsPerDay + kStepsPerDay - 1);
    if (end >= u.baseline_cum.size()) throw std::out_of_range("thermal baseline does not cover step");
    return thermal_envelope(u.baseline_cum[static_cast<std::size_t>(step)], u.baseline_cum[end], u.phi, t,
                            kStepsPerDay, delta, u.c_max);
}

/// Admissible state range at the end of `step`.
inline Envelope soc_envelope(const DerUnit& u, int step, double delta) {
    switch (u.kind) {
        case DerKind::storage:
            return {0.0, u.capacity};
        case DerKind::ev: {
            const EVWindow* w = u.window_at(step);
            if (!w) return {0.0, 0.0};
            const double rest = u.eta_c * delta * u.c_max * (w->end - 1 - step);
            return {std::max(0.0, w->energy_kwh - rest), w->energy_kwh};
        }
        case DerKind::thermal:
            return thermal_envelope(u, step, delta);
    }
    return {};
}

// State carried into `step` (resets at EV window starts and thermal day starts).
inline double state_before(const DerUnit& u, int step) {
    if (u.kind == DerKind::thermal && step % kStepsPerDay == 0) return 0.0;
    if (u.kind == DerKind::ev) {
        const EVWindow* w = u.window_at(step);
        if (!w || step == w->start) return 0.0;
    }
    return u.soc;
}

// Power limits at `step`: EVs draw nothing outside their windows.
inline double charge_limit(const DerUnit& u, int step) {
    if (u.kind == DerKind::ev && !u.window_at(step)) return 0.0;
    return u.c_max;
}

inline double discharge_limit(const DerUnit& u) { return u.kind == DerKind::storage ? u.d_max : 0.0; }

// Q(t) = Q(t-1) + eta_c delta c - eta_d delta d
inline double next_state(const DerUnit& u, int step, double c, double d, double delta) {
    return state_before(u, step) + u.eta_c * delta * c - u.eta_d * delta * d;
}

/// Applies one step to the unit, rejecting power or envelope violations.
inline void step_dynamics(DerUnit& u, int step, double c, double d, double delta) {
    const double climit = charge_limit(u, step), dlimit = discharge_limit(u);
    if (c < -1e-9 || d < -1e-9 || c > climit + 1e-9 || d > dlimit + 1e-9)
        throw BoundsViolation("power outside limits at step " + std::to_string(step));
    const double q = next_state(u, step, c, d, delta);
    const Envelope env = soc_envelope(u, step, delta);
    if (q < env.lo - kEnvelopeTol || q > env.hi + kEnvelopeTol)
        throw BoundsViolation("state " + std::to_string(q) + " outside [" + std::to_string(env.lo) + ", " +
                              std::to_string(env.hi) + "] at step " + std::to_string(step));
    u.soc = std::clamp(q, env.lo, env.hi);
}

// Moves a requested (c, d) into the power limits and the state envelope,
// trimming the offending direction first.
inline void clamp_to_envelope(const DerUnit& u, int step, double delta, double& c, double& d) {
    c = std::clamp(c, 0.0, charge_limit(u, step));
    d = std::clamp(d, 0.0, discharge_limit(u));
    const Envelope env = soc_envelope(u, step, delta);
    double q = next_state(u, step, c, d, delta);
    if (q > env.hi) {
        const double cut = std::min(c, (q - env.hi) / (u.eta_c * delta));
        c -= cut;
        q = next_state(u, step, c, d, delta);
        if (q > env.hi && d < discharge_limit(u)) d = std::min(discharge_limit(u), d + (q - env.hi) / (u.eta_d * delta));
    } else if (q < env.lo) {
        if (d > 0.0) {
            const double cut = std::min(d, (env.lo - q) / (u.eta_d * delta));
            d -= cut;
            q = next_state(u, step, c, d, delta);
        }
        if (q < env.lo) c = std::min(charge_limit(u, step), c + (env.lo - q) / (u.eta_c * delta));
    }
}

// Reactive power drawn by the unit at charge power c (kVAr).
inline double der_reactive(const DerUnit& u, double c) {
    return u.kind == DerKind::thermal ? kThermalReactiveRatio * c : 0.0;
}

// Net real power drawn from the grid (consumption-positive).
inline double der_net(double c, double d) { return c - d; }

// Per consumer node, in Network::consumers() order.
struct DERFleet {
    std::vector<std::vector<DerUnit>> nodes;

    std::size_t unit_count() const {
        std::size_t k = 0;
        for (const auto& n : nodes) k += n.size();
        return k;
    }
};

// Counts hard-constraint breaches seen while replaying dispatch.
struct DerAudit {
    long long checks = 0;
    long long violations = 0;
    std::vector<std::string> samples;  // first few descriptions

    void record(bool ok, const std::string& what) {
        ++checks;
        if (ok) return;
        ++violations;
        if (samples.size() < 10) samples.push_back(what);
    }
};

// Checks a transition that has already been applied to `u`.
inline void audit_transition(DerAudit& audit, const DerUnit& before, const DerUnit& after, int step, double c,
                             double d, double delta) {
    const std::string tag = " at step " + std::to_string(step);
    audit.record(c >= -1e-9 && c <= charge_limit(before, step) + 1e-9, "charge power" + tag);
    audit.record(d >= -1e-9 && d <= discharge_limit(before) + 1e-9, "discharge power" + tag);
    const double q = next_state(before, step, c, d, delta);
    audit.record(std::abs(q - after.soc) <= 1e-6, "dynamics" + tag);
    const Envelope env = soc_envelope(before, step, delta);
    audit.record(after.soc >= env.lo - kEnvelopeTol && after.soc <= env.hi + kEnvelopeTol, "state envelope" + tag);
    if (before.kind == DerKind::ev) {
        const EVWindow* w = before.window_at(step);
        if (w && step == w->end - 1)
            audit.record(std::abs(after.soc - w->energy_kwh) <= 1e-6, "EV window energy" + tag);
    }
    if (before.kind == DerKind::thermal && step % kStepsPerDay == kStepsPerDay - 1)
        audit.record(std::abs(after.soc - before.baseline_cum[static_cast<std::size_t>(step)]) <= 1e-6,
                     "thermal daily energy" + tag);
}

inline void to_json(nlohmann::json& j, const EVWindow& w) {
    j = {{"start", w.start}, {"end", w.end}, {"energy_kwh", w.energy_kwh}};
}
inline void from_json(const nlohmann::json& j, EVWindow& w) {
    j.at("start").get_to(w.start);
    j.at("end").get_to(w.end);
    j.at("energy_kwh").get_to(w.energy_kwh);
}

inline void to_json(nlohmann::json& j, const DerUnit& u) {
    j = {{"kind", u.kind}, {"c_max", u.c_max}, {"d_max", u.d_max}, {"eta_c", u.eta_c}, {"eta_d", u.eta_d},
         {"soc", u.soc}};
    switch (u.kind) {
        case DerKind::storage:
            j["capacity"] = u.capacity;
            break;
        case DerKind::ev:
            j["windows"] = u.windows;
            break;
        case DerKind::thermal:
            j["baseline"] = u.baseline;
            j["phi"] = u.phi;
            break;
    }
}

inline void from_json(const nlohmann::json& j, DerUnit& u) {
    j.at("kind").get_to(u.kind);
    j.at("c_max").get_to(u.c_max);
    u.d_max = j.value("d_max", 0.0);
    u.eta_c = j.value("eta_c", 1.0);
    u.eta_d = j.value("eta_d", 1.0);
    u.soc = j.value("soc", 0.0);
    u.capacity = j.value("capacity", 0.0);
    u.windows = j.value("windows", std::vector<EVWindow>{});
    u.baseline = j.value("baseline", std::vector<double>{});
    u.phi = j.value("phi", 0.0);
}

}  // namespace dercoord

#endif
