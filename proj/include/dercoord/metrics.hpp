#ifndef DERCOORD_METRICS_HPP
#define DERCOORD_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "dercoord/der.hpp"
#include "dercoord/tariff.hpp"

namespace dercoord {

inline constexpr int kVoltageWindow = 4;       // steps, one hour
inline constexpr int kTransformerWindow = 8;   // steps, two hours
inline constexpr double kVoltageLimitPct = 5.0;
inline constexpr double kOverloadLimitPct = 120.0;

struct WindowFlag {
    bool flag = false;
    double worst_pct = 0.0;

    bool operator==(const WindowFlag&) const = default;
};

namespace detail {

// Largest sliding-window mean of f(x) (windows advance one step).
template <class F>
double worst_window_mean(const std::vector<double>& trace, int window, F f) {
    if (static_cast<int>(trace.size()) < window) throw std::invalid_argument("trace shorter than the metric window");
    double sum = 0.0, worst = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < trace.size(); ++t) {
        sum += trace[t];
        if (t >= static_cast<std::size_t>(window)) sum -= trace[t - static_cast<std::size_t>(window)];
        if (t + 1 >= static_cast<std::size_t>(window)) worst = std::max(worst, f(sum / window));
    }
    return worst;
}

}  // namespace detail

/// Per node: deviation of the 1-hour mean voltage from 1.0 p.u., in percent.
inline std::vector<WindowFlag> voltage_violations(const std::vector<std::vector<double>>& v_trace,
                                                  int window = kVoltageWindow) {
    std::vector<WindowFlag> out;
    out.reserve(v_trace.size());
    for (const auto& trace : v_trace) {
        WindowFlag wf;
        wf.worst_pct = detail::worst_window_mean(trace, window, [](double m) { return 100.0 * std::abs(m - 1.0); });
        wf.flag = wf.worst_pct > kVoltageLimitPct + 1e-9;
        out.push_back(wf);
    }
    return out;
}

/// Per transformer: 2-hour mean apparent power sqrt(tau) as a percentage of
/// its rating (same units as sqrt(tau)).
inline std::vector<WindowFlag> transformer_overloads(const std::vector<std::vector<double>>& tau_trace,
                                                     const std::vector<double>& ratings,
                                                     int window = kTransformerWindow) {
    if (tau_trace.size() != ratings.size()) throw std::invalid_argument("one rating per transformer trace");
    std::vector<WindowFlag> out;
    out.reserve(tau_trace.size());
    for (std::size_t k = 0; k < tau_trace.size(); ++k) {
        std::vector<double> s(tau_trace[k].size());
        std::transform(tau_trace[k].begin(), tau_trace[k].end(), s.begin(),
                       [](double tau) { return std::sqrt(std::max(0.0, tau)); });
        const double rating = ratings[k];
        WindowFlag wf;
        wf.worst_pct = detail::worst_window_mean(s, window, [rating](double m) { return 100.0 * m / rating; });
        wf.flag = wf.worst_pct > kOverloadLimitPct + 1e-9;
        out.push_back(wf);
    }
    return out;
}

// Supply bounds for one consumer and hour (kW).
struct HourBounds {
    double upper = std::numeric_limits<double>::infinity();
    double lower = -std::numeric_limits<double>::infinity();
};

struct NodeCost {
    double billed = 0.0;        // $ after the in-bounds discount
    double undiscounted = 0.0;  // $ at the plain TOU rate
    int hours_in_bounds = 0;
    int hours = 0;
};

/// Bills one consumer's net power trace (kW per step starting at
/// `start_step`). An hour earns `discount` when its mean net injection lies
/// within that hour's bounds; exports are credited at the same rate.
/// `bounds` is indexed by hour from the first full hour of the trace and may
/// be empty (no hour qualifies).
inline NodeCost electricity_cost(const std::vector<double>& net_kw, const TouTariff& tariff,
                                 const std::vector<HourBounds>& bounds, double delta, int start_step = 0,
                                 double discount = 0.8) {
    NodeCost cost;
    const std::size_t hours = net_kw.size() / kStepsPerHour;
    for (std::size_t h = 0; h < hours; ++h) {
        double energy = 0.0;
        for (int q = 0; q < kStepsPerHour; ++q) energy += delta * net_kw[h * kStepsPerHour + static_cast<std::size_t>(q)];
        const double mean = energy / (delta * kStepsPerHour);
        const int hour = ((start_step / kStepsPerHour + static_cast<int>(h)) % 24);
        const double rate = tariff.rate(hour);
        bool in = false;
        if (h < bounds.size()) in = mean <= bounds[h].upper + 1e-9 && mean >= bounds[h].lower - 1e-9;
        cost.undiscounted += rate * energy;
        cost.billed += (in ? discount : 1.0) * rate * energy;
        cost.hours_in_bounds += in ? 1 : 0;
        ++cost.hours;
    }
    return cost;
}

// Largest total substation real power over the trace.
inline double peak_load(const std::vector<double>& substation_kw) {
    if (substation_kw.empty()) return 0.0;
    return *std::max_element(substation_kw.begin(), substation_kw.end());
}

inline void to_json(nlohmann::json& j, const WindowFlag& w) { j = {{"flag", w.flag}, {"worst_pct", w.worst_pct}}; }
inline void from_json(const nlohmann::json& j, WindowFlag& w) {
    j.at("flag").get_to(w.flag);
    j.at("worst_pct").get_to(w.worst_pct);
}

}  // namespace dercoord

#endif
