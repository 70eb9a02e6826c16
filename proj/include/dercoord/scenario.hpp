#ifndef DERCOORD_SCENARIO_HPP
#define DERCOORD_SCENARIO_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dercoord/bookend.hpp"
#include "dercoord/calendar.hpp"
#include "dercoord/der.hpp"
#include "dercoord/errors.hpp"
#include "dercoord/network.hpp"
#include "dercoord/random.hpp"
#include "dercoord/tariff.hpp"

namespace dercoord {

// Penetration knobs, each in [0, 1].
//   pv       share of consumers with rooftop PV
//   ev       EV charging energy as a share of total network energy
//   storage  share of PV consumers that also get a battery
//   phi      flexible fraction of each consumer's thermal load
struct ScenarioKnobs {
    double pv = 0.0;
    double ev = 0.0;
    double storage = 0.0;
    double phi = 0.0;

    void validate() const {
        for (double k : {pv, ev, storage, phi})
            if (!(k >= 0.0 && k <= 1.0)) throw std::invalid_argument("penetration knobs must lie in [0, 1]");
    }
};

inline void to_json(nlohmann::json& j, const ScenarioKnobs& k) {
    j = {{"pv", k.pv}, {"ev", k.ev}, {"storage", k.storage}, {"phi", k.phi}};
}
inline void from_json(const nlohmann::json& j, ScenarioKnobs& k) {
    k.pv = j.value("pv", 0.0);
    k.ev = j.value("ev", 0.0);
    k.storage = j.value("storage", 0.0);
    k.phi = j.value("phi", 0.0);
}

// Shape and sizing parameters of the synthetic generator.
struct ScenarioStyle {
    double mean_load_kw_min = 0.5, mean_load_kw_max = 1.0;
    double thermal_share_min = 0.25, thermal_share_max = 0.45;  // thermal mean / other load mean
    double power_factor_min = 0.90, power_factor_max = 0.95;
    double pv_ratio_min = 0.40, pv_ratio_max = 0.90;            // PV energy / node energy
    double storage_ratio_min = 0.40, storage_ratio_max = 0.80;  // capacity / daily PV energy
    double storage_c_rate = 0.5;
    double ev_power_kw = 6.3;
    double ev_daily_kwh = 12.0;    // typical daily need, sets the number of adopters
    double ev_home_share = 0.7;    // remaining adopters charge at work
    double thermal_umax_factor = 2.0;
    double rating_factor = 1.3;    // transformer rating / baseline peak apparent power
};

/// Load, PV and DER data for one seeded network over `steps` 15-minute steps
/// starting at midnight of `start_date`. Powers in kW, consumption-positive.
struct Scenario {
    Network net;
    std::uint64_t seed = 0;
    ScenarioKnobs knobs;
    Date start_date = make_date(2030, 1, 7);
    int steps = 0;
    double delta = 0.25;

    // [consumer][step]; load excludes thermal energy that a thermal unit controls.
    std::vector<std::vector<double>> load_p, load_q, pv_p;
    DERFleet fleet;
    TouTariff tariff;

    std::vector<double> power_factor, pv_ratio, storage_ratio;
    double ev_energy_share = 0.0;  // realized

    int consumers() const { return static_cast<int>(load_p.size()); }
    int days() const { return steps / kStepsPerDay; }

    Date date_of_step(int step) const { return start_date + std::chrono::days{step / kStepsPerDay}; }

    // Uncontrollable net injection seen by the controllers.
    NodeProfiles uncontrollable() const {
        NodeProfiles prof;
        prof.p = load_p;
        prof.q = load_q;
        for (std::size_t i = 0; i < prof.p.size(); ++i)
            for (std::size_t t = 0; t < prof.p[i].size(); ++t) prof.p[i][t] -= pv_p[i][t];
        return prof;
    }

    // Consumption with DERs idle at their baseline (thermal at baseline, no EV).
    std::vector<std::vector<double>> baseline_p() const {
        auto out = load_p;
        for (std::size_t i = 0; i < fleet.nodes.size(); ++i)
            for (const auto& u : fleet.nodes[i])
                if (u.kind == DerKind::thermal)
                    for (std::size_t t = 0; t < out[i].size(); ++t) out[i][t] += u.baseline[t];
        return out;
    }
};

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t k = n; k > 1; --k) std::swap(idx[k - 1], idx[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(k) - 1))]);
    return idx;
}

// Daily load shape: a diurnal and a semi-diurnal sinusoid, evening peak at
// `evening` hours. Weekends are flatter with a later morning.
inline double load_shape(double hour, double evening, bool weekend) {
    const double w = 2.0 * std::numbers::pi / 24.0;
    const double a1 = weekend ? 0.25 : 0.35, a2 = weekend ? 0.15 : 0.22;
    const double morning_shift = weekend ? 1.5 : 0.0;
    const double v = 1.0 + a1 * std::cos(w * (hour - evening)) +
                     a2 * std::cos(2.0 * w * (hour - evening - morning_shift / 2.0));
    return std::max(0.15, v);
}

inline double thermal_shape(double hour, double peak) {
    const double w = 2.0 * std::numbers::pi / 24.0;
    return std::max(0.1, 1.0 + 0.5 * std::cos(w * (hour - peak)));
}

inline double pv_shape(double hour) {
    if (hour <= 6.0 || hour >= 18.0) return 0.0;
    return std::pow(std::sin(std::numbers::pi * (hour - 6.0) / 12.0), 1.2);
}

// Rescales `x` so its total is `total`.
inline void scale_to_total(std::vector<double>& x, double total) {
    const double s = std::accumulate(x.begin(), x.end(), 0.0);
    if (s <= 0.0) return;
    for (auto& v : x) v *= total / s;
}

// Spreads `total` over capacities in proportion to weights, never exceeding
// a capacity. Returns the allocated amounts.
inline std::vector<double> water_fill(const std::vector<double>& weights, const std::vector<double>& caps,
                                      double total) {
    std::vector<double> out(weights.size(), 0.0);
    std::vector<bool> full(weights.size(), false);
    double left = total;
    for (int round = 0; round < 64 && left > 1e-12; ++round) {
        double wsum = 0.0;
        for (std::size_t k = 0; k < weights.size(); ++k)
            if (!full[k]) wsum += weights[k];
        if (wsum <= 0.0) break;
        double spilled = 0.0;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            if (full[k]) continue;
            const double want = out[k] + left * weights[k] / wsum;
            if (want >= caps[k]) {
                spilled += want - caps[k];
                out[k] = caps[k];
                full[k] = true;
            } else {
                out[k] = want;
            }
        }
        left = spilled;
    }
    return out;
}

}  // namespace detail

// Most frequent hour of the daily peak of total network demand; ties go to
// the earliest hour.
inline int most_frequent_peak_hour(const std::vector<std::vector<double>>& net_p, int steps) {
    std::array<int, 24> votes{};
    for (int day = 0; day < steps / kStepsPerDay; ++day) {
        std::array<double, 24> hourly{};
        for (int t = 0; t < kStepsPerDay; ++t)
            for (const auto& node : net_p)
                hourly[static_cast<std::size_t>(t / kStepsPerHour)] += node[static_cast<std::size_t>(day * kStepsPerDay + t)];
        votes[static_cast<std::size_t>(std::max_element(hourly.begin(), hourly.end()) - hourly.begin())]++;
    }
    return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

// Transformer k feeds consumer k; ratings become rating_factor times the
// consumer's peak baseline apparent power.
inline void rerate_transformers(Network& net, const std::vector<std::vector<double>>& p,
                                const std::vector<std::vector<double>>& q, double rating_factor) {
    const auto ids = net.consumers();
    for (auto& tr : net.transformers) {
        const auto it = std::find(ids.begin(), ids.end(), tr.to);
        if (it == ids.end()) continue;
        const auto i = static_cast<std::size_t>(it - ids.begin());
        double peak = 0.0;
        for (std::size_t t = 0; t < p[i].size(); ++t) peak = std::max(peak, std::hypot(p[i][t], q[i][t]));
        const double rating = rating_factor * peak / net.power_base_kw;
        tr.rating_sq = rating * rating;
    }
}

/// Fills PV, DERs, tariff and ratings around given consumer loads. `load_p`
/// and `load_q` hold total household demand; when phi > 0 the thermal part
/// (`thermal_p`, may be empty) moves into a controllable thermal unit.
inline Scenario assemble_scenario(Network net, std::vector<std::vector<double>> load_p,
                                  std::vector<std::vector<double>> load_q, std::vector<std::vector<double>> thermal_p,
                                  const ScenarioKnobs& knobs, std::uint64_t seed, Date start_date,
                                  const ScenarioStyle& style = {}) {
    knobs.validate();
    const auto nc = static_cast<std::size_t>(net.consumer_count());
    if (load_p.size() != nc || load_q.size() != nc) throw std::invalid_argument("load profiles do not match consumers");
    const int steps = load_p.empty() ? 0 : static_cast<int>(load_p.front().size());
    if (steps < kStepsPerDay || steps % kStepsPerDay != 0)
        throw std::invalid_argument("profiles must cover whole days");
    if (thermal_p.empty()) thermal_p.assign(nc, std::vector<double>(static_cast<std::size_t>(steps), 0.0));
    const double delta = net.timestep_hours;
    const auto T = static_cast<std::size_t>(steps);
    const int days = steps / kStepsPerDay;

    // Stream separate from the load draws so the same loads get the same DERs.
    Rng rng(seed * 0x9E3779B97F4A7C15ULL + 17);
    Scenario sc;
    sc.seed = seed;
    sc.knobs = knobs;
    sc.start_date = start_date;
    sc.steps = steps;
    sc.delta = delta;
    sc.fleet.nodes.assign(nc, {});
    sc.pv_p.assign(nc, std::vector<double>(T, 0.0));
    sc.pv_ratio.assign(nc, 0.0);
    sc.storage_ratio.assign(nc, 0.0);
    sc.power_factor.assign(nc, 0.0);

    // Baseline (pre-DER) energy per node, thermal included.
    std::vector<double> node_energy(nc, 0.0);
    for (std::size_t i = 0; i < nc; ++i)
        for (std::size_t t = 0; t < T; ++t) node_energy[i] += delta * (load_p[i][t] + thermal_p[i][t]);
    const double total_energy = std::accumulate(node_energy.begin(), node_energy.end(), 0.0);

    // PV on a random subset; one cloudiness factor per day shared by the feeder.
    std::vector<double> cloud(static_cast<std::size_t>(days));
    for (auto& c : cloud) c = rng.uniform(0.5, 1.0);
    const auto pv_count = static_cast<std::size_t>(std::lround(knobs.pv * static_cast<double>(nc)));
    const auto order = detail::shuffled_indices(nc, rng);
    std::vector<std::size_t> pv_nodes(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pv_count));
    std::sort(pv_nodes.begin(), pv_nodes.end());
    for (std::size_t i : pv_nodes) {
        sc.pv_ratio[i] = rng.uniform(style.pv_ratio_min, style.pv_ratio_max);
        auto& pv = sc.pv_p[i];
        for (std::size_t t = 0; t < T; ++t) {
            const double hour = static_cast<double>(t % kStepsPerDay) / kStepsPerHour + 0.125;
            pv[t] = detail::pv_shape(hour) * cloud[t / kStepsPerDay] * rng.uniform(0.9, 1.0);
        }
        detail::scale_to_total(pv, sc.pv_ratio[i] * node_energy[i] / delta);
    }

    // Storage on a share of the PV nodes, sized from mean daily PV energy.
    const auto storage_count = static_cast<std::size_t>(std::lround(knobs.storage * static_cast<double>(pv_count)));
    for (std::size_t k = 0; k < storage_count; ++k) {
        const std::size_t i = pv_nodes[k];
        const double daily_pv = sc.pv_ratio[i] * node_energy[i] / days;
        sc.storage_ratio[i] = rng.uniform(style.storage_ratio_min, style.storage_ratio_max);
        const double cap = sc.storage_ratio[i] * daily_pv;
        const double rate = style.storage_c_rate * cap;
        sc.fleet.nodes[i].push_back(make_storage(cap, rate, rate, 0.5 * cap));
    }

    // EVs: total energy fixed by the knob, adopters sized so an average day
    // needs about ev_daily_kwh each.
    if (knobs.ev > 0.0) {
        const double share = std::min(knobs.ev, 0.95);
        const double ev_total = share / (1.0 - share) * total_energy;
        auto adopters = static_cast<std::size_t>(std::ceil(ev_total / (days * style.ev_daily_kwh)));
        adopters = std::clamp<std::size_t>(adopters, 1, nc);
        const auto ev_order = detail::shuffled_indices(nc, rng);
        std::vector<std::size_t> ev_nodes(ev_order.begin(), ev_order.begin() + static_cast<std::ptrdiff_t>(adopters));
        std::sort(ev_nodes.begin(), ev_nodes.end());

        struct Slot {
            std::size_t node;
            EVWindow w;
        };
        std::vector<Slot> slots;
        std::vector<double> weights, caps;
        for (std::size_t i : ev_nodes) {
            const bool home = rng.bernoulli(style.ev_home_share);
            const double node_weight = rng.uniform(0.6, 1.4);
            for (int d = 0; d < days; ++d) {
                const Date date = start_date + std::chrono::days{d};
                int start = 0, end = 0;
                if (home) {
                    start = d * kStepsPerDay + rng.uniform_int(17 * kStepsPerHour, 20 * kStepsPerHour);
                    end = (d + 1) * kStepsPerDay + rng.uniform_int(6 * kStepsPerHour, 8 * kStepsPerHour);
                } else {
                    if (is_weekend(date)) continue;
                    start = d * kStepsPerDay + rng.uniform_int(8 * kStepsPerHour, 9 * kStepsPerHour);
                    end = d * kStepsPerDay + rng.uniform_int(16 * kStepsPerHour, 18 * kStepsPerHour);
                }
                if (end > steps) continue;
                slots.push_back({i, {start, end, 0.0}});
                weights.push_back(node_weight * rng.uniform(0.6, 1.4) * (is_weekend(date) ? 0.7 : 1.0));
                // Leave headroom so the deadline is never tight.
                caps.push_back(0.9 * style.ev_power_kw * (end - start) * delta);
            }
        }
        const auto energy = detail::water_fill(weights, caps, ev_total);
        std::map<std::size_t, std::vector<EVWindow>> windows;
        double realized = 0.0;
        for (std::size_t k = 0; k < slots.size(); ++k) {
            slots[k].w.energy_kwh = energy[k];
            realized += energy[k];
            windows[slots[k].node].push_back(slots[k].w);
        }
        for (auto& [i, ws] : windows) sc.fleet.nodes[i].push_back(make_ev(style.ev_power_kw, ws));
        sc.ev_energy_share = realized / (realized + total_energy);
    }

    // Thermal units take over the thermal part of the load when flexible.
    for (std::size_t i = 0; i < nc; ++i) {
        const bool has_thermal = std::any_of(thermal_p[i].begin(), thermal_p[i].end(), [](double v) { return v > 0.0; });
        if (knobs.phi > 0.0 && has_thermal) {
            const double peak = *std::max_element(thermal_p[i].begin(), thermal_p[i].end());
            sc.fleet.nodes[i].push_back(make_thermal(thermal_p[i], knobs.phi, delta, style.thermal_umax_factor * peak));
        } else {
            for (std::size_t t = 0; t < T; ++t) {
                load_p[i][t] += thermal_p[i][t];
                load_q[i][t] += kThermalReactiveRatio * thermal_p[i][t];
            }
        }
    }

    // Ratings and tariff follow the baseline (DER-free) demand.
    std::vector<std::vector<double>> base_p = load_p, base_q = load_q, net_p(nc);
    for (std::size_t i = 0; i < nc; ++i) {
        for (const auto& u : sc.fleet.nodes[i])
            if (u.kind == DerKind::thermal)
                for (std::size_t t = 0; t < T; ++t) {
                    base_p[i][t] += u.baseline[t];
                    base_q[i][t] += kThermalReactiveRatio * u.baseline[t];
                }
        net_p[i] = base_p[i];
        for (std::size_t t = 0; t < T; ++t) net_p[i][t] -= sc.pv_p[i][t];
    }
    rerate_transformers(net, base_p, base_q, style.rating_factor);
    sc.tariff = TouTariff::centered_on(most_frequent_peak_hour(net_p, steps));
    sc.net = std::move(net);
    sc.load_p = std::move(load_p);
    sc.load_q = std::move(load_q);
    return sc;
}

/// Synthetic scenario: sinusoid-plus-noise household and thermal loads over
/// `days` days, then PV, DERs, tariff and ratings per the knobs.
inline Scenario generate_scenario(const Network& net, const ScenarioKnobs& knobs, std::uint64_t seed, int days,
                                  Date start_date = make_date(2030, 1, 7), const ScenarioStyle& style = {}) {
    knobs.validate();
    if (days < 1) throw std::invalid_argument("scenario needs at least one day");
    const auto nc = static_cast<std::size_t>(net.consumer_count());
    const auto T = static_cast<std::size_t>(days * kStepsPerDay);
    Rng rng(seed);
    std::vector<std::vector<double>> load_p(nc, std::vector<double>(T)), load_q(nc, std::vector<double>(T)),
        thermal_p(nc, std::vector<double>(T));
    std::vector<double> pf(nc);
    for (std::size_t i = 0; i < nc; ++i) {
        const double mean = rng.uniform(style.mean_load_kw_min, style.mean_load_kw_max);
        const double evening = rng.uniform(18.0, 20.0);
        const double th_mean = mean * rng.uniform(style.thermal_share_min, style.thermal_share_max);
        const double th_peak = rng.uniform(15.0, 19.0);
        pf[i] = rng.uniform(style.power_factor_min, style.power_factor_max);
        const double tan_phi = std::tan(std::acos(pf[i]));
        double noise = 0.0, th_noise = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            const Date date = start_date + std::chrono::days{static_cast<int>(t / kStepsPerDay)};
            const double hour = static_cast<double>(t % kStepsPerDay) / kStepsPerHour + 0.125;
            noise = 0.8 * noise + 0.08 * rng.normal();
            th_noise = 0.9 * th_noise + 0.05 * rng.normal();
            load_p[i][t] = mean * detail::load_shape(hour, evening, is_weekend(date)) * std::max(0.3, 1.0 + noise);
            load_q[i][t] = load_p[i][t] * tan_phi;
            thermal_p[i][t] = th_mean * detail::thermal_shape(hour, th_peak) * std::max(0.3, 1.0 + th_noise);
        }
    }
    Scenario sc = assemble_scenario(net, std::move(load_p), std::move(load_q), std::move(thermal_p), knobs, seed,
                                    start_date, style);
    sc.power_factor = pf;
    return sc;
}

// CSV columns: node_id,timestamp,p_kW,q_kVAr (header required). Timestamps
// must form a complete 15-minute grid of whole days for every consumer.
struct ProfileTable {
    Date start_date;
    std::vector<std::vector<double>> p, q;  // [consumer][step]
};

inline ProfileTable read_profiles_csv(std::istream& in, const Network& net) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("profile CSV is empty");
    struct Row {
        int node;
        Timestamp ts;
        double p, q;
    };
    std::vector<Row> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        std::string node, ts, p, q;
        if (!std::getline(ss, node, ',') || !std::getline(ss, ts, ',') || !std::getline(ss, p, ',') ||
            !std::getline(ss, q))
            throw FormatError("profile CSV line " + std::to_string(lineno) + ": expected 4 fields");
        try {
            rows.push_back({std::stoi(node), parse_timestamp(ts), std::stod(p), std::stod(q)});
        } catch (const std::logic_error&) {
            throw FormatError("profile CSV line " + std::to_string(lineno) + ": bad number");
        }
    }
    if (rows.empty()) throw FormatError("profile CSV has no rows");
    Date first = rows.front().ts.date, last = first;
    for (const auto& r : rows) {
        first = std::min(first, r.ts.date);
        last = std::max(last, r.ts.date);
    }
    const int days = static_cast<int>((last - first).count()) + 1;
    const auto ids = net.consumers();
    ProfileTable tab;
    tab.start_date = first;
    const auto T = static_cast<std::size_t>(days * kStepsPerDay);
    tab.p.assign(ids.size(), std::vector<double>(T, 0.0));
    tab.q.assign(ids.size(), std::vector<double>(T, 0.0));
    std::vector<std::vector<bool>> seen(ids.size(), std::vector<bool>(T, false));
    for (const auto& r : rows) {
        const auto it = std::find(ids.begin(), ids.end(), r.node);
        if (it == ids.end()) throw FormatError("profile CSV names unknown consumer " + std::to_string(r.node));
        if (r.ts.minute_of_day % 15 != 0) throw FormatError("profile timestamps must be on the 15-minute grid");
        const auto i = static_cast<std::size_t>(it - ids.begin());
        const auto t = static_cast<std::size_t>((r.ts.date - first).count() * kStepsPerDay + r.ts.minute_of_day / 15);
        tab.p[i][t] = r.p;
        tab.q[i][t] = r.q;
        seen[i][t] = true;
    }
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (std::find(seen[i].begin(), seen[i].end(), false) != seen[i].end())
            throw FormatError("profile CSV misses steps for consumer " + std::to_string(ids[i]));
    return tab;
}

inline ProfileTable read_profiles_csv(const std::string& path, const Network& net) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open profile file " + path);
    return read_profiles_csv(in, net);
}

inline void write_profiles_csv(std::ostream& out, const Network& net, Date start_date,
                               const std::vector<std::vector<double>>& p, const std::vector<std::vector<double>>& q) {
    const auto ids = net.consumers();
    out << "node_id,timestamp,p_kW,q_kVAr\n";
    char buf[64];
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t t = 0; t < p[i].size(); ++t) {
            const Timestamp ts{start_date + std::chrono::days{static_cast<int>(t / kStepsPerDay)},
                               static_cast<int>(t % kStepsPerDay) * 15};
            out << ids[i] << ',' << format_timestamp(ts);
            std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", p[i][t], q[i][t]);
            out << buf;
        }
}

/// Scenario around measured household profiles (no separate thermal part,
/// so phi has no effect).
inline Scenario scenario_from_profiles(const Network& net, const ProfileTable& tab, const ScenarioKnobs& knobs,
                                       std::uint64_t seed, const ScenarioStyle& style = {}) {
    Scenario sc = assemble_scenario(net, tab.p, tab.q, {}, knobs, seed, tab.start_date, style);
    sc.power_factor.assign(tab.p.size(), 0.0);
    return sc;
}

inline void to_json(nlohmann::json& j, const Scenario& s) {
    nlohmann::json fleet = nlohmann::json::array();
    for (const auto& node : s.fleet.nodes) fleet.push_back(node);
    j = {{"network", s.net},
         {"seed", s.seed},
         {"knobs", s.knobs},
         {"start_date", format_date(s.start_date)},
         {"steps", s.steps},
         {"timestep_hours", s.delta},
         {"tariff", s.tariff},
         {"load_p_kw", s.load_p},
         {"load_q_kvar", s.load_q},
         {"pv_p_kw", s.pv_p},
         {"fleet", fleet},
         {"power_factor", s.power_factor},
         {"pv_ratio", s.pv_ratio},
         {"storage_ratio", s.storage_ratio},
         {"ev_energy_share", s.ev_energy_share}};
}

inline void from_json(const nlohmann::json& j, Scenario& s) {
    j.at("network").get_to(s.net);
    s.seed = j.value("seed", std::uint64_t{0});
    s.knobs = j.value("knobs", ScenarioKnobs{});
    s.start_date = parse_date(j.at("start_date").get<std::string>());
    j.at("steps").get_to(s.steps);
    s.delta = j.value("timestep_hours", 0.25);
    j.at("tariff").get_to(s.tariff);
    j.at("load_p_kw").get_to(s.load_p);
    j.at("load_q_kvar").get_to(s.load_q);
    j.at("pv_p_kw").get_to(s.pv_p);
    s.fleet.nodes.clear();
    for (const auto& node : j.at("fleet")) {
        std::vector<DerUnit> units = node.get<std::vector<DerUnit>>();
        for (auto& u : units) u.prepare(s.delta);
        s.fleet.nodes.push_back(std::move(units));
    }
    s.power_factor = j.value("power_factor", std::vector<double>{});
    s.pv_ratio = j.value("pv_ratio", std::vector<double>{});
    s.storage_ratio = j.value("storage_ratio", std::vector<double>{});
    s.ev_energy_share = j.value("ev_energy_share", 0.0);
    const auto nc = static_cast<std::size_t>(s.net.consumer_count());
    if (s.load_p.size() != nc || s.load_q.size() != nc || s.pv_p.size() != nc || s.fleet.nodes.size() != nc)
        throw FormatError("scenario arrays do not match the network's consumers");
    for (std::size_t i = 0; i < nc; ++i)
        if (s.load_p[i].size() != static_cast<std::size_t>(s.steps) ||
            s.load_q[i].size() != static_cast<std::size_t>(s.steps) || s.pv_p[i].size() != static_cast<std::size_t>(s.steps))
            throw FormatError("scenario profile length does not match steps");
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open scenario file " + path);
    try {
        return nlohmann::json::parse(in).get<Scenario>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("scenario " + path + ": " + e.what());
    }
}

}  // namespace dercoord

#endif
