#ifndef DERCOORD_DEMAND_BOUNDS_HPP
#define DERCOORD_DEMAND_BOUNDS_HPP

#include <algorithm>
#include <array>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dercoord/calendar.hpp"
#include "dercoord/errors.hpp"

namespace dercoord {

// Hourly net injections per node and day, accumulated from metered samples.
// A day counts as complete only when all 24 hours received at least one sample.
class LoadHistory {
public:
    struct DayRecord {
        std::array<double, 24> p_sum{};
        std::array<double, 24> q_sum{};
        std::array<int, 24> count{};

        bool complete() const {
            return std::all_of(count.begin(), count.end(), [](int c) { return c > 0; });
        }
        double p(int h) const { return p_sum[static_cast<std::size_t>(h)] / count[static_cast<std::size_t>(h)]; }
        double q(int h) const { return q_sum[static_cast<std::size_t>(h)] / count[static_cast<std::size_t>(h)]; }
    };

    void add_sample(int node, const Timestamp& ts, double p_kw, double q_kvar) {
        auto& day = days_[node][ts.date];
        const auto h = static_cast<std::size_t>(ts.hour());
        day.p_sum[h] += p_kw;
        day.q_sum[h] += q_kvar;
        day.count[h] += 1;
    }

    const std::map<Date, DayRecord>* days_of(int node) const {
        auto it = days_.find(node);
        return it == days_.end() ? nullptr : &it->second;
    }

    std::vector<int> nodes() const {
        std::vector<int> out;
        for (const auto& [node, _] : days_) out.push_back(node);
        return out;
    }

    // Drops days older than `keep_from` to bound memory in long runs.
    void prune_before(Date keep_from) {
        for (auto& [node, days] : days_) days.erase(days.begin(), days.lower_bound(keep_from));
    }

private:
    std::map<int, std::map<Date, DayRecord>> days_;
};

// CSV columns: node_id,timestamp,p_kW,q_kVAr (header required).
inline LoadHistory read_history_csv(std::istream& in) {
    LoadHistory history;
    std::string line;
    if (!std::getline(in, line)) throw FormatError("history CSV is empty");
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        std::string node, ts, p, q;
        if (!std::getline(ss, node, ',') || !std::getline(ss, ts, ',') || !std::getline(ss, p, ',') ||
            !std::getline(ss, q))
            throw FormatError("history CSV line " + std::to_string(lineno) + ": expected 4 fields");
        try {
            history.add_sample(std::stoi(node), parse_timestamp(ts), std::stod(p), std::stod(q));
        } catch (const std::logic_error&) {
            throw FormatError("history CSV line " + std::to_string(lineno) + ": bad number");
        }
    }
    return history;
}

inline LoadHistory read_history_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open history file " + path);
    return read_history_csv(in);
}

// Per consumer (index into `node_ids`) and hour of day, in kW.
struct DemandBox {
    std::vector<int> node_ids;
    std::array<std::vector<double>, 24> lower;
    std::array<std::vector<double>, 24> upper;
};

inline void to_json(nlohmann::json& j, const DemandBox& box) {
    j = nlohmann::json{{"node_ids", box.node_ids}, {"hours", nlohmann::json::array()}};
    for (std::size_t h = 0; h < 24; ++h)
        j["hours"].push_back({{"hour", h}, {"lower_kw", box.lower[h]}, {"upper_kw", box.upper[h]}});
}

inline void from_json(const nlohmann::json& j, DemandBox& box) {
    j.at("node_ids").get_to(box.node_ids);
    for (const auto& entry : j.at("hours")) {
        const auto h = entry.at("hour").get<std::size_t>();
        if (h >= 24) throw FormatError("demand box hour out of range");
        entry.at("lower_kw").get_to(box.lower[h]);
        entry.at("upper_kw").get_to(box.upper[h]);
    }
}

struct DemandBoundsOptions {
    int lookback_days = 35;
    double floor_kw = 1.0;  // the upper bound is never below this
};

/// Demand box for `target_day` from the same day type (weekday or weekend)
/// within the lookback window: lower = min(0, min history), upper =
/// max(floor, max history), taken over all matching complete days.
inline DemandBox compute_demand_bounds(const LoadHistory& history, Date target_day,
                                       const std::vector<int>& node_ids,
                                       const DemandBoundsOptions& opt = {}) {
    DemandBox box;
    box.node_ids = node_ids;
    for (std::size_t h = 0; h < 24; ++h) {
        box.lower[h].assign(node_ids.size(), 0.0);
        box.upper[h].assign(node_ids.size(), opt.floor_kw);
    }
    const bool weekend = is_weekend(target_day);
    const Date first = target_day - std::chrono::days{opt.lookback_days};
    for (std::size_t i = 0; i < node_ids.size(); ++i) {
        const auto* days = history.days_of(node_ids[i]);
        int matched = 0;
        if (days) {
            for (auto it = days->lower_bound(first); it != days->end() && it->first < target_day; ++it) {
                if (is_weekend(it->first) != weekend || !it->second.complete()) continue;
                ++matched;
                for (int h = 0; h < 24; ++h) {
                    const double p = it->second.p(h);
                    auto& lo = box.lower[static_cast<std::size_t>(h)][i];
                    auto& up = box.upper[static_cast<std::size_t>(h)][i];
                    lo = std::min(lo, p);
                    up = std::max(up, p);
                }
            }
        }
        if (matched == 0) throw NoHistory(node_ids[i]);
    }
    return box;
}

}  // namespace dercoord

#endif
