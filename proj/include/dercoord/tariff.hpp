#ifndef DERCOORD_TARIFF_HPP
#define DERCOORD_TARIFF_HPP

#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace dercoord {

enum class TariffPeriod { off_peak, part_peak, peak };

NLOHMANN_JSON_SERIALIZE_ENUM(TariffPeriod, {
    {TariffPeriod::off_peak, "off_peak"},
    {TariffPeriod::part_peak, "part_peak"},
    {TariffPeriod::peak, "peak"},
})

inline int wrap_hour(int h) { return ((h % 24) + 24) % 24; }

/// Daily time-of-use schedule. Peak covers [peak_start, peak_start +
/// peak_hours) and part-peak the `shoulder_hours` on each side; hours wrap
/// around midnight. Rates are $/kWh.
struct TouTariff {
    int peak_start = 16;
    int peak_hours = 5;
    int shoulder_hours = 2;
    double off_peak_rate = 0.25;
    double part_peak_rate = 0.35;
    double peak_rate = 0.50;

    // Peak window whose middle hour is `hour`.
    static TouTariff centered_on(int hour) {
        TouTariff t;
        t.peak_start = wrap_hour(hour - t.peak_hours / 2);
        return t;
    }

    int peak_end() const { return wrap_hour(peak_start + peak_hours); }

    // Hours elapsed since the peak started, in [0, 24).
    int since_peak_start(int hour) const { return wrap_hour(hour - peak_start); }

    TariffPeriod period(int hour) const {
        const int k = since_peak_start(hour);
        if (k < peak_hours) return TariffPeriod::peak;
        if (k < peak_hours + shoulder_hours || k >= 24 - shoulder_hours) return TariffPeriod::part_peak;
        return TariffPeriod::off_peak;
    }

    double rate(int hour) const {
        switch (period(hour)) {
            case TariffPeriod::peak:
                return peak_rate;
            case TariffPeriod::part_peak:
                return part_peak_rate;
            case TariffPeriod::off_peak:
                return off_peak_rate;
        }
        return off_peak_rate;
    }

    // True in the 12 hours leading up to the peak.
    bool pre_peak(int hour) const { return since_peak_start(hour) >= 12; }

    void validate() const {
        if (peak_hours < 1 || shoulder_hours < 0 || peak_hours + 2 * shoulder_hours > 24)
            throw std::invalid_argument("tariff windows do not fit in a day");
        if (peak_start < 0 || peak_start > 23) throw std::invalid_argument("peak_start must be an hour of day");
        if (!(off_peak_rate <= part_peak_rate && part_peak_rate <= peak_rate))
            throw std::invalid_argument("tariff rates must increase toward peak");
    }
};

inline void to_json(nlohmann::json& j, const TouTariff& t) {
    j = {{"peak_start", t.peak_start},       {"peak_hours", t.peak_hours},
         {"shoulder_hours", t.shoulder_hours}, {"off_peak_rate", t.off_peak_rate},
         {"part_peak_rate", t.part_peak_rate}, {"peak_rate", t.peak_rate}};
}

inline void from_json(const nlohmann::json& j, TouTariff& t) {
    TouTariff d;
    t.peak_start = j.value("peak_start", d.peak_start);
    t.peak_hours = j.value("peak_hours", d.peak_hours);
    t.shoulder_hours = j.value("shoulder_hours", d.shoulder_hours);
    t.off_peak_rate = j.value("off_peak_rate", d.off_peak_rate);
    t.part_peak_rate = j.value("part_peak_rate", d.part_peak_rate);
    t.peak_rate = j.value("peak_rate", d.peak_rate);
    t.validate();
}

}  // namespace dercoord

#endif
