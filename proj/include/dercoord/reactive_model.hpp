#ifndef DERCOORD_REACTIVE_MODEL_HPP
#define DERCOORD_REACTIVE_MODEL_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "dercoord/errors.hpp"

namespace dercoord {

// q = slope * p + intercept (kVAr as a function of kW).
struct ReactiveLine {
    double slope = 0.0;
    double intercept = 0.0;

    double operator()(double p) const { return slope * p + intercept; }
    bool operator==(const ReactiveLine&) const = default;
};

inline void to_json(nlohmann::json& j, const ReactiveLine& l) {
    j = {{"slope", l.slope}, {"intercept", l.intercept}};
}
inline void from_json(const nlohmann::json& j, ReactiveLine& l) {
    j.at("slope").get_to(l.slope);
    j.at("intercept").get_to(l.intercept);
}

// Per hour of day and consumer (index into Network::consumers()).
struct ReactiveBoundModel {
    std::array<std::vector<ReactiveLine>, 24> upper;
    std::array<std::vector<ReactiveLine>, 24> lower;

    std::size_t node_count() const { return upper[0].size(); }

    // Zero-reactive model: both maps return zero.
    static ReactiveBoundModel zero(std::size_t nodes) {
        ReactiveBoundModel m;
        for (int h = 0; h < 24; ++h) {
            m.upper[static_cast<std::size_t>(h)].assign(nodes, {});
            m.lower[static_cast<std::size_t>(h)].assign(nodes, {});
        }
        return m;
    }
};

inline void to_json(nlohmann::json& j, const ReactiveBoundModel& m) {
    j = nlohmann::json::array();
    for (std::size_t h = 0; h < 24; ++h)
        j.push_back({{"hour", h}, {"upper", m.upper[h]}, {"lower", m.lower[h]}});
}
inline void from_json(const nlohmann::json& j, ReactiveBoundModel& m) {
    if (j.size() != 24) throw FormatError("reactive model needs 24 hours");
    for (const auto& entry : j) {
        const auto h = entry.at("hour").get<std::size_t>();
        if (h >= 24) throw FormatError("reactive model hour out of range");
        entry.at("upper").get_to(m.upper[h]);
        entry.at("lower").get_to(m.lower[h]);
    }
}

struct ReactiveSample {
    int node = 0;  // consumer index
    int hour = 0;
    double p = 0.0;
    double q = 0.0;
};

namespace detail {

inline double pinball(double residual, double tau) {
    return residual >= 0.0 ? tau * residual : (tau - 1.0) * residual;
}

// For a fixed slope, the best intercept is the tau-quantile of q - slope p.
// Returns {loss, intercept}.
inline std::pair<double, double> profile_loss(std::span<const double> p, std::span<const double> q,
                                              double slope, double tau, std::vector<double>& work) {
    const std::size_t n = p.size();
    work.resize(n);
    for (std::size_t i = 0; i < n; ++i) work[i] = q[i] - slope * p[i];
    std::size_t k = static_cast<std::size_t>(std::ceil(tau * static_cast<double>(n)));
    k = std::clamp<std::size_t>(k, 1, n) - 1;
    std::nth_element(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(k), work.end());
    const double intercept = work[k];
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) loss += pinball(q[i] - slope * p[i] - intercept, tau);
    return {loss, intercept};
}

}  // namespace detail

/// Linear quantile regression of q on p under the pinball loss.
///
/// The loss profiled over the intercept is convex in the slope, so the slope
/// is bracketed around the least-squares estimate and refined by
/// golden-section search.
inline ReactiveLine fit_quantile_line(std::span<const double> p, std::span<const double> q, double tau) {
    if (p.size() != q.size() || p.empty()) throw std::invalid_argument("quantile fit needs paired samples");
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("quantile level must be in (0, 1)");
    const std::size_t n = p.size();
    std::vector<double> work;
    const auto [pmin, pmax] = std::minmax_element(p.begin(), p.end());
    if (*pmax - *pmin < 1e-12) {
        // All p identical: slope is unidentifiable.
        return {0.0, detail::profile_loss(p, q, 0.0, tau, work).second};
    }

    double mp = 0.0, mq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mp += p[i];
        mq += q[i];
    }
    mp /= static_cast<double>(n);
    mq /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (p[i] - mp) * (q[i] - mq);
        sxx += (p[i] - mp) * (p[i] - mp);
    }
    const double centre = sxy / sxx;
    auto loss = [&](double s) { return detail::profile_loss(p, q, s, tau, work).first; };

    // Convexity: once the loss at an end point is no lower than at the
    // centre, the minimiser lies inside.
    const double f0 = loss(centre);
    double width = std::max(1.0, std::abs(centre));
    for (int k = 0; k < 60 && (loss(centre - width) < f0 || loss(centre + width) < f0); ++k) width *= 2.0;

    constexpr double inv_phi = 0.6180339887498949;
    double a = centre - width;
    double b = centre + width;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = loss(x1);
    double f2 = loss(x2);
    const double stop = 1e-14 * std::max(1.0, std::abs(centre) + width);
    for (int it = 0; it < 400 && (b - a) > stop; ++it) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = loss(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = loss(x2);
        }
    }
    const double slope = 0.5 * (a + b);
    return {slope, detail::profile_loss(p, q, slope, tau, work).second};
}

/// Fits upper and lower reactive maps per consumer and hour of day. Where the
/// two fitted lines cross inside the observed p range the upper intercept is
/// raised so upper >= lower holds over that range.
inline ReactiveBoundModel fit_reactive_bounds(std::span<const ReactiveSample> history, std::size_t nodes,
                                              double upper_pct = 0.90, double lower_pct = 0.10,
                                              std::size_t min_samples = 20) {
    std::vector<std::vector<std::pair<double, double>>> buckets(nodes * 24);
    for (const auto& s : history) {
        if (s.node < 0 || static_cast<std::size_t>(s.node) >= nodes || s.hour < 0 || s.hour >= 24)
            throw std::invalid_argument("reactive sample outside node/hour range");
        buckets[static_cast<std::size_t>(s.node) * 24 + static_cast<std::size_t>(s.hour)].emplace_back(s.p, s.q);
    }
    ReactiveBoundModel model = ReactiveBoundModel::zero(nodes);
    std::vector<double> p, q;
    for (std::size_t i = 0; i < nodes; ++i) {
        for (std::size_t h = 0; h < 24; ++h) {
            const auto& bucket = buckets[i * 24 + h];
            if (bucket.size() < min_samples)
                throw InsufficientData(static_cast<int>(i), static_cast<int>(h), bucket.size());
            p.clear();
            q.clear();
            for (auto [pp, qq] : bucket) {
                p.push_back(pp);
                q.push_back(qq);
            }
            ReactiveLine up = fit_quantile_line(p, q, upper_pct);
            const ReactiveLine low = fit_quantile_line(p, q, lower_pct);
            const auto [pmin, pmax] = std::minmax_element(p.begin(), p.end());
            const double gap = std::min(up(*pmin) - low(*pmin), up(*pmax) - low(*pmax));
            if (gap < 0.0) up.intercept -= gap;
            model.upper[h][i] = up;
            model.lower[h][i] = low;
        }
    }
    return model;
}

}  // namespace dercoord

#endif
