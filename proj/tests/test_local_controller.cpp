#include <limits>

#include <gtest/gtest.h>

#include "dercoord/local_controller.hpp"

using namespace dercoord;

namespace {

constexpr double kDelta = 0.25;
const TouTariff kTariff = TouTariff::centered_on(19);  // peak 17:00-22:00

int step_at(int hour, int quarter = 0) { return hour * kStepsPerHour + quarter; }

}  // namespace

TEST(Targets, FollowTariffWindows) {
    const DerUnit s = make_storage(10.0, 5.0, 5.0, 4.0);
    EXPECT_DOUBLE_EQ(*compute_target(kTariff, s, step_at(12), kDelta), 10.0);
    EXPECT_DOUBLE_EQ(*compute_target(kTariff, s, step_at(19), kDelta), 0.0);
    EXPECT_FALSE(compute_target(kTariff, s, step_at(2), kDelta).has_value());
}

TEST(Dispatch, IdleWhenInsideBoundsWithoutTargets) {
    std::vector<DerUnit> units{make_storage(10.0, 5.0, 5.0, 4.0)};
    LCState st;
    st.begin_hour(5.0, -5.0);
    const auto r = dispatch_step(st, units, 2.0, step_at(2), kDelta, kTariff);
    EXPECT_DOUBLE_EQ(r.c[0], 0.0);
    EXPECT_DOUBLE_EQ(r.d[0], 0.0);
    EXPECT_DOUBLE_EQ(r.objective, 0.0);
    EXPECT_DOUBLE_EQ(units[0].soc, 4.0);
}

TEST(Dispatch, StorageErasesExcessAboveUpperBound) {
    const double pu = 3.0, load = 5.0;
    std::vector<DerUnit> units{make_storage(10.0, 4.0, 4.0, 6.0)};
    LCWeights w{1000.0, 1.0};
    LCState st;
    st.begin_hour(pu, -5.0);
    const int step = step_at(19);  // peak: target is Q^min, so discharge also tracks the target
    auto trial = units;
    const auto r = dispatch_step(st, trial, load, step, kDelta, kTariff, w);
    EXPECT_NEAR(r.d[0], 4.0, 1e-9);
    EXPECT_NEAR(r.bound_penalty, 0.0, 1e-9);

    // Off-target hour: only the bound matters, so exactly the excess is discharged.
    LCState st2;
    st2.begin_hour(pu, -5.0);
    auto trial2 = units;
    const auto r2 = dispatch_step(st2, trial2, load, step_at(2), kDelta, kTariff, w);
    EXPECT_NEAR(r2.d[0], 2.0, 1e-9);
    EXPECT_NEAR(r2.bound_penalty, 0.0, 1e-9);

    // Brute force over a 0.05 kW grid agrees with the LP objective.
    const DerUnit& s = units[0];
    const double target = *compute_target(kTariff, s, step, kDelta);
    double best = std::numeric_limits<double>::infinity();
    for (int ic = 0; ic <= 80; ++ic)
        for (int id = 0; id <= 80; ++id) {
            const double c = 0.05 * ic, d = 0.05 * id;
            const double q = s.soc + s.eta_c * kDelta * c - s.eta_d * kDelta * d;
            if (q < 0.0 || q > s.capacity) continue;
            const double net = load + c - d;
            const double obj = w.lambda_b * std::max(0.0, net - pu) + w.lambda_f * std::abs(q - target);
            best = std::min(best, obj);
        }
    EXPECT_LE(r.objective, best + 1e-9);
    EXPECT_GE(r.objective, best - 0.05);
}

TEST(Dispatch, NoRecourseAccumulatesDeviation) {
    std::vector<DerUnit> units{make_storage(10.0, 4.0, 4.0, 0.0)};
    LCState st;
    st.begin_hour(3.0, -5.0);
    const auto r = dispatch_step(st, units, 5.0, step_at(2), kDelta, kTariff);
    EXPECT_NEAR(r.bound_penalty, 2.0, 1e-12);
    EXPECT_NEAR(st.eps_u, -2.0, 1e-12);
}

TEST(Dispatch, CompensatesWithinHour) {
    const double pu = 3.0;
    std::vector<DerUnit> units{make_storage(10.0, 4.0, 4.0, 5.0)};
    LCState st;
    st.begin_hour(pu, -10.0);
    std::vector<double> nets;
    for (int q = 0; q < 4; ++q) {
        const double load = std::array<double, 4>{pu + 1.0, pu - 1.0, pu, pu}[static_cast<std::size_t>(q)];
        nets.push_back(dispatch_step(st, units, load, step_at(2, q), kDelta, kTariff).net);
    }
    EXPECT_TRUE(hourly_average_respected(nets, pu, -10.0));
}

TEST(Dispatch, PersistentExcessBreaksHourlyAverage) {
    std::vector<DerUnit> units;
    LCState st;
    st.begin_hour(3.0, -10.0);
    std::vector<double> nets;
    for (int q = 0; q < 4; ++q) nets.push_back(dispatch_step(st, units, 4.0, step_at(2, q), kDelta, kTariff).net);
    EXPECT_FALSE(hourly_average_respected(nets, 3.0, -10.0));
}

TEST(Dispatch, BelowLowerBoundCharges) {
    std::vector<DerUnit> units{make_storage(10.0, 4.0, 4.0, 2.0)};
    LCState st;
    st.begin_hour(5.0, -1.0);
    const auto r = dispatch_step(st, units, -3.0, step_at(2), kDelta, kTariff);
    EXPECT_NEAR(r.c[0], 2.0, 1e-9);
    EXPECT_NEAR(r.net, -1.0, 1e-9);
}

TEST(Dispatch, EVMeetsDeadlineOverWindow) {
    std::vector<DerUnit> units{make_ev(4.0, {{step_at(0), step_at(4), 10.0}})};
    LCState st;
    DerAudit audit;
    for (int step = 0; step < step_at(4); ++step) {
        if (step % kStepsPerHour == 0) st.begin_hour(0.5, -5.0);
        const DerUnit before = units[0];
        const auto r = dispatch_step(st, units, 0.0, step, kDelta, kTariff);
        audit_transition(audit, before, units[0], step, r.c[0], r.d[0], kDelta);
    }
    EXPECT_NEAR(units[0].soc, 10.0, 1e-9);
    EXPECT_EQ(audit.violations, 0);
}

TEST(Dispatch, DeterministicAcrossCalls) {
    for (int rep = 0; rep < 2; ++rep) {
        std::vector<DerUnit> a{make_storage(10.0, 4.0, 4.0, 5.0), make_storage(6.0, 3.0, 3.0, 1.0)};
        std::vector<DerUnit> b = a;
        LCState sa, sb;
        sa.begin_hour(1.0, -1.0);
        sb.begin_hour(1.0, -1.0);
        const auto ra = dispatch_step(sa, a, 3.5, step_at(19), kDelta, kTariff);
        const auto rb = dispatch_step(sb, b, 3.5, step_at(19), kDelta, kTariff);
        EXPECT_EQ(ra.c, rb.c);
        EXPECT_EQ(ra.d, rb.d);
    }
}

TEST(Dispatch, UnboundedSupplyTracksTargets) {
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<DerUnit> units{make_storage(10.0, 4.0, 4.0, 5.0)};
    LCState st;
    st.begin_hour(inf, -inf);
    const auto pre = dispatch_step(st, units, 1.0, step_at(10), kDelta, kTariff);
    EXPECT_GT(pre.c[0], 0.0);
    EXPECT_DOUBLE_EQ(pre.d[0], 0.0);
    const auto peak = dispatch_step(st, units, 1.0, step_at(19), kDelta, kTariff);
    EXPECT_GT(peak.d[0], 0.0);
    EXPECT_DOUBLE_EQ(peak.c[0], 0.0);
}
