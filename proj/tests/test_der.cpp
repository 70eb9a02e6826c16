#include <gtest/gtest.h>

#include "dercoord/der.hpp"
#include "dercoord/tariff.hpp"

using namespace dercoord;

TEST(StepDynamics, StorageChargesWithEfficiency) {
    DerUnit s = make_storage(10.0, 5.0, 5.0, 0.0, 0.93, 0.93);
    step_dynamics(s, 0, 4.0, 0.0, 0.25);
    EXPECT_NEAR(s.soc, 0.93, 1e-12);
}

TEST(StepDynamics, IdleKeepsState) {
    DerUnit s = make_storage(10.0, 5.0, 5.0, 3.3);
    step_dynamics(s, 7, 0.0, 0.0, 0.25);
    EXPECT_DOUBLE_EQ(s.soc, 3.3);
}

TEST(StepDynamics, ChargingFullStorageThrows) {
    DerUnit s = make_storage(10.0, 5.0, 5.0, 10.0);
    EXPECT_THROW(step_dynamics(s, 0, 1.0, 0.0, 0.25), BoundsViolation);
}

TEST(StepDynamics, PowerLimitsEnforced) {
    DerUnit s = make_storage(10.0, 5.0, 2.0, 5.0);
    EXPECT_THROW(step_dynamics(s, 0, 6.0, 0.0, 0.25), BoundsViolation);
    EXPECT_THROW(step_dynamics(s, 0, 0.0, 3.0, 0.25), BoundsViolation);
    DerUnit ev = make_ev(6.3, {{0, 8, 5.0}});
    EXPECT_THROW(step_dynamics(ev, 0, 0.0, 1.0, 0.25), BoundsViolation);
}

TEST(StepDynamics, DischargeUsesEfficiency) {
    DerUnit s = make_storage(10.0, 4.0, 4.0, 5.0, 0.9, 0.8);
    step_dynamics(s, 0, 0.0, 4.0, 0.25);
    EXPECT_NEAR(s.soc, 5.0 - 0.8, 1e-12);
}

TEST(ThermalEnvelope, NoFlexibilityPinsBaseline) {
    for (int t = 1; t <= 96; ++t) {
        const double base = 10.0 * t / 96.0;
        const auto e = thermal_envelope(base, 10.0, 0.0, t, 96, 0.25, 100.0);
        EXPECT_NEAR(e.lo, base, 1e-12);
        EXPECT_NEAR(e.hi, base, 1e-12);
    }
}

TEST(ThermalEnvelope, EndOfDayEquality) {
    const auto e = thermal_envelope(10.0, 10.0, 0.4, 96, 96, 0.25, 3.0);
    EXPECT_DOUBLE_EQ(e.lo, 10.0);
    EXPECT_DOUBLE_EQ(e.hi, 10.0);
}

TEST(ThermalEnvelope, MidDayWithFlexibility) {
    const auto e = thermal_envelope(6.0, 10.0, 0.3, 48, 96, 0.25, 1000.0);
    EXPECT_NEAR(e.lo, 3.0, 1e-12);
    EXPECT_NEAR(e.hi, 9.0, 1e-12);
}

TEST(ThermalEnvelope, ContainsBaselineAndEndsAtBaseline) {
    std::vector<double> base(2 * kStepsPerDay);
    for (std::size_t k = 0; k < base.size(); ++k) base[k] = 1.0 + 0.5 * std::sin(0.1 * static_cast<double>(k));
    DerUnit th = make_thermal(base, 0.25, 0.25);
    for (int step = 0; step < 2 * kStepsPerDay; ++step) {
        const auto e = soc_envelope(th, step, 0.25);
        const double qb = th.baseline_cum[static_cast<std::size_t>(step)];
        EXPECT_LE(e.lo, qb + 1e-12);
        EXPECT_GE(e.hi, qb - 1e-12);
    }
    // Greedy early consumption stays feasible and lands on the daily total.
    for (int step = 0; step < kStepsPerDay; ++step) {
        const auto e = soc_envelope(th, step, 0.25);
        const double q0 = state_before(th, step);
        const double c = std::clamp((e.hi - q0) / 0.25, 0.0, th.c_max);
        step_dynamics(th, step, c, 0.0, 0.25);
    }
    EXPECT_NEAR(th.soc, th.baseline_cum[kStepsPerDay - 1], 1e-9);
    EXPECT_DOUBLE_EQ(state_before(th, kStepsPerDay), 0.0);
}

TEST(EVEnvelope, DeadlineForcesCharging) {
    DerUnit ev = make_ev(4.0, {{10, 18, 6.0}});
    // 8 steps at 4 kW deliver 8 kWh; the last 6 steps are forced.
    EXPECT_DOUBLE_EQ(soc_envelope(ev, 10, 0.25).lo, 0.0);
    EXPECT_NEAR(soc_envelope(ev, 12, 0.25).lo, 6.0 - 5.0, 1e-12);
    EXPECT_DOUBLE_EQ(soc_envelope(ev, 17, 0.25).lo, 6.0);
    EXPECT_DOUBLE_EQ(soc_envelope(ev, 17, 0.25).hi, 6.0);
    EXPECT_DOUBLE_EQ(charge_limit(ev, 9), 0.0);
    EXPECT_DOUBLE_EQ(charge_limit(ev, 18), 0.0);
}

TEST(EVEnvelope, WindowEndsAtRequiredEnergy) {
    DerUnit ev = make_ev(4.0, {{0, 8, 6.0}, {20, 24, 2.0}});
    DerAudit audit;
    for (int step = 0; step < 30; ++step) {
        const auto e = soc_envelope(ev, step, 0.25);
        const double q0 = state_before(ev, step);
        const double c = std::clamp((e.lo - q0) / 0.25, 0.0, charge_limit(ev, step));
        const DerUnit before = ev;
        step_dynamics(ev, step, c, 0.0, 0.25);
        audit_transition(audit, before, ev, step, c, 0.0, 0.25);
        if (step == 7) {
            EXPECT_NEAR(ev.soc, 6.0, 1e-12);
        }
        if (step == 23) {
            EXPECT_NEAR(ev.soc, 2.0, 1e-12);
        }
    }
    EXPECT_EQ(audit.violations, 0);
    EXPECT_GT(audit.checks, 0);
}

TEST(DerAudit, FlagsBrokenTransition) {
    DerUnit s = make_storage(10.0, 5.0, 5.0, 9.9);
    DerUnit after = s;
    after.soc = 11.0;
    DerAudit audit;
    audit_transition(audit, s, after, 0, 5.0, 0.0, 0.25);
    EXPECT_GT(audit.violations, 0);
}

TEST(DerJson, RoundTrip) {
    std::vector<DerUnit> units{make_storage(8.0, 4.0, 4.0, 2.0), make_ev(6.3, {{3, 9, 4.5}}),
                               make_thermal(std::vector<double>(96, 0.5), 0.2, 0.25)};
    for (const auto& u : units) {
        const DerUnit back = nlohmann::json(u).get<DerUnit>();
        EXPECT_EQ(back, u);
    }
}

TEST(Tariff, PeriodsAroundPeak) {
    const TouTariff t = TouTariff::centered_on(19);
    EXPECT_EQ(t.peak_start, 17);
    EXPECT_EQ(t.period(17), TariffPeriod::peak);
    EXPECT_EQ(t.period(21), TariffPeriod::peak);
    EXPECT_EQ(t.period(22), TariffPeriod::part_peak);
    EXPECT_EQ(t.period(15), TariffPeriod::part_peak);
    EXPECT_EQ(t.period(2), TariffPeriod::off_peak);
    EXPECT_TRUE(t.pre_peak(12));
    EXPECT_TRUE(t.pre_peak(5));
    EXPECT_FALSE(t.pre_peak(4));
    EXPECT_FALSE(t.pre_peak(19));
}

TEST(Tariff, WrapsMidnight) {
    const TouTariff t = TouTariff::centered_on(1);
    EXPECT_EQ(t.period(23), TariffPeriod::peak);
    EXPECT_EQ(t.period(3), TariffPeriod::peak);
    EXPECT_EQ(t.period(4), TariffPeriod::part_peak);
    EXPECT_EQ(t.period(12), TariffPeriod::off_peak);
    const TouTariff back = nlohmann::json(t).get<TouTariff>();
    EXPECT_EQ(back.peak_start, t.peak_start);
}
