#include <gtest/gtest.h>

#include "dercoord/metrics.hpp"

using namespace dercoord;

TEST(VoltageMetric, NominalVoltageIsClean) {
    const auto r = voltage_violations({std::vector<double>(8, 1.0)});
    EXPECT_FALSE(r[0].flag);
    EXPECT_DOUBLE_EQ(r[0].worst_pct, 0.0);
}

TEST(VoltageMetric, LowVoltageFlagged) {
    const auto r = voltage_violations({std::vector<double>(8, 0.94)});
    EXPECT_TRUE(r[0].flag);
    EXPECT_NEAR(r[0].worst_pct, 6.0, 1e-9);
}

TEST(VoltageMetric, HalfHourDipAveragesOut) {
    const auto r = voltage_violations({{0.94, 0.94, 1.0, 1.0}});
    EXPECT_FALSE(r[0].flag);
    EXPECT_NEAR(r[0].worst_pct, 3.0, 1e-9);
}

TEST(TransformerMetric, RatedLoadingIsClean) {
    const auto r = transformer_overloads({std::vector<double>(16, 4.0)}, {2.0});
    EXPECT_FALSE(r[0].flag);
    EXPECT_NEAR(r[0].worst_pct, 100.0, 1e-9);
}

TEST(TransformerMetric, SustainedOverloadFlagged) {
    const auto r = transformer_overloads({std::vector<double>(16, 1.3 * 1.3)}, {1.0});
    EXPECT_TRUE(r[0].flag);
    EXPECT_NEAR(r[0].worst_pct, 130.0, 1e-9);
}

TEST(TransformerMetric, FirstWindowOverload) {
    std::vector<double> tau(16, 1.0);
    for (int t = 0; t < 8; ++t) tau[static_cast<std::size_t>(t)] = 1.21 * 1.21;
    const auto r = transformer_overloads({tau}, {1.0});
    EXPECT_TRUE(r[0].flag);
    EXPECT_NEAR(r[0].worst_pct, 121.0, 1e-9);
}

TEST(TransformerMetric, ShortTraceRejected) {
    EXPECT_THROW(transformer_overloads({std::vector<double>(7, 1.0)}, {1.0}), std::invalid_argument);
}

TEST(VoltageMetric, WorseTraceNeverClearsFlag) {
    std::vector<double> good(12, 1.0);
    good[4] = good[5] = good[6] = good[7] = 0.93;
    std::vector<double> worse = good;
    for (auto& v : worse) v -= 0.01;
    EXPECT_TRUE(voltage_violations({good})[0].flag);
    EXPECT_TRUE(voltage_violations({worse})[0].flag);
}

TEST(Cost, AlwaysInBoundsGetsDiscount) {
    const TouTariff tariff;
    std::vector<double> net(96, 2.0);
    const auto c = electricity_cost(net, tariff, std::vector<HourBounds>(24), 0.25);
    EXPECT_NEAR(c.billed, 0.8 * c.undiscounted, 1e-12);
    EXPECT_EQ(c.hours_in_bounds, 24);
}

TEST(Cost, NeverInBoundsPaysFull) {
    const TouTariff tariff;
    std::vector<double> net(96, 2.0);
    const auto c = electricity_cost(net, tariff, std::vector<HourBounds>(24, HourBounds{1.0, 0.0}), 0.25);
    EXPECT_NEAR(c.billed, c.undiscounted, 1e-12);
    // Undiscounted cost by hand: 2 kW for an hour at each hourly rate.
    double expect = 0.0;
    for (int h = 0; h < 24; ++h) expect += 2.0 * tariff.rate(h);
    EXPECT_NEAR(c.undiscounted, expect, 1e-12);
}

TEST(Cost, ZeroNetEnergyCostsNothing) {
    const TouTariff tariff;
    std::vector<double> net(96, 0.0);
    const auto c = electricity_cost(net, tariff, {}, 0.25);
    EXPECT_DOUBLE_EQ(c.billed, 0.0);
}

TEST(Cost, ExportCreditedAndDiscountInRange) {
    const TouTariff tariff;
    std::vector<double> net(96);
    for (std::size_t t = 0; t < net.size(); ++t) net[t] = (t % 7 < 3) ? -1.5 : 2.5;
    std::vector<HourBounds> b(24, HourBounds{2.0, -1.0});
    const auto c = electricity_cost(net, tariff, b, 0.25);
    EXPECT_GE(c.billed, 0.8 * c.undiscounted - 1e-12);
    EXPECT_LE(c.billed, c.undiscounted + 1e-12);
}

TEST(PeakLoad, FlatAndSpike) {
    EXPECT_DOUBLE_EQ(peak_load(std::vector<double>(10, 100.0)), 100.0);
    std::vector<double> spike(10, 100.0);
    spike[3] = 150.0;
    EXPECT_DOUBLE_EQ(peak_load(spike), 150.0);
}
