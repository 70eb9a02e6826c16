#include <cmath>

#include <gtest/gtest.h>

#include "dercoord/powerflow.hpp"
#include "dercoord/random.hpp"

using namespace dercoord;

namespace {

Network two_bus(double r, double x) {
    Network net;
    net.nodes = {{1, NodeKind::substation}, {2, NodeKind::consumer}};
    net.lines = {{1, 2, r, x}};
    net.transformers = {{1, 2, 1.0}};
    return net;
}

// |V2| for a single line fed at 1.0 p.u.: V^4 - (1 - 2(rP + xQ)) V^2 + (r^2 + x^2)(P^2 + Q^2) = 0.
double closed_form_v2(double r, double x, double p, double q) {
    const double b = 1.0 - 2.0 * (r * p + x * q);
    const double c = (r * r + x * x) * (p * p + q * q);
    return std::sqrt((b + std::sqrt(b * b - 4.0 * c)) / 2.0);
}

InjectionVector injection(std::vector<double> p, std::vector<double> q) {
    InjectionVector inj;
    inj.p = std::move(p);
    inj.q = std::move(q);
    return inj;
}

}  // namespace

TEST(PowerFlow, ZeroInjectionIsFlat) {
    const auto net = generate_radial_network(8, 1);
    const auto sol = solve_pf(net, injection(std::vector<double>(8, 0.0), std::vector<double>(8, 0.0)));
    EXPECT_TRUE(sol.converged);
    for (double v : sol.voltage) EXPECT_DOUBLE_EQ(v, 1.0);
    for (double t : sol.tau) EXPECT_DOUBLE_EQ(t, 0.0);
}

TEST(PowerFlow, TwoBusMatchesClosedForm) {
    const auto sol = solve_pf(two_bus(0.01, 0.01), injection({0.1}, {0.0}));
    EXPECT_NEAR(sol.voltage[1], closed_form_v2(0.01, 0.01, 0.1, 0.0), 1e-8);
    EXPECT_LE(sol.max_residual, 1e-8);
}

TEST(PowerFlow, TwoBusClosedFormWithReactiveAndExport) {
    for (auto [p, q] : {std::pair{0.3, 0.1}, std::pair{-0.2, 0.05}, std::pair{0.5, -0.2}}) {
        const auto sol = solve_pf(two_bus(0.02, 0.03), injection({p}, {q}));
        EXPECT_NEAR(sol.voltage[1], closed_form_v2(0.02, 0.03, p, q), 1e-8) << p << " " << q;
        // Transformer sits on the only line: flow = load + line losses.
        const double i2 = (p * p + q * q) / (sol.voltage[1] * sol.voltage[1]);
        EXPECT_NEAR(sol.transformer_flow[0].real(), p + 0.02 * i2, 1e-8);
        EXPECT_NEAR(sol.transformer_flow[0].imag(), q + 0.03 * i2, 1e-8);
    }
}

TEST(PowerFlow, DoublingLeafLoadLowersItsVoltage) {
    const auto net = generate_radial_network(8, 7);
    const RadialPowerFlow pf(net);
    std::vector<double> p(8, 0.1), q(8, 0.03);
    const auto base = pf.solve(injection(p, q));
    const auto ids = net.consumers();
    for (std::size_t c = 0; c < ids.size(); ++c) {
        auto p2 = p;
        p2[c] *= 2.0;
        const auto sol = pf.solve(injection(p2, q));
        const auto idx = static_cast<std::size_t>(ids[c] - 1);
        EXPECT_LT(sol.voltage[idx], base.voltage[idx]);
    }
}

TEST(PowerFlow, ResidualsAndFlowsConsistent) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto net = generate_radial_network(12, static_cast<std::uint64_t>(trial));
        const RadialPowerFlow pf(net);
        std::vector<double> p(12), q(12);
        for (int i = 0; i < 12; ++i) {
            p[static_cast<std::size_t>(i)] = rng.uniform(-0.2, 0.3);
            q[static_cast<std::size_t>(i)] = rng.uniform(-0.05, 0.1);
        }
        const auto sol = pf.solve(injection(p, q));
        ASSERT_TRUE(sol.converged);
        EXPECT_LE(sol.max_residual, 1e-8);
        for (std::size_t t = 0; t < sol.tau.size(); ++t)
            EXPECT_NEAR(sol.tau[t], std::norm(sol.transformer_flow[t]), 1e-14);
    }
}

TEST(PowerFlow, VoltageNonIncreasingAwayFromSubstation) {
    const auto net = generate_radial_network(16, 11);
    const RadialPowerFlow pf(net);
    Rng rng(2);
    std::vector<double> p(16), q(16);
    for (std::size_t i = 0; i < 16; ++i) {
        p[i] = rng.uniform(0.0, 0.3);
        q[i] = rng.uniform(0.0, 0.1);
    }
    const auto sol = pf.solve(injection(p, q));
    for (std::size_t v = 1; v < sol.voltage.size(); ++v) {
        const auto parent = static_cast<std::size_t>(pf.tree().parent[v]);
        EXPECT_LE(sol.voltage[v], sol.voltage[parent] + 1e-12);
    }
}

TEST(PowerFlow, NonConvergenceReported) {
    // Load far beyond the line's transfer limit has no solution.
    EXPECT_THROW(solve_pf(two_bus(0.5, 0.5), injection({5.0}, {5.0})), NonConvergence);
    try {
        solve_pf(two_bus(0.5, 0.5), injection({5.0}, {5.0}), 1e-8, 7);
    } catch (const NonConvergence& e) {
        EXPECT_LE(e.iterations(), 7);
    }
}

TEST(PowerFlow, RejectsBadArguments) {
    const auto net = two_bus(0.01, 0.01);
    EXPECT_THROW(solve_pf(net, injection({0.1, 0.2}, {0.0, 0.0})), std::invalid_argument);
    EXPECT_THROW(solve_pf(net, injection({0.1}, {0.0}), 0.0), std::invalid_argument);
}
