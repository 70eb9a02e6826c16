#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dercoord/simulation.hpp"

using namespace dercoord;

namespace {

RunConfig small_config() {
    RunConfig cfg;
    cfg.consumers = 4;
    cfg.seed = 3;
    cfg.days = 1;
    cfg.warmup_days = 7;
    cfg.fit_samples = 200;
    return cfg;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("dercoord_sim_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST(Simulation, NoDersBoundsMatchesLocal) {
    RunConfig cfg = small_config();
    cfg.knobs = {0.0, 0.0, 0.0, 0.0};
    cfg.discount = 1.0;
    const Scenario sc = make_run_scenario(cfg);
    const PreparedRun pr = prepare_run(sc, cfg);
    const auto b = simulate(pr, ControllerKind::bounds);
    const auto l = simulate(pr, ControllerKind::local);
    EXPECT_EQ(b.summary.overload_pct, l.summary.overload_pct);
    EXPECT_EQ(b.summary.voltage_pct, l.summary.voltage_pct);
    EXPECT_EQ(b.summary.peak_kw, l.summary.peak_kw);
    EXPECT_EQ(b.summary.cost_billed, l.summary.cost_billed);
    EXPECT_EQ(b.summary.cost_undiscounted, l.summary.cost_undiscounted);
    ASSERT_EQ(b.day_reports.size(), l.day_reports.size());
    for (std::size_t d = 0; d < b.day_reports.size(); ++d) {
        EXPECT_EQ(nlohmann::json(b.day_reports[d].voltage), nlohmann::json(l.day_reports[d].voltage));
        EXPECT_EQ(nlohmann::json(b.day_reports[d].transformer), nlohmann::json(l.day_reports[d].transformer));
    }
    EXPECT_EQ(b.summary.der_checks, 0);
}

TEST(Simulation, IdenticalConfigsGiveIdenticalOutputs) {
    RunConfig cfg = small_config();
    const auto a = run(cfg);
    const auto b = run(cfg);
    EXPECT_EQ(nlohmann::json(a).dump(), nlohmann::json(b).dump());
    const auto d1 = scratch_dir("det1"), d2 = scratch_dir("det2");
    write_run_outputs(d1, {a});
    write_run_outputs(d2, {b});
    for (const char* f : {"report.json", "violations.csv", "dispatch.csv"})
        EXPECT_EQ(slurp(d1 / f), slurp(d2 / f)) << f;
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
}

TEST(Simulation, EveryControllerKeepsDerInvariants) {
    RunConfig cfg = small_config();
    cfg.knobs = {0.9, 0.4, 0.9, 0.5};
    const Scenario sc = make_run_scenario(cfg);
    const PreparedRun pr = prepare_run(sc, cfg);
    for (auto k : {ControllerKind::bounds, ControllerKind::centralized, ControllerKind::local}) {
        const auto r = simulate(pr, k);
        EXPECT_GT(r.summary.der_checks, 0) << r.controller;
        EXPECT_EQ(r.summary.der_violations, 0) << r.controller;
    }
}

TEST(Simulation, ReportRoundTrips) {
    const auto r = run(small_config());
    const auto doc = nlohmann::json(r);
    const auto back = doc.get<SimulationReport>();
    EXPECT_EQ(nlohmann::json(back), doc);
}

TEST(Simulation, ViolationsCsvHasOneRowPerElementDay) {
    RunConfig cfg = small_config();
    cfg.days = 2;
    const auto r = run(cfg);
    std::ostringstream out;
    write_violations_csv(out, {r});
    std::istringstream in(out.str());
    std::string line;
    int rows = -1;
    while (std::getline(in, line)) ++rows;
    const Scenario sc = make_run_scenario(cfg);
    const int elements = (sc.net.node_count() - 1) + static_cast<int>(sc.net.transformers.size());
    EXPECT_EQ(rows, 2 * elements);
}

TEST(Simulation, RejectsShortScenario) {
    RunConfig cfg = small_config();
    cfg.days = 3;
    const Scenario sc = generate_scenario(generate_radial_network(4, 3), cfg.knobs, 3, 5, parse_date(cfg.start_date));
    const auto dir = scratch_dir("short");
    std::filesystem::create_directories(dir);
    write_text(dir / "sc.json", nlohmann::json(sc).dump());
    cfg.scenario_path = (dir / "sc.json").string();
    EXPECT_THROW(make_run_scenario(cfg), std::invalid_argument);
    std::filesystem::remove_all(dir);
}

TEST(RunConfig, FileLayersOverDefaults) {
    RunConfig cfg;
    const auto j = nlohmann::json::parse(R"({"days": 3, "knobs": {"ev": 0.4}, "tolerances": {"gc": 1e-5}})");
    from_json(j, cfg);
    EXPECT_EQ(cfg.days, 3);
    EXPECT_DOUBLE_EQ(cfg.knobs.ev, 0.4);
    EXPECT_DOUBLE_EQ(cfg.knobs.pv, RunConfig{}.knobs.pv);
    EXPECT_DOUBLE_EQ(cfg.gc_tol, 1e-5);
    EXPECT_DOUBLE_EQ(cfg.pf_tol, RunConfig{}.pf_tol);
    EXPECT_EQ(cfg.warmup_days, 35);
}

TEST(RunConfig, RoundTripsAndValidates) {
    RunConfig cfg;
    cfg.controller = ControllerKind::centralized;
    cfg.network_seed = 9;
    RunConfig back;
    from_json(nlohmann::json(cfg), back);
    EXPECT_EQ(nlohmann::json(back), nlohmann::json(cfg));
    cfg.gc_tol = 0.0;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    EXPECT_THROW(parse_controller("greedy"), std::invalid_argument);
    EXPECT_EQ(parse_controller("central"), ControllerKind::centralized);
}

TEST(Ensemble, IdenticalValuesHaveZeroError) {
    const Stat s = mean_se({4.0, 4.0, 4.0});
    EXPECT_DOUBLE_EQ(s.mean, 4.0);
    EXPECT_DOUBLE_EQ(s.se, 0.0);
}

TEST(Ensemble, TwoSeedsGiveHalfTheDifference) {
    const Stat s = mean_se({10.0, 13.0});
    EXPECT_DOUBLE_EQ(s.mean, 11.5);
    EXPECT_NEAR(s.se, 1.5, 1e-12);
}

TEST(Ensemble, SixteenSeedsMatchDirectComputation) {
    const std::vector<double> xs{12.5, 3.25, 7.0,  0.0,  41.75, 18.0, 9.5, 22.25,
                                 5.0,  14.75, 30.5, 2.0, 11.0,  26.25, 8.5, 16.0};
    const Stat s = mean_se(xs);
    EXPECT_EQ(s.n, 16);
    EXPECT_NEAR(s.mean, 14.265625, 1e-12);
    EXPECT_NEAR(s.se, 2.833713401285493, 1e-12);
}

TEST(Ensemble, ResultsDoNotDependOnJobCount) {
    RunConfig cfg = small_config();
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    const std::vector<ControllerKind> ks{ControllerKind::bounds, ControllerKind::local};
    const auto a = run_ensemble(cfg, seeds, ks, 1);
    const auto b = run_ensemble(cfg, seeds, ks, 3);
    ASSERT_EQ(a.size(), 6u);
    EXPECT_EQ(nlohmann::json(a).dump(), nlohmann::json(b).dump());
    EXPECT_EQ(a[0].seed, 1u);
    EXPECT_EQ(a[1].controller, "local");

    const auto stats = aggregate_reports("bounds", a);
    EXPECT_EQ(stats.overload_pct.n, 3);
    std::ostringstream csv;
    write_compare_csv(csv, {stats, aggregate_reports("local", a)});
    std::istringstream lines(csv.str());
    std::string header, first, second, extra;
    std::getline(lines, header);
    std::getline(lines, first);
    std::getline(lines, second);
    EXPECT_EQ(first.rfind("bounds,3,", 0), 0u);
    EXPECT_EQ(second.rfind("local,3,", 0), 0u);
    EXPECT_FALSE(std::getline(lines, extra));
}
