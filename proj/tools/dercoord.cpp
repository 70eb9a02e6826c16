// dercoord command-line tool.
//
// Exit codes: 0 success, 2 bad arguments or configuration, 1 runtime failure.
// Errors go to stderr as one JSON object per line.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dercoord/simulation.hpp"

namespace fs = std::filesystem;
using namespace dercoord;

namespace {

constexpr const char* kOutputDirEnv = "DERCOORD_OUTPUT_DIR";

// Bad arguments or configuration (exit 2).
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

int report_error(int code, const std::string& kind, const std::string& message) {
    const nlohmann::json j{{"error", {{"code", code}, {"kind", kind}, {"message", message}}}};
    std::cerr << j.dump() << '\n';
    return code;
}

void write_or_print(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    const fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_text(p, text);
}

nlohmann::json read_json_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw UsageError(what + " not found: " + path);
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open " + what + ": " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(what + " " + path + " is not valid JSON: " + e.what());
    }
}

// "1,2,5-8" -> {1, 2, 5, 6, 7, 8}
std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        try {
            const auto dash = tok.find('-');
            if (dash == std::string::npos) {
                out.push_back(std::stoull(tok));
                continue;
            }
            const auto lo = std::stoull(tok.substr(0, dash)), hi = std::stoull(tok.substr(dash + 1));
            if (hi < lo) throw UsageError("empty seed range " + tok);
            for (auto s = lo; s <= hi; ++s) out.push_back(s);
        } catch (const std::logic_error&) {
            throw UsageError("bad seed list entry '" + tok + "'");
        }
    }
    if (out.empty()) throw UsageError("seed list is empty");
    return out;
}

std::vector<ControllerKind> parse_controller_list(const std::string& text) {
    std::vector<ControllerKind> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) out.push_back(parse_controller(tok));
    if (out.empty()) throw UsageError("controller list is empty");
    return out;
}

// Run options shared by `run` and `compare`. Each flag that appears on the
// command line overrides the config file, which overrides the defaults.
struct RunFlags {
    std::string config_path;
    std::vector<std::function<void(RunConfig&)>> setters;
    CLI::Option* seed = nullptr;
    CLI::Option* output_dir = nullptr;

    template <class T, class F>
    CLI::Option* add(CLI::App* app, const std::string& name, const std::string& desc, F apply) {
        auto value = std::make_shared<T>();
        CLI::Option* opt = app->add_option(name, *value, desc);
        setters.push_back([opt, value, apply](RunConfig& c) {
            if (opt->count() > 0) apply(c, *value);
        });
        return opt;
    }

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "JSON run configuration");
        add<std::string>(app, "--scenario", "Scenario JSON (otherwise one is generated)",
                         [](RunConfig& c, const std::string& v) { c.scenario_path = v; });
        add<std::string>(app, "--network", "Network JSON used when generating the scenario",
                         [](RunConfig& c, const std::string& v) { c.network_path = v; });
        add<int>(app, "--consumers", "Consumers in a generated network",
                 [](RunConfig& c, int v) { c.consumers = v; })
            ->check(CLI::PositiveNumber);
        seed = add<std::uint64_t>(app, "--seed", "Scenario seed",
                                  [](RunConfig& c, std::uint64_t v) { c.seed = v; });
        add<std::uint64_t>(app, "--network-seed", "Network seed (defaults to --seed)",
                           [](RunConfig& c, std::uint64_t v) { c.network_seed = v; });
        add<double>(app, "--pv", "Share of consumers with PV", [](RunConfig& c, double v) { c.knobs.pv = v; });
        add<double>(app, "--ev", "EV share of network energy", [](RunConfig& c, double v) { c.knobs.ev = v; });
        add<double>(app, "--storage", "Share of PV consumers with storage",
                    [](RunConfig& c, double v) { c.knobs.storage = v; });
        add<double>(app, "--phi", "Flexible share of thermal load", [](RunConfig& c, double v) { c.knobs.phi = v; });
        add<std::string>(app, "--start-date", "First scenario day, YYYY-MM-DD",
                         [](RunConfig& c, const std::string& v) { c.start_date = v; });
        add<std::string>(app, "--controller", "bounds, centralized (central) or local",
                         [](RunConfig& c, const std::string& v) { c.controller = parse_controller(v); });
        add<int>(app, "--days", "Simulated days after the warm-up", [](RunConfig& c, int v) { c.days = v; });
        add<int>(app, "--warmup-days", "History days run under the local heuristic",
                 [](RunConfig& c, int v) { c.warmup_days = v; });
        add<double>(app, "--gc-tol", "Global controller tolerance", [](RunConfig& c, double v) { c.gc_tol = v; });
        add<double>(app, "--pf-tol", "Power flow tolerance", [](RunConfig& c, double v) { c.pf_tol = v; });
        add<double>(app, "--ipm-tol", "Centralized LP tolerance", [](RunConfig& c, double v) { c.ipm_tol = v; });
        add<int>(app, "--fit-samples", "Samples for the linear model fit",
                 [](RunConfig& c, int v) { c.fit_samples = v; });
        add<double>(app, "--discount", "Price factor for hours kept inside the bounds",
                    [](RunConfig& c, double v) { c.discount = v; });
        add<double>(app, "--lambda-b", "Local controller bound weight",
                    [](RunConfig& c, double v) { c.lc.lambda_b = v; });
        add<double>(app, "--lambda-f", "Local controller flexibility weight",
                    [](RunConfig& c, double v) { c.lc.lambda_f = v; });
        output_dir = add<std::string>(app, "--output-dir,-o", "Output directory (env " + std::string(kOutputDirEnv) + ")",
                                      [](RunConfig& c, const std::string& v) { c.output_dir = v; });
        add<bool>(app, "--write-dispatch", "Write per-step dispatch.csv",
                  [](RunConfig& c, bool v) { c.write_dispatch = v; });
    }

    // Defaults, then file, then environment (output dir only), then flags.
    RunConfig resolve(bool seed_required = true) const {
        RunConfig cfg;
        bool seed_given = seed->count() > 0;
        if (!config_path.empty()) {
            const auto j = read_json_file(config_path, "config");
            if (!j.is_object()) throw UsageError("config " + config_path + " must be a JSON object");
            try {
                from_json(j, cfg);
            } catch (const nlohmann::json::exception& e) {
                throw UsageError("config " + config_path + ": " + e.what());
            }
            seed_given = seed_given || j.contains("seed");
        }
        if (const char* env = std::getenv(kOutputDirEnv); env && *env) cfg.output_dir = env;
        for (const auto& set : setters) set(cfg);
        if (seed_required && !seed_given) throw UsageError("an explicit --seed (or config seed) is required");
        cfg.validate();
        return cfg;
    }
};

nlohmann::json summary_line(const SimulationReport& r) {
    return {{"controller", r.controller}, {"seed", r.seed}, {"days", r.days}, {"summary", r.summary}};
}

int cmd_gen_network(int consumers, std::uint64_t seed, const std::string& out) {
    const Network net = generate_radial_network(consumers, seed);
    write_or_print(out, nlohmann::json(net).dump(2) + "\n");
    return 0;
}

struct GenScenarioArgs {
    std::string network, profiles, out;
    int consumers = 8;
    std::uint64_t seed = 0;
    std::uint64_t network_seed = 0;
    bool network_seed_given = false;
    int days = RunConfig{}.span_days();
    std::string start_date = RunConfig{}.start_date;
    ScenarioKnobs knobs = RunConfig{}.knobs;
};

int cmd_gen_scenario(const GenScenarioArgs& a) {
    a.knobs.validate();
    Network net;
    if (!a.network.empty()) {
        try {
            net = read_json_file(a.network, "network").get<Network>();
        } catch (const nlohmann::json::exception& e) {
            throw UsageError("network " + a.network + ": " + e.what());
        }
    } else {
        net = generate_radial_network(a.consumers, a.network_seed_given ? a.network_seed : a.seed);
    }
    if (const auto issues = validate_topology(net); !issues.empty())
        throw UsageError("invalid network: " + issues.front());
    Scenario sc;
    if (!a.profiles.empty()) {
        if (!fs::exists(a.profiles)) throw UsageError("profiles not found: " + a.profiles);
        sc = scenario_from_profiles(net, read_profiles_csv(a.profiles, net), a.knobs, a.seed);
    } else {
        sc = generate_scenario(net, a.knobs, a.seed, a.days, parse_date(a.start_date));
    }
    write_or_print(a.out, nlohmann::json(sc).dump() + "\n");
    return 0;
}

int cmd_run(const RunFlags& flags) {
    const RunConfig cfg = flags.resolve();
    SimulationReport r = run(cfg);
    if (!cfg.write_dispatch) r.dispatch.clear();
    write_run_outputs(cfg.output_dir, {r});
    std::cout << summary_line(r).dump() << '\n';
    return 0;
}

int cmd_compare(const RunFlags& flags, const std::string& controllers, const std::string& seeds, int jobs) {
    RunConfig cfg = flags.resolve(seeds.empty());
    const auto kinds = parse_controller_list(controllers);
    const auto seed_list = seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : parse_seed_list(seeds);
    auto reports = run_ensemble(cfg, seed_list, kinds, jobs);
    if (!cfg.write_dispatch)
        for (auto& r : reports) r.dispatch.clear();
    write_run_outputs(cfg.output_dir, reports);
    std::vector<ControllerStats> stats;
    for (auto k : kinds) stats.push_back(aggregate_reports(controller_name(k), reports));
    std::ostringstream csv;
    write_compare_csv(csv, stats);
    write_text(fs::path(cfg.output_dir) / "compare.csv", csv.str());
    std::cout << csv.str();
    return 0;
}

int cmd_aggregate(const std::vector<std::string>& inputs, const std::string& out) {
    std::vector<SimulationReport> reports;
    std::vector<std::string> order;
    for (const auto& path : inputs) {
        const auto j = read_json_file(path, "report");
        try {
            if (j.is_array())
                for (const auto& e : j) reports.push_back(e.get<SimulationReport>());
            else
                reports.push_back(j.get<SimulationReport>());
        } catch (const nlohmann::json::exception& e) {
            throw UsageError("report " + path + ": " + e.what());
        }
    }
    for (const auto& r : reports)
        if (std::find(order.begin(), order.end(), r.controller) == order.end()) order.push_back(r.controller);
    std::vector<ControllerStats> stats;
    for (const auto& c : order) stats.push_back(aggregate_reports(c, reports));
    std::ostringstream csv;
    write_compare_csv(csv, stats);
    write_or_print(out, csv.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Day-ahead coordination of distributed energy resources on radial networks"};
    app.require_subcommand(1);

    auto* gen_net = app.add_subcommand("gen-network", "Generate a seeded radial network");
    int net_consumers = 8;
    std::uint64_t net_seed = 0;
    std::string net_out;
    gen_net->add_option("--consumers", net_consumers, "Number of consumers")->check(CLI::PositiveNumber);
    gen_net->add_option("--seed", net_seed, "Network seed")->required();
    gen_net->add_option("-o,--output", net_out, "Output file (stdout when omitted)");

    auto* gen_sc = app.add_subcommand("gen-scenario", "Generate a seeded scenario with loads, PV and DERs");
    GenScenarioArgs sa;
    gen_sc->add_option("--network", sa.network, "Network JSON (otherwise generated)");
    gen_sc->add_option("--consumers", sa.consumers, "Consumers in a generated network")->check(CLI::PositiveNumber);
    gen_sc->add_option("--seed", sa.seed, "Scenario seed")->required();
    auto* nseed = gen_sc->add_option("--network-seed", sa.network_seed, "Network seed (defaults to --seed)");
    gen_sc->add_option("--days", sa.days, "Days covered")->check(CLI::PositiveNumber);
    gen_sc->add_option("--start-date", sa.start_date, "First day, YYYY-MM-DD");
    gen_sc->add_option("--pv", sa.knobs.pv, "Share of consumers with PV");
    gen_sc->add_option("--ev", sa.knobs.ev, "EV share of network energy");
    gen_sc->add_option("--storage", sa.knobs.storage, "Share of PV consumers with storage");
    gen_sc->add_option("--phi", sa.knobs.phi, "Flexible share of thermal load");
    gen_sc->add_option("--profiles", sa.profiles, "Household profiles CSV (node_id,timestamp,p_kW,q_kVAr)");
    gen_sc->add_option("-o,--output", sa.out, "Output file (stdout when omitted)");

    auto* run_cmd = app.add_subcommand("run", "Simulate one controller on one scenario");
    RunFlags run_flags;
    run_flags.attach(run_cmd);

    auto* cmp_cmd = app.add_subcommand("compare", "Run several controllers over a seed ensemble");
    RunFlags cmp_flags;
    cmp_flags.attach(cmp_cmd);
    std::string cmp_controllers = "bounds,centralized,local", cmp_seeds;
    int jobs = 1;
    cmp_cmd->add_option("--controllers", cmp_controllers, "Comma-separated controllers");
    cmp_cmd->add_option("--seeds", cmp_seeds, "Seeds, e.g. 1-16 or 1,4,9 (default: --seed)");
    cmp_cmd->add_option("--jobs,-j", jobs, "Scenarios run in parallel")->check(CLI::PositiveNumber);

    auto* agg_cmd = app.add_subcommand("aggregate", "Mean and standard error table from report.json files");
    std::vector<std::string> agg_inputs;
    std::string agg_out;
    agg_cmd->add_option("reports", agg_inputs, "report.json files")->required();
    agg_cmd->add_option("--output", agg_out, "CSV output file (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error(2, "usage", e.what());
    }
    sa.network_seed_given = nseed->count() > 0;

    try {
        if (gen_net->parsed()) return cmd_gen_network(net_consumers, net_seed, net_out);
        if (gen_sc->parsed()) return cmd_gen_scenario(sa);
        if (run_cmd->parsed()) return cmd_run(run_flags);
        if (cmp_cmd->parsed()) return cmd_compare(cmp_flags, cmp_controllers, cmp_seeds, jobs);
        if (agg_cmd->parsed()) return cmd_aggregate(agg_inputs, agg_out);
    } catch (const UsageError& e) {
        return report_error(2, "usage", e.what());
    } catch (const std::invalid_argument& e) {
        return report_error(2, "usage", e.what());
    } catch (const FormatError& e) {
        return report_error(2, "input", e.what());
    } catch (const Error& e) {
        return report_error(1, "runtime", e.what());
    } catch (const std::exception& e) {
        return report_error(1, "runtime", e.what());
    }
    return report_error(2, "usage", "no subcommand");
}
