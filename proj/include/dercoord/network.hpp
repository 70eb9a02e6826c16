#ifndef DERCOORD_NETWORK_HPP
#define DERCOORD_NETWORK_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dercoord/errors.hpp"
#include "dercoord/random.hpp"

namespace dercoord {

enum class NodeKind { substation, junction, consumer };

NLOHMANN_JSON_SERIALIZE_ENUM(NodeKind, {
    {NodeKind::substation, "substation"},
    {NodeKind::junction, "junction"},
    {NodeKind::consumer, "consumer"},
})

// Node ids are 1-based; node 1 is the substation.
struct Node {
    int id = 0;
    NodeKind kind = NodeKind::junction;
    double nominal_voltage = 1.0;
    double vmin = 0.95;
    double vmax = 1.05;

    bool operator==(const Node&) const = default;
};

struct Line {
    int from = 0;
    int to = 0;
    double resistance = 0.0;  // p.u.
    double reactance = 0.0;   // p.u.

    bool operator==(const Line&) const = default;
};

struct Transformer {
    int from = 0;
    int to = 0;
    double rating_sq = 0.0;  // apparent power squared limit, p.u.^2

    double rating() const { return std::sqrt(rating_sq); }
    bool operator==(const Transformer&) const = default;
};

struct Network {
    std::vector<Node> nodes;
    std::vector<Line> lines;
    std::vector<Transformer> transformers;
    double timestep_hours = 0.25;
    double power_base_kw = 100.0;

    int node_count() const { return static_cast<int>(nodes.size()); }
    const Node& node(int id) const { return nodes.at(static_cast<std::size_t>(id - 1)); }

    // Consumer node ids in ascending order; this order indexes every
    // per-consumer vector in the library.
    std::vector<int> consumers() const {
        std::vector<int> ids;
        for (const auto& n : nodes)
            if (n.kind == NodeKind::consumer) ids.push_back(n.id);
        return ids;
    }

    int consumer_count() const {
        return static_cast<int>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) {
            return n.kind == NodeKind::consumer;
        }));
    }

    bool operator==(const Network&) const = default;
};

inline void to_json(nlohmann::json& j, const Node& n) {
    j = {{"id", n.id},
         {"kind", n.kind},
         {"nominal_voltage", n.nominal_voltage},
         {"vmin", n.vmin},
         {"vmax", n.vmax}};
}

inline void from_json(const nlohmann::json& j, Node& n) {
    j.at("id").get_to(n.id);
    j.at("kind").get_to(n.kind);
    n.nominal_voltage = j.value("nominal_voltage", 1.0);
    n.vmin = j.value("vmin", 0.95);
    n.vmax = j.value("vmax", 1.05);
}

inline void to_json(nlohmann::json& j, const Line& l) {
    j = {{"from", l.from}, {"to", l.to}, {"resistance", l.resistance}, {"reactance", l.reactance}};
}

inline void from_json(const nlohmann::json& j, Line& l) {
    j.at("from").get_to(l.from);
    j.at("to").get_to(l.to);
    j.at("resistance").get_to(l.resistance);
    j.at("reactance").get_to(l.reactance);
}

inline void to_json(nlohmann::json& j, const Transformer& t) {
    j = {{"from", t.from}, {"to", t.to}, {"rating_sq", t.rating_sq}};
}

inline void from_json(const nlohmann::json& j, Transformer& t) {
    j.at("from").get_to(t.from);
    j.at("to").get_to(t.to);
    j.at("rating_sq").get_to(t.rating_sq);
}

inline void to_json(nlohmann::json& j, const Network& net) {
    j = {{"nodes", net.nodes},
         {"lines", net.lines},
         {"transformers", net.transformers},
         {"timestep_hours", net.timestep_hours},
         {"power_base_kw", net.power_base_kw}};
}

inline void from_json(const nlohmann::json& j, Network& net) {
    j.at("nodes").get_to(net.nodes);
    j.at("lines").get_to(net.lines);
    j.at("transformers").get_to(net.transformers);
    net.timestep_hours = j.value("timestep_hours", 0.25);
    net.power_base_kw = j.value("power_base_kw", 100.0);
}

/// Returns one description per violated network invariant; empty iff valid.
inline std::vector<std::string> validate_topology(const Network& net) {
    std::vector<std::string> issues;
    const int n = net.node_count();
    if (n == 0) {
        issues.emplace_back("empty network");
        return issues;
    }

    int substations = 0;
    for (int i = 0; i < n; ++i) {
        const Node& node = net.nodes[static_cast<std::size_t>(i)];
        if (node.id != i + 1)
            issues.push_back("node at position " + std::to_string(i) + " has id " +
                             std::to_string(node.id) + ", expected " + std::to_string(i + 1));
        if (node.kind == NodeKind::substation) ++substations;
        if (!(node.vmin < node.vmax))
            issues.push_back("node " + std::to_string(node.id) + ": vmin must be below vmax");
    }
    if (substations == 0) issues.emplace_back("no substation");
    if (substations > 1) issues.emplace_back("multiple substations");
    if (net.nodes.front().kind != NodeKind::substation)
        issues.emplace_back("node 1 must be the substation");
    if (!(net.timestep_hours > 0.0)) issues.emplace_back("timestep must be positive");
    if (!(net.power_base_kw > 0.0)) issues.emplace_back("power base must be positive");

    auto valid_id = [n](int id) { return id >= 1 && id <= n; };

    // Union-find over the line set detects cycles and disconnected pieces.
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&parent](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            auto& p = parent[static_cast<std::size_t>(x)];
            p = parent[static_cast<std::size_t>(p)];
            x = p;
        }
        return x;
    };

    for (const auto& line : net.lines) {
        const std::string tag =
            "line " + std::to_string(line.from) + "-" + std::to_string(line.to);
        if (!valid_id(line.from) || !valid_id(line.to)) {
            issues.push_back(tag + ": unknown endpoint");
            continue;
        }
        if (line.from == line.to) {
            issues.push_back(tag + ": self loop");
            continue;
        }
        if (line.resistance < 0.0 || line.reactance < 0.0)
            issues.push_back(tag + ": negative impedance");
        const int a = find(line.from - 1);
        const int b = find(line.to - 1);
        if (a == b)
            issues.push_back("cycle involving nodes " + std::to_string(line.from) + " and " +
                             std::to_string(line.to));
        else
            parent[static_cast<std::size_t>(a)] = b;
    }

    const int root = find(0);
    for (int i = 1; i < n; ++i)
        if (find(i) != root)
            issues.push_back("node " + std::to_string(i + 1) + " is not connected to the substation");

    for (const auto& t : net.transformers) {
        const std::string tag =
            "transformer " + std::to_string(t.from) + "-" + std::to_string(t.to);
        if (!(t.rating_sq > 0.0)) issues.push_back(tag + ": rating must be positive");
        const bool on_line = std::any_of(net.lines.begin(), net.lines.end(), [&t](const Line& l) {
            return (l.from == t.from && l.to == t.to) || (l.from == t.to && l.to == t.from);
        });
        if (!on_line) issues.push_back(tag + ": not on a line");
    }
    return issues;
}

// Parent pointers and a root-first ordering of a validated radial network.
struct RadialTree {
    std::vector<int> parent;        // node index (0-based) of the parent, -1 for root
    std::vector<int> parent_line;   // index into Network::lines of the edge to the parent
    std::vector<int> order;         // breadth-first order starting at the substation
    std::vector<std::vector<int>> children;

    explicit RadialTree(const Network& net) {
        const auto issues = validate_topology(net);
        if (!issues.empty()) throw Error("invalid network: " + issues.front());
        const auto n = static_cast<std::size_t>(net.node_count());
        parent.assign(n, -1);
        parent_line.assign(n, -1);
        children.assign(n, {});
        std::vector<std::vector<std::pair<int, int>>> adjacency(n);
        for (std::size_t k = 0; k < net.lines.size(); ++k) {
            const auto& l = net.lines[k];
            adjacency[static_cast<std::size_t>(l.from - 1)].emplace_back(l.to - 1, static_cast<int>(k));
            adjacency[static_cast<std::size_t>(l.to - 1)].emplace_back(l.from - 1, static_cast<int>(k));
        }
        std::vector<bool> seen(n, false);
        order.push_back(0);
        seen[0] = true;
        for (std::size_t head = 0; head < order.size(); ++head) {
            const int u = order[head];
            for (auto [v, k] : adjacency[static_cast<std::size_t>(u)]) {
                if (seen[static_cast<std::size_t>(v)]) continue;
                seen[static_cast<std::size_t>(v)] = true;
                parent[static_cast<std::size_t>(v)] = u;
                parent_line[static_cast<std::size_t>(v)] = k;
                children[static_cast<std::size_t>(u)].push_back(v);
                order.push_back(v);
            }
        }
    }
};

struct NetworkStyle {
    // Each junction attaches to one of the previous `depth` junctions; 1 gives
    // a single long feeder, larger values give bushier trees.
    int depth = 2;
    int consumers_per_junction = 2;
    double line_r_min = 0.004, line_r_max = 0.012;
    double line_x_min = 0.003, line_x_max = 0.010;
    double xfmr_r_min = 0.006, xfmr_r_max = 0.012;
    double xfmr_x_min = 0.010, xfmr_x_max = 0.025;
    double nominal_peak_kw_min = 10.0, nominal_peak_kw_max = 30.0;
    double rating_factor = 1.3;
    double power_base_kw = 100.0;
};

/// Seeded radial feeder: substation, a junction backbone and one transformer
/// branch per consumer. Ratings are placeholders sized from a drawn nominal
/// peak; scenario generation re-rates them from baseline load.
inline Network generate_radial_network(int n_consumers, std::uint64_t seed,
                                       const NetworkStyle& style = {}) {
    if (n_consumers < 1) throw std::invalid_argument("n_consumers must be at least 1");
    Rng rng(seed);
    Network net;
    net.power_base_kw = style.power_base_kw;
    net.nodes.push_back({1, NodeKind::substation, 1.0, 0.95, 1.05});

    auto add_transformer_branch = [&](int from, int to) {
        const double r = rng.uniform(style.xfmr_r_min, style.xfmr_r_max);
        const double x = rng.uniform(style.xfmr_x_min, style.xfmr_x_max);
        net.lines.push_back({from, to, r, x});
        const double peak = rng.uniform(style.nominal_peak_kw_min, style.nominal_peak_kw_max);
        const double rating = style.rating_factor * peak / net.power_base_kw;
        net.transformers.push_back({from, to, rating * rating});
    };

    if (n_consumers == 1) {
        net.nodes.push_back({2, NodeKind::consumer, 1.0, 0.95, 1.05});
        add_transformer_branch(1, 2);
        return net;
    }

    const int per = std::max(1, style.consumers_per_junction);
    const int junctions = (n_consumers + per - 1) / per;
    const int depth = std::max(1, style.depth);
    for (int j = 0; j < junctions; ++j) {
        const int id = 2 + j;
        net.nodes.push_back({id, NodeKind::junction, 1.0, 0.95, 1.05});
        int parent_id = 1;
        if (j > 0) parent_id = 2 + rng.uniform_int(std::max(0, j - depth), j - 1);
        net.lines.push_back({parent_id, id, rng.uniform(style.line_r_min, style.line_r_max),
                             rng.uniform(style.line_x_min, style.line_x_max)});
    }
    for (int c = 0; c < n_consumers; ++c) {
        const int id = 2 + junctions + c;
        net.nodes.push_back({id, NodeKind::consumer, 1.0, 0.95, 1.05});
        add_transformer_branch(2 + (c % junctions), id);
    }
    return net;
}

}  // namespace dercoord

#endif
