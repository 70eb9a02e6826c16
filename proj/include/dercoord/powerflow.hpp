#ifndef DERCOORD_POWERFLOW_HPP
#define DERCOORD_POWERFLOW_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "dercoord/errors.hpp"
#include "dercoord/network.hpp"

namespace dercoord {

using Complex = std::complex<double>;

// Net complex consumption of every consumer node (consumption-positive, p.u.),
// ordered as Network::consumers(). Non-consumer nodes carry no injection.
struct InjectionVector {
    int timestep = 0;
    std::vector<double> p;
    std::vector<double> q;
};

struct PFSolution {
    std::vector<double> voltage;           // magnitude per node (index = id - 1)
    std::vector<Complex> voltage_phasor;
    std::vector<Complex> transformer_flow;  // complex power entering each transformer at `from`
    std::vector<double> tau;                // |transformer_flow|^2
    Complex substation_power{0.0, 0.0};     // total complex power drawn from the substation
    bool converged = false;
    int iterations = 0;
    double max_residual = 0.0;
};

// Backward/forward sweep on a radial tree. Holds the topology so repeated
// solves on one network skip the tree construction; solve() is const and
// safe to call concurrently.
class RadialPowerFlow {
public:
    explicit RadialPowerFlow(const Network& net)
        : net_(net), tree_(net), consumer_of_(static_cast<std::size_t>(net.node_count()), -1) {
        const auto ids = net.consumers();
        for (std::size_t c = 0; c < ids.size(); ++c)
            consumer_of_[static_cast<std::size_t>(ids[c] - 1)] = static_cast<int>(c);
        impedance_.assign(static_cast<std::size_t>(net.node_count()), Complex{});
        for (int v = 1; v < net.node_count(); ++v) {
            const auto& line = net.lines[static_cast<std::size_t>(tree_.parent_line[static_cast<std::size_t>(v)])];
            impedance_[static_cast<std::size_t>(v)] = {line.resistance, line.reactance};
        }
    }

    const Network& network() const { return net_; }
    const RadialTree& tree() const { return tree_; }

    PFSolution solve(const InjectionVector& inj, double tol = 1e-8, int max_iter = 100) const {
        if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
        const auto n = static_cast<std::size_t>(net_.node_count());
        const auto nc = static_cast<std::size_t>(net_.consumer_count());
        if (inj.p.size() != nc || inj.q.size() != nc)
            throw std::invalid_argument("injection vector does not match consumer count");

        std::vector<Complex> load(n, Complex{});
        for (std::size_t i = 0; i < n; ++i) {
            const int c = consumer_of_[i];
            if (c >= 0) load[i] = {inj.p[static_cast<std::size_t>(c)], inj.q[static_cast<std::size_t>(c)]};
        }

        std::vector<Complex> v(n, Complex{1.0, 0.0});
        std::vector<Complex> branch(n, Complex{});  // current from parent into node
        PFSolution sol;
        double residual = 0.0;
        int iter = 0;
        for (iter = 1; iter <= max_iter; ++iter) {
            for (auto it = tree_.order.rbegin(); it != tree_.order.rend(); ++it) {
                const auto u = static_cast<std::size_t>(*it);
                Complex current = std::conj(load[u] / v[u]);
                for (int c : tree_.children[u]) current += branch[static_cast<std::size_t>(c)];
                branch[u] = current;
            }
            for (int u : tree_.order) {
                if (u == 0) continue;
                const auto uu = static_cast<std::size_t>(u);
                v[uu] = v[static_cast<std::size_t>(tree_.parent[uu])] - impedance_[uu] * branch[uu];
            }
            residual = balance_residual(v, load);
            if (!std::isfinite(residual)) break;
            if (residual < tol) {
                sol.converged = true;
                break;
            }
        }
        if (!sol.converged) throw NonConvergence(std::min(iter, max_iter), residual);

        // Report branch currents consistent with the final voltages.
        const auto currents = branch_currents(v, load);
        sol.iterations = iter;
        sol.max_residual = residual;
        sol.voltage_phasor = v;
        sol.voltage.resize(n);
        for (std::size_t i = 0; i < n; ++i) sol.voltage[i] = std::abs(v[i]);
        for (const auto& t : net_.transformers) {
            const auto from = static_cast<std::size_t>(t.from - 1);
            const auto to = static_cast<std::size_t>(t.to - 1);
            Complex s;
            if (tree_.parent[to] == static_cast<int>(from))
                s = v[from] * std::conj(currents[to]);
            else
                s = -v[from] * std::conj(currents[from]);
            sol.transformer_flow.push_back(s);
            sol.tau.push_back(std::norm(s));
        }
        Complex root_out{};
        for (int c : tree_.children[0]) root_out += currents[static_cast<std::size_t>(c)];
        sol.substation_power = v[0] * std::conj(root_out);
        return sol;
    }

    // Branch currents recomputed from voltages (Ohm's law on each line);
    // zero-impedance lines fall back to summing downstream load currents.
    std::vector<Complex> branch_currents(const std::vector<Complex>& v,
                                         const std::vector<Complex>& load) const {
        const auto n = v.size();
        std::vector<Complex> current(n, Complex{});
        for (auto it = tree_.order.rbegin(); it != tree_.order.rend(); ++it) {
            const auto u = static_cast<std::size_t>(*it);
            if (u == 0) continue;
            const Complex z = impedance_[u];
            if (std::abs(z) > 1e-12) {
                current[u] = (v[static_cast<std::size_t>(tree_.parent[u])] - v[u]) / z;
            } else {
                Complex sum = std::conj(load[u] / v[u]);
                for (int c : tree_.children[u]) sum += current[static_cast<std::size_t>(c)];
                current[u] = sum;
            }
        }
        return current;
    }

    // Largest |V_i conj(I_in - sum I_out) - s_i| over non-root nodes.
    double balance_residual(const std::vector<Complex>& v, const std::vector<Complex>& load) const {
        const auto current = branch_currents(v, load);
        double worst = 0.0;
        for (std::size_t u = 1; u < v.size(); ++u) {
            Complex net_in = current[u];
            for (int c : tree_.children[u]) net_in -= current[static_cast<std::size_t>(c)];
            const Complex consumed = v[u] * std::conj(net_in);
            worst = std::max(worst, std::abs(consumed - load[u]));
        }
        return worst;
    }

private:
    Network net_;
    RadialTree tree_;
    std::vector<int> consumer_of_;
    std::vector<Complex> impedance_;
};

inline PFSolution solve_pf(const Network& net, const InjectionVector& inj, double tol = 1e-8,
                           int max_iter = 100) {
    return RadialPowerFlow(net).solve(inj, tol, max_iter);
}

}  // namespace dercoord

#endif
