#ifndef DERCOORD_LINEAR_MODEL_HPP
#define DERCOORD_LINEAR_MODEL_HPP

#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "dercoord/errors.hpp"
#include "dercoord/network.hpp"
#include "dercoord/powerflow.hpp"
#include "dercoord/random.hpp"

namespace dercoord {

// Data-driven linear power-flow map. Regressors are the stacked consumer
// injections s = (p_1..p_C, q_1..q_C) in p.u.; voltage rows follow node ids,
// flow rows follow Network::transformers.
struct LinearPFModel {
    Eigen::MatrixXd A;
    Eigen::VectorXd a;
    Eigen::MatrixXd F;
    Eigen::VectorXd f;
    Eigen::MatrixXd G;
    Eigen::VectorXd g;

    Eigen::Index input_size() const { return A.cols(); }

    Eigen::VectorXd voltage(const Eigen::VectorXd& s) const { return A * s + a; }

    Eigen::VectorXd tau(const Eigen::VectorXd& s) const {
        const Eigen::VectorXd re = F * s + f;
        const Eigen::VectorXd im = G * s + g;
        return re.array().square() + im.array().square();
    }
};

struct SplitModel {
    Eigen::MatrixXd A_pos, A_neg;
    Eigen::VectorXd a_pos, a_neg;
    Eigen::MatrixXd F_pos, F_neg;
    Eigen::VectorXd f_pos, f_neg;
    Eigen::MatrixXd G_pos, G_neg;
    Eigen::VectorXd g_pos, g_neg;
};

struct TrainingSample {
    InjectionVector injection;
    PFSolution solution;
};

inline Eigen::VectorXd stack_injection(const InjectionVector& inj) {
    const auto nc = static_cast<Eigen::Index>(inj.p.size());
    Eigen::VectorXd s(2 * nc);
    for (Eigen::Index i = 0; i < nc; ++i) {
        s(i) = inj.p[static_cast<std::size_t>(i)];
        s(nc + i) = inj.q[static_cast<std::size_t>(i)];
    }
    return s;
}

namespace detail {

// Least squares of Y on [X 1]; returns coefficients with the intercept in the last row.
inline Eigen::MatrixXd affine_least_squares(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
    const Eigen::Index n = X.rows();
    const Eigen::Index k = X.cols() + 1;
    if (n < k)
        throw RankDeficient("need at least " + std::to_string(k) + " samples, got " +
                            std::to_string(n));
    Eigen::MatrixXd design(n, k);
    design.leftCols(X.cols()) = X;
    design.col(k - 1).setOnes();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < k)
        throw RankDeficient("regressor matrix has rank " + std::to_string(qr.rank()) + " < " +
                            std::to_string(k));
    return qr.solve(Y);
}

inline Eigen::MatrixXd regressors(std::span<const TrainingSample> samples) {
    if (samples.empty()) throw RankDeficient("no samples");
    const auto width = 2 * static_cast<Eigen::Index>(samples.front().injection.p.size());
    Eigen::MatrixXd X(static_cast<Eigen::Index>(samples.size()), width);
    for (std::size_t r = 0; r < samples.size(); ++r)
        X.row(static_cast<Eigen::Index>(r)) = stack_injection(samples[r].injection).transpose();
    return X;
}

}  // namespace detail

struct VoltageFit {
    Eigen::MatrixXd A;
    Eigen::VectorXd a;
};

inline VoltageFit fit_voltage_model(std::span<const TrainingSample> samples) {
    const Eigen::MatrixXd X = detail::regressors(samples);
    const auto outputs = static_cast<Eigen::Index>(samples.front().solution.voltage.size());
    Eigen::MatrixXd Y(X.rows(), outputs);
    for (Eigen::Index r = 0; r < X.rows(); ++r)
        for (Eigen::Index j = 0; j < outputs; ++j)
            Y(r, j) = samples[static_cast<std::size_t>(r)].solution.voltage[static_cast<std::size_t>(j)];
    const Eigen::MatrixXd coef = detail::affine_least_squares(X, Y);
    return {coef.topRows(X.cols()).transpose(), coef.row(X.cols()).transpose()};
}

struct FlowFit {
    Eigen::MatrixXd F;
    Eigen::VectorXd f;
    Eigen::MatrixXd G;
    Eigen::VectorXd g;
};

/// Two channels per transformer: the real and the imaginary part of the
/// complex power entering it, so that tau = re^2 + im^2.
inline FlowFit fit_flow_model(std::span<const TrainingSample> samples) {
    const Eigen::MatrixXd X = detail::regressors(samples);
    const auto nt = static_cast<Eigen::Index>(samples.front().solution.transformer_flow.size());
    Eigen::MatrixXd Y(X.rows(), 2 * nt);
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        const auto& flow = samples[static_cast<std::size_t>(r)].solution.transformer_flow;
        for (Eigen::Index j = 0; j < nt; ++j) {
            Y(r, j) = flow[static_cast<std::size_t>(j)].real();
            Y(r, nt + j) = flow[static_cast<std::size_t>(j)].imag();
        }
    }
    const Eigen::MatrixXd coef = detail::affine_least_squares(X, Y);
    const Eigen::MatrixXd slopes = coef.topRows(X.cols()).transpose();
    const Eigen::VectorXd intercepts = coef.row(X.cols()).transpose();
    return {slopes.topRows(nt), intercepts.head(nt), slopes.bottomRows(nt), intercepts.tail(nt)};
}

inline LinearPFModel fit_linear_model(std::span<const TrainingSample> samples) {
    auto v = fit_voltage_model(samples);
    auto fl = fit_flow_model(samples);
    return {std::move(v.A), std::move(v.a), std::move(fl.F), std::move(fl.f), std::move(fl.G),
            std::move(fl.g)};
}

inline SplitModel split_pos_neg(const LinearPFModel& m) {
    SplitModel s;
    s.A_pos = m.A.cwiseMax(0.0);
    s.A_neg = m.A.cwiseMin(0.0);
    s.a_pos = m.a.cwiseMax(0.0);
    s.a_neg = m.a.cwiseMin(0.0);
    s.F_pos = m.F.cwiseMax(0.0);
    s.F_neg = m.F.cwiseMin(0.0);
    s.f_pos = m.f.cwiseMax(0.0);
    s.f_neg = m.f.cwiseMin(0.0);
    s.G_pos = m.G.cwiseMax(0.0);
    s.G_neg = m.G.cwiseMin(0.0);
    s.g_pos = m.g.cwiseMax(0.0);
    s.g_neg = m.g.cwiseMin(0.0);
    return s;
}

// Solves the oracle at each injection; non-converged points are skipped.
inline std::vector<TrainingSample> solve_samples(const RadialPowerFlow& pf,
                                                 const std::vector<InjectionVector>& injections,
                                                 double tol = 1e-8) {
    std::vector<TrainingSample> out;
    out.reserve(injections.size());
    for (const auto& inj : injections) {
        try {
            out.push_back({inj, pf.solve(inj, tol)});
        } catch (const NonConvergence&) {
        }
    }
    return out;
}

/// Uniform injections in [-half_range, half_range] p.u. for both p and q.
inline std::vector<InjectionVector> uniform_injections(int consumers, int count, std::uint64_t seed,
                                                       double half_range) {
    Rng rng(seed);
    std::vector<InjectionVector> out(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        auto& inj = out[static_cast<std::size_t>(k)];
        inj.timestep = k;
        inj.p.resize(static_cast<std::size_t>(consumers));
        inj.q.resize(static_cast<std::size_t>(consumers));
        for (int i = 0; i < consumers; ++i) {
            inj.p[static_cast<std::size_t>(i)] = rng.uniform(-half_range, half_range);
            inj.q[static_cast<std::size_t>(i)] = rng.uniform(-half_range, half_range);
        }
    }
    return out;
}

/// Training injections built by perturbing baseline profiles. Each sample
/// takes a random timestep of the profile and adds seeded noise scaled by
/// each node's spread (p.u.) so the fit covers DER-driven excursions.
inline std::vector<InjectionVector> perturbed_profile_injections(
    const std::vector<std::vector<double>>& base_p, const std::vector<std::vector<double>>& base_q,
    const std::vector<double>& spread, int count, std::uint64_t seed) {
    Rng rng(seed);
    const auto nc = base_p.size();
    const auto steps = base_p.empty() ? 0 : base_p.front().size();
    std::vector<InjectionVector> out(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        auto& inj = out[static_cast<std::size_t>(k)];
        inj.timestep = k;
        inj.p.resize(nc);
        inj.q.resize(nc);
        const auto t = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(steps) - 1));
        for (std::size_t i = 0; i < nc; ++i) {
            inj.p[i] = base_p[i][t] + spread[i] * rng.uniform(-1.0, 1.0);
            inj.q[i] = base_q[i][t] * rng.uniform(0.5, 1.5) + 0.3 * spread[i] * rng.uniform(-1.0, 1.0);
        }
    }
    return out;
}

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
        rows.push_back(row);
    }
    return nlohmann::json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows) throw FormatError("matrix row count mismatch");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto row = data[static_cast<std::size_t>(r)].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(row.size()) != cols) throw FormatError("matrix column count mismatch");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
    }
    return m;
}

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const LinearPFModel& m) {
    j = {{"A", detail::matrix_to_json(m.A)}, {"a", detail::vector_to_json(m.a)},
         {"F", detail::matrix_to_json(m.F)}, {"f", detail::vector_to_json(m.f)},
         {"G", detail::matrix_to_json(m.G)}, {"g", detail::vector_to_json(m.g)}};
}

inline void from_json(const nlohmann::json& j, LinearPFModel& m) {
    m.A = detail::matrix_from_json(j.at("A"));
    m.a = detail::vector_from_json(j.at("a"));
    m.F = detail::matrix_from_json(j.at("F"));
    m.f = detail::vector_from_json(j.at("f"));
    m.G = detail::matrix_from_json(j.at("G"));
    m.g = detail::vector_from_json(j.at("g"));
    if (m.a.size() != m.A.rows() || m.f.size() != m.F.rows() || m.g.size() != m.G.rows() ||
        m.F.cols() != m.A.cols() || m.G.cols() != m.A.cols())
        throw FormatError("inconsistent linear model dimensions");
}

}  // namespace dercoord

#endif
