#ifndef DERCOORD_ERRORS_HPP
#define DERCOORD_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dercoord {

// Base for every failure the library reports.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NonConvergence : public Error {
public:
    NonConvergence(int iterations, double worst_residual)
        : Error("power flow did not converge after " + std::to_string(iterations) +
                " iterations (worst residual " + std::to_string(worst_residual) + ")"),
          iterations_(iterations), worst_residual_(worst_residual) {}

    int iterations() const { return iterations_; }
    double worst_residual() const { return worst_residual_; }

private:
    int iterations_;
    double worst_residual_;
};

class RankDeficient : public Error {
public:
    using Error::Error;
};

class InsufficientData : public Error {
public:
    InsufficientData(int node, int hour, std::size_t count)
        : Error("insufficient reactive samples for node " + std::to_string(node) + " hour " +
                std::to_string(hour) + " (" + std::to_string(count) + ")"),
          node_(node), hour_(hour) {}

    int node() const { return node_; }
    int hour() const { return hour_; }

private:
    int node_;
    int hour_;
};

class NoHistory : public Error {
public:
    explicit NoHistory(int node)
        : Error("no matching history for node " + std::to_string(node)), node_(node) {}

    int node() const { return node_; }

private:
    int node_;
};

class Infeasible : public Error {
public:
    using Error::Error;
};

class SolverStall : public Error {
public:
    explicit SolverStall(int iterations, const std::string& what = "solver stalled")
        : Error(what + " after " + std::to_string(iterations) + " iterations"),
          iterations_(iterations) {}

    int iterations() const { return iterations_; }

private:
    int iterations_;
};

class BoundsViolation : public Error {
public:
    using Error::Error;
};

class InfeasibleDispatch : public Error {
public:
    using Error::Error;
};

class InfeasibleHorizon : public Error {
public:
    using Error::Error;
};

// Raised for malformed input files and configuration documents.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace dercoord

#endif
