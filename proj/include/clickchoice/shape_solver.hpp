#pragma once
// Shape-restricted binomial maximum likelihood on a recency x frequency grid.
//
// Maximizes  sum_ij a_ij log x_ij + b_ij log(1 - x_ij)  over tables that are
// non-decreasing in both directions (monotone mode), and additionally convex
// in recency and concave in frequency (mcc mode), inside the box
// [eps, 1 - eps]. The objective is concave and the constraints are linear, so
// a log-barrier interior-point method reaches the global maximum.

#include <string>
#include <vector>

#include "clickchoice/types.hpp"

namespace clickchoice {

// Effective purchase (a) and non-purchase (b) weight per cell.
struct WeightedCellCounts {
    GridSpec grid;
    std::vector<double> a;
    std::vector<double> b;

    WeightedCellCounts() = default;
    explicit WeightedCellCounts(GridSpec g) : grid(g), a(g.cells(), 0.0), b(g.cells(), 0.0) {}
    WeightedCellCounts(GridSpec g, std::vector<double> purchase, std::vector<double> non_purchase);

    // a = sum_k w_k q_ijk, b = sum_k w_k (n_ijk - q_ijk). Empty weights means w = 1.
    static WeightedCellCounts from_tensor(const CountTensor& tensor, const std::vector<double>& weights = {});

    double total() const;
};

struct SolverConfig {
    double epsilon = kDefaultEpsilon;
    // Barrier duality-gap bound, relative to max(total weight, 1).
    double kkt_tol = 1e-8;
    int max_newton_iterations = 500;
    double barrier_reduction = 10.0;
    // Added to every a_ij and b_ij before solving.
    double pseudo_count = 0.0;

    void validate() const;
};

struct ShapeFit {
    ProbabilityTable table;
    double objective = 0.0;
    int newton_iterations = 0;
    int barrier_rounds = 0;
    bool converged = false;
};

ShapeFit fit_shape(const WeightedCellCounts& counts, ShapeMode mode, const SolverConfig& config = {});

inline ShapeFit fit_monotone(const WeightedCellCounts& counts, const SolverConfig& config = {}) {
    return fit_shape(counts, ShapeMode::monotone, config);
}

inline ShapeFit fit_mcc(const WeightedCellCounts& counts, const SolverConfig& config = {}) {
    return fit_shape(counts, ShapeMode::mcc, config);
}

// sum_ij a_ij log x_ij + b_ij log(1 - x_ij); InputError if any x is outside (0,1).
double objective_value(const ProbabilityTable& table, const WeightedCellCounts& counts);

// "Eigen X.Y.Z", the linear-algebra backend the solver was built against.
std::string solver_backend_version();

}  // namespace clickchoice
