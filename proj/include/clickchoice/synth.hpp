#pragma once
// Synthetic data with planted latent structure, plus brute-force oracles the
// test suites check the solvers against.

#include <cstdint>
#include <string>
#include <vector>

#include "clickchoice/features.hpp"
#include "clickchoice/shape_solver.hpp"
#include "clickchoice/types.hpp"

namespace clickchoice {

struct PlantedTruth {
    std::vector<std::size_t> assignment;  // class of each category
    std::vector<ProbabilityTable> tables;
    std::vector<double> pi;  // category share per class
};

struct PlantedTensor {
    CountTensor tensor;
    PlantedTruth truth;
};

// x = base + amplitude * r(i) * c(j), r(i) = ((i-1)/(|I|-1))^recency_power
// (convex, increasing for power >= 1) and c(j) = (1 - e^{-s j}) / (1 - e^{-s |J|})
// (concave, increasing). MCC-feasible by construction.
ProbabilityTable planted_mcc_table(const GridSpec& grid, double base, double amplitude, double recency_power,
                                   double frequency_saturation, double epsilon = kDefaultEpsilon);

// Smallest per-cell absolute gap between any two tables.
double min_pairwise_gap(const std::vector<ProbabilityTable>& tables);

// Category names "c01", "c02", ... for `count` categories.
std::vector<std::string> category_names(std::size_t count);

// Assignment of `count` categories to classes in proportion to `shares`
// (largest-remainder rounding, classes laid out in contiguous blocks).
std::vector<std::size_t> proportional_assignment(std::size_t count, const std::vector<double>& shares);

// q_ijk ~ Binomial(n_ijk, x_{ij, assignment[k]}). `exposures` holds n per
// category x cell (row-major by category); InputError for a planted table
// that is not MCC-feasible.
PlantedTensor generate_planted_tensor(const std::vector<ProbabilityTable>& tables,
                                      const std::vector<std::size_t>& assignment,
                                      const std::vector<std::int64_t>& exposures, std::uint64_t seed);

PlantedTensor generate_planted_tensor(const std::vector<ProbabilityTable>& tables,
                                      const std::vector<std::size_t>& assignment, std::int64_t exposure_per_cell,
                                      std::uint64_t seed);

// Test-set style samples for one base date: each customer views
// `products_per_customer` products drawn from random categories, at uniform
// random grid levels, and purchases each with its planted probability.
std::vector<Sample> generate_planted_samples(const std::vector<ProbabilityTable>& tables,
                                             const std::vector<std::size_t>& assignment,
                                             const std::vector<std::string>& categories, std::size_t customers,
                                             std::size_t products_per_customer, Day base_date, std::uint64_t seed);

struct OracleFit {
    std::vector<double> values;
    double objective = 0.0;
    std::size_t enumerated = 0;
};

inline constexpr std::size_t kOracleMaxCells = 4;

// Exhaustive search over lattice tables x = k * step inside [eps, 1 - eps]
// that satisfy the mode's constraints. Grids beyond four cells exceed the
// enumeration budget and throw InputError.
OracleFit oracle_fit(const WeightedCellCounts& counts, ShapeMode mode, double step = 0.01,
                     double epsilon = kDefaultEpsilon);

// Memberships from the full binomial pmf products (coefficients included),
// computed in long double without log-sum-exp. Only for small tensors.
Matrix oracle_posterior(const CountTensor& tensor, const std::vector<double>& pi,
                        const std::vector<ProbabilityTable>& tables);

struct ClickstreamProfile {
    Day start_date = 0;
    int days = 56;
    std::size_t customers = 100;
    std::size_t products_per_category = 10;
    std::vector<std::string> categories;
    std::vector<std::size_t> assignment;  // class per category
    std::vector<ProbabilityTable> tables;  // indexed by class, keyed by (recency, frequency)
    std::size_t interests_per_customer = 6;
    double daily_view_probability = 0.2;
    double extra_views_mean = 0.5;  // Poisson extra views per visit
    FeatureConfig features;
};

struct SimulatedClickstream {
    std::vector<ClickEvent> events;
    PlantedTruth truth;
};

// Views are drawn first; purchases are then drawn per base date and
// customer-product pair with probability x_{ij, class} at that pair's
// features, so the aggregated tensor reproduces the planted tables.
SimulatedClickstream generate_synthetic_clickstream(const ClickstreamProfile& profile, std::uint64_t seed);

}  // namespace clickchoice
