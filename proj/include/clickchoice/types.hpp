#pragma once
// Core domain types: recency/frequency grids, probability tables, count
// tensors, and fitted latent-class models.
//
// Grid levels are 1-based (recency i in 1..|I|, frequency j in 1..|J|) and
// every per-cell array is stored row-major by recency.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace clickchoice {

inline constexpr double kDefaultEpsilon = 1e-5;
inline constexpr double kDefaultSlack = 1e-9;

struct GridSpec {
    int recency_levels = 1;
    int frequency_levels = 1;

    GridSpec() = default;
    GridSpec(int recency, int frequency);

    std::size_t cells() const {
        return static_cast<std::size_t>(recency_levels) * static_cast<std::size_t>(frequency_levels);
    }
    // Row-major offset of 1-based level pair (i, j).
    std::size_t offset(int i, int j) const {
        return static_cast<std::size_t>(i - 1) * static_cast<std::size_t>(frequency_levels) +
               static_cast<std::size_t>(j - 1);
    }
    bool contains(int i, int j) const {
        return i >= 1 && i <= recency_levels && j >= 1 && j <= frequency_levels;
    }
    std::string to_string() const;

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

enum class ShapeMode { monotone, mcc };

std::string_view to_string(ShapeMode mode);
ShapeMode parse_shape_mode(std::string_view text);

// Which constraints a table was produced under. `none` is used for tables
// that come from unconstrained models (logistic regression).
enum class ShapeTag { none, monotone, mcc };

std::string_view to_string(ShapeTag tag);
ShapeTag parse_shape_tag(std::string_view text);

class ProbabilityTable {
public:
    ProbabilityTable() = default;
    ProbabilityTable(GridSpec grid, std::vector<double> values, double epsilon = kDefaultEpsilon,
                     ShapeTag tag = ShapeTag::none);

    static ProbabilityTable constant(GridSpec grid, double value, double epsilon = kDefaultEpsilon,
                                     ShapeTag tag = ShapeTag::none);

    const GridSpec& grid() const { return grid_; }
    double epsilon() const { return epsilon_; }
    ShapeTag tag() const { return tag_; }
    const std::vector<double>& values() const { return values_; }

    double at(int i, int j) const { return values_[grid_.offset(i, j)]; }

    bool within_box() const;

    friend bool operator==(const ProbabilityTable&, const ProbabilityTable&) = default;

private:
    GridSpec grid_;
    std::vector<double> values_;
    double epsilon_ = kDefaultEpsilon;
    ShapeTag tag_ = ShapeTag::none;
};

enum class ConstraintFamily { recency_monotone, frequency_monotone, recency_convex, frequency_concave };

std::string_view to_string(ConstraintFamily family);

struct ConstraintViolation {
    ConstraintFamily family;
    int i;  // anchor cell, 1-based
    int j;
    double residual;  // negative when violated
};

// Every constraint of the given family set whose residual is below -slack.
// Residuals: x[i+1,j]-x[i,j], x[i,j+1]-x[i,j],
// (x[i+2,j]-x[i+1,j])-(x[i+1,j]-x[i,j]), (x[i,j+1]-x[i,j])-(x[i,j+2]-x[i,j+1]).
std::vector<ConstraintViolation> check_shape_constraints(const ProbabilityTable& table, ShapeMode mode,
                                                         double slack = kDefaultSlack);

inline bool is_feasible(const ProbabilityTable& table, ShapeMode mode, double slack = kDefaultSlack) {
    return check_shape_constraints(table, mode, slack).empty();
}

// Per-(recency, frequency, category) customer-product pair counts n and
// purchase counts q. Categories are indexed 0..|K|-1 in the order given.
class CountTensor {
public:
    CountTensor() = default;
    CountTensor(GridSpec grid, std::vector<std::string> categories);
    CountTensor(GridSpec grid, std::vector<std::string> categories, std::vector<std::int64_t> n,
                std::vector<std::int64_t> q);

    const GridSpec& grid() const { return grid_; }
    const std::vector<std::string>& categories() const { return categories_; }
    std::size_t num_categories() const { return categories_.size(); }
    std::optional<std::size_t> category_index(std::string_view id) const;

    std::int64_t n(std::size_t k, int i, int j) const { return n_[index(k, i, j)]; }
    std::int64_t q(std::size_t k, int i, int j) const { return q_[index(k, i, j)]; }
    std::int64_t n_at(std::size_t k, std::size_t cell) const { return n_[k * grid_.cells() + cell]; }
    std::int64_t q_at(std::size_t k, std::size_t cell) const { return q_[k * grid_.cells() + cell]; }

    // Adds one observed pair; enforces q <= n by construction.
    void add(std::size_t k, int i, int j, std::int64_t pairs, std::int64_t purchases);

    const std::vector<std::int64_t>& n_values() const { return n_; }
    const std::vector<std::int64_t>& q_values() const { return q_; }

    std::int64_t total_pairs() const;
    std::int64_t total_purchases() const;

    // All categories summed into a single category named `name`.
    CountTensor collapsed(const std::string& name = "all") const;
    // Only the listed categories, in the listed order.
    CountTensor select(const std::vector<std::size_t>& ks) const;

    friend bool operator==(const CountTensor&, const CountTensor&) = default;

private:
    std::size_t index(std::size_t k, int i, int j) const { return k * grid_.cells() + grid_.offset(i, j); }

    GridSpec grid_;
    std::vector<std::string> categories_;
    std::vector<std::int64_t> n_;
    std::vector<std::int64_t> q_;
};

// Dense |rows| x |cols| matrix of doubles, row-major.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct LogisticClassParams {
    double beta0 = 0.0;
    double beta1 = 0.0;
    double beta2 = 0.0;
    bool capped = false;  // some coefficient hit the separation cap

    friend bool operator==(const LogisticClassParams&, const LogisticClassParams&) = default;
};

enum class ModelKind { mono, mcc, lcmcc, lclr };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

struct ChainDiagnostics {
    std::uint64_t seed = 0;
    std::vector<double> log_likelihood_trace;           // observed, after each M-step
    std::vector<double> complete_log_likelihood_trace;  // expected complete-data at the same points
    int iterations = 0;                                 // E+M rounds after the initial M-step
    bool converged = false;
    bool degenerate = false;
    bool failed = false;
    std::string failure;

    friend bool operator==(const ChainDiagnostics&, const ChainDiagnostics&) = default;
};

struct FitDiagnostics {
    std::vector<ChainDiagnostics> chains;
    int chosen_restart = -1;
    bool degenerate = false;  // chosen chain was degenerate (every chain was)

    friend bool operator==(const FitDiagnostics&, const FitDiagnostics&) = default;
};

// Latent-class model over product categories. Classes are stored in
// canonical order (descending pi, ties by lexicographic table values) so
// that label switching does not change the serialized output.
struct LatentClassModel {
    ModelKind kind = ModelKind::lcmcc;
    std::vector<std::string> categories;
    std::vector<double> pi;
    std::vector<ProbabilityTable> tables;
    std::vector<LogisticClassParams> logistic;  // lclr only, parallel to tables
    Matrix memberships;                         // |K| x |S|
    double final_log_likelihood = 0.0;
    FitDiagnostics diagnostics;

    std::size_t classes() const { return pi.size(); }
    const GridSpec& grid() const { return tables.front().grid(); }

    // Throws NumericalError when a simplex or feasibility invariant fails.
    void validate(double slack = kDefaultSlack) const;

    friend bool operator==(const LatentClassModel&, const LatentClassModel&) = default;
};

// Reorders classes into canonical order, permuting pi, tables, logistic
// parameters and membership columns together.
void canonicalize(LatentClassModel& model);

}  // namespace clickchoice
