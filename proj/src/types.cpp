#include "clickchoice/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clickchoice/errors.hpp"

namespace clickchoice {

GridSpec::GridSpec(int recency, int frequency) : recency_levels(recency), frequency_levels(frequency) {
    if (recency < 1 || frequency < 1) {
        throw InputError("grid levels must be >= 1, got " + std::to_string(recency) + "x" +
                         std::to_string(frequency));
    }
}

std::string GridSpec::to_string() const {
    return std::to_string(recency_levels) + "x" + std::to_string(frequency_levels);
}

std::string_view to_string(ShapeMode mode) { return mode == ShapeMode::monotone ? "monotone" : "mcc"; }

ShapeMode parse_shape_mode(std::string_view text) {
    if (text == "monotone" || text == "mono") return ShapeMode::monotone;
    if (text == "mcc") return ShapeMode::mcc;
    throw InputError("unknown shape mode '" + std::string(text) + "'");
}

std::string_view to_string(ShapeTag tag) {
    switch (tag) {
        case ShapeTag::monotone: return "monotone";
        case ShapeTag::mcc: return "mcc";
        case ShapeTag::none: break;
    }
    return "none";
}

ShapeTag parse_shape_tag(std::string_view text) {
    if (text == "none") return ShapeTag::none;
    if (text == "monotone") return ShapeTag::monotone;
    if (text == "mcc") return ShapeTag::mcc;
    throw InputError("unknown shape tag '" + std::string(text) + "'");
}

std::string_view to_string(ConstraintFamily family) {
    switch (family) {
        case ConstraintFamily::recency_monotone: return "recency_monotone";
        case ConstraintFamily::frequency_monotone: return "frequency_monotone";
        case ConstraintFamily::recency_convex: return "recency_convex";
        case ConstraintFamily::frequency_concave: return "frequency_concave";
    }
    return "?";
}

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::mono: return "mono";
        case ModelKind::mcc: return "mcc";
        case ModelKind::lcmcc: return "lcmcc";
        case ModelKind::lclr: return "lclr";
    }
    return "?";
}

ModelKind parse_model_kind(std::string_view text) {
    if (text == "mono") return ModelKind::mono;
    if (text == "mcc") return ModelKind::mcc;
    if (text == "lcmcc") return ModelKind::lcmcc;
    if (text == "lclr") return ModelKind::lclr;
    throw InputError("unknown model kind '" + std::string(text) + "'");
}

ProbabilityTable::ProbabilityTable(GridSpec grid, std::vector<double> values, double epsilon, ShapeTag tag)
    : grid_(grid), values_(std::move(values)), epsilon_(epsilon), tag_(tag) {
    if (values_.size() != grid_.cells()) {
        throw InputError("table has " + std::to_string(values_.size()) + " values, grid " + grid_.to_string() +
                         " needs " + std::to_string(grid_.cells()));
    }
    if (!(epsilon_ > 0.0 && epsilon_ < 0.5)) {
        throw InputError("epsilon must lie in (0, 0.5)");
    }
}

ProbabilityTable ProbabilityTable::constant(GridSpec grid, double value, double epsilon, ShapeTag tag) {
    return ProbabilityTable(grid, std::vector<double>(grid.cells(), value), epsilon, tag);
}

bool ProbabilityTable::within_box() const {
    return std::all_of(values_.begin(), values_.end(),
                       [&](double x) { return x >= epsilon_ && x <= 1.0 - epsilon_; });
}

std::vector<ConstraintViolation> check_shape_constraints(const ProbabilityTable& table, ShapeMode mode,
                                                         double slack) {
    const GridSpec& g = table.grid();
    std::vector<ConstraintViolation> out;
    auto check = [&](ConstraintFamily family, int i, int j, double residual) {
        if (residual < -slack) out.push_back({family, i, j, residual});
    };
    for (int i = 1; i <= g.recency_levels; ++i) {
        for (int j = 1; j <= g.frequency_levels; ++j) {
            const double x = table.at(i, j);
            if (i + 1 <= g.recency_levels) check(ConstraintFamily::recency_monotone, i, j, table.at(i + 1, j) - x);
            if (j + 1 <= g.frequency_levels) check(ConstraintFamily::frequency_monotone, i, j, table.at(i, j + 1) - x);
            if (mode != ShapeMode::mcc) continue;
            if (i + 2 <= g.recency_levels) {
                const double lo = table.at(i + 1, j) - x;
                const double hi = table.at(i + 2, j) - table.at(i + 1, j);
                check(ConstraintFamily::recency_convex, i, j, hi - lo);
            }
            if (j + 2 <= g.frequency_levels) {
                const double lo = table.at(i, j + 1) - x;
                const double hi = table.at(i, j + 2) - table.at(i, j + 1);
                check(ConstraintFamily::frequency_concave, i, j, lo - hi);
            }
        }
    }
    return out;
}

CountTensor::CountTensor(GridSpec grid, std::vector<std::string> categories)
    : grid_(grid),
      categories_(std::move(categories)),
      n_(categories_.size() * grid.cells(), 0),
      q_(categories_.size() * grid.cells(), 0) {}

CountTensor::CountTensor(GridSpec grid, std::vector<std::string> categories, std::vector<std::int64_t> n,
                         std::vector<std::int64_t> q)
    : grid_(grid), categories_(std::move(categories)), n_(std::move(n)), q_(std::move(q)) {
    const std::size_t expected = categories_.size() * grid_.cells();
    if (n_.size() != expected || q_.size() != expected) {
        throw InputError("count tensor needs " + std::to_string(expected) + " entries per array");
    }
    for (std::size_t x = 0; x < expected; ++x) {
        if (n_[x] < 0 || q_[x] < 0 || q_[x] > n_[x]) {
            throw InputError("count tensor entry " + std::to_string(x) + " violates 0 <= q <= n");
        }
    }
}

std::optional<std::size_t> CountTensor::category_index(std::string_view id) const {
    auto it = std::find(categories_.begin(), categories_.end(), id);
    if (it == categories_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - categories_.begin());
}

void CountTensor::add(std::size_t k, int i, int j, std::int64_t pairs, std::int64_t purchases) {
    if (purchases < 0 || pairs < purchases) throw InputError("count increment violates 0 <= q <= n");
    n_[index(k, i, j)] += pairs;
    q_[index(k, i, j)] += purchases;
}

std::int64_t CountTensor::total_pairs() const { return std::accumulate(n_.begin(), n_.end(), std::int64_t{0}); }

std::int64_t CountTensor::total_purchases() const {
    return std::accumulate(q_.begin(), q_.end(), std::int64_t{0});
}

CountTensor CountTensor::collapsed(const std::string& name) const {
    CountTensor out(grid_, {name});
    const std::size_t cells = grid_.cells();
    for (std::size_t k = 0; k < categories_.size(); ++k) {
        for (std::size_t c = 0; c < cells; ++c) {
            out.n_[c] += n_[k * cells + c];
            out.q_[c] += q_[k * cells + c];
        }
    }
    return out;
}

CountTensor CountTensor::select(const std::vector<std::size_t>& ks) const {
    std::vector<std::string> names;
    for (std::size_t k : ks) names.push_back(categories_.at(k));
    CountTensor out(grid_, names);
    const std::size_t cells = grid_.cells();
    for (std::size_t r = 0; r < ks.size(); ++r) {
        std::copy_n(n_.begin() + static_cast<std::ptrdiff_t>(ks[r] * cells), cells,
                    out.n_.begin() + static_cast<std::ptrdiff_t>(r * cells));
        std::copy_n(q_.begin() + static_cast<std::ptrdiff_t>(ks[r] * cells), cells,
                    out.q_.begin() + static_cast<std::ptrdiff_t>(r * cells));
    }
    return out;
}

void LatentClassModel::validate(double slack) const {
    const std::size_t s_count = pi.size();
    if (s_count == 0 || tables.size() != s_count) throw NumericalError("model needs one table per class");
    double sum = 0.0;
    for (double p : pi) {
        if (!(p > 0.0)) throw NumericalError("class size must be positive");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw NumericalError("class sizes do not sum to 1");
    if (memberships.rows != categories.size() || memberships.cols != s_count) {
        throw NumericalError("membership matrix shape does not match |K| x |S|");
    }
    for (std::size_t k = 0; k < memberships.rows; ++k) {
        double row = 0.0;
        for (std::size_t s = 0; s < s_count; ++s) {
            const double z = memberships(k, s);
            if (!(z >= 0.0 && z <= 1.0)) throw NumericalError("membership outside [0,1]");
            row += z;
        }
        if (std::abs(row - 1.0) > 1e-9) throw NumericalError("membership row does not sum to 1");
    }
    for (const auto& t : tables) {
        if (!t.within_box()) throw NumericalError("table leaves the epsilon box");
        if (t.tag() != ShapeTag::none) {
            const ShapeMode mode = t.tag() == ShapeTag::mcc ? ShapeMode::mcc : ShapeMode::monotone;
            if (!is_feasible(t, mode, slack)) throw NumericalError("table violates its shape constraints");
        }
    }
}

void canonicalize(LatentClassModel& model) {
    const std::size_t s_count = model.pi.size();
    std::vector<std::size_t> order(s_count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (model.pi[a] != model.pi[b]) return model.pi[a] > model.pi[b];
        return model.tables[a].values() < model.tables[b].values();
    });

    LatentClassModel sorted = model;
    for (std::size_t s = 0; s < s_count; ++s) {
        sorted.pi[s] = model.pi[order[s]];
        sorted.tables[s] = model.tables[order[s]];
        if (!model.logistic.empty()) sorted.logistic[s] = model.logistic[order[s]];
        for (std::size_t k = 0; k < model.memberships.rows; ++k) {
            sorted.memberships(k, s) = model.memberships(k, order[s]);
        }
    }
    model = std::move(sorted);
}

}  // namespace clickchoice
