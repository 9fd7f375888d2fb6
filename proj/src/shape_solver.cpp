#include "clickchoice/shape_solver.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "clickchoice/errors.hpp"

namespace clickchoice {

WeightedCellCounts::WeightedCellCounts(GridSpec g, std::vector<double> purchase, std::vector<double> non_purchase)
    : grid(g), a(std::move(purchase)), b(std::move(non_purchase)) {
    if (a.size() != grid.cells() || b.size() != grid.cells()) {
        throw InputError("weighted counts do not match grid " + grid.to_string());
    }
}

WeightedCellCounts WeightedCellCounts::from_tensor(const CountTensor& tensor, const std::vector<double>& weights) {
    WeightedCellCounts out(tensor.grid());
    const std::size_t cells = tensor.grid().cells();
    if (!weights.empty() && weights.size() != tensor.num_categories()) {
        throw InputError("weight vector length does not match category count");
    }
    for (std::size_t k = 0; k < tensor.num_categories(); ++k) {
        const double w = weights.empty() ? 1.0 : weights[k];
        if (w == 0.0) continue;
        for (std::size_t c = 0; c < cells; ++c) {
            const auto n = static_cast<double>(tensor.n_at(k, c));
            const auto q = static_cast<double>(tensor.q_at(k, c));
            out.a[c] += w * q;
            out.b[c] += w * (n - q);
        }
    }
    return out;
}

double WeightedCellCounts::total() const {
    return std::accumulate(a.begin(), a.end(), 0.0) + std::accumulate(b.begin(), b.end(), 0.0);
}

void SolverConfig::validate() const {
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw InputError("solver epsilon must lie in (0, 0.5)");
    if (!(kkt_tol > 0.0)) throw InputError("solver kkt_tol must be positive");
    if (max_newton_iterations < 1) throw InputError("solver max_newton_iterations must be >= 1");
    if (!(barrier_reduction > 1.0)) throw InputError("solver barrier_reduction must exceed 1");
    if (!(pseudo_count >= 0.0)) throw InputError("pseudo_count must be >= 0");
}

double objective_value(const ProbabilityTable& table, const WeightedCellCounts& counts) {
    if (!(table.grid() == counts.grid)) {
        throw InputError("table grid " + table.grid().to_string() + " does not match counts grid " +
                         counts.grid.to_string());
    }
    double total = 0.0;
    const auto& x = table.values();
    for (std::size_t c = 0; c < x.size(); ++c) {
        if (!(x[c] > 0.0 && x[c] < 1.0)) throw InputError("probability outside (0,1) in objective");
        if (counts.a[c] != 0.0) total += counts.a[c] * std::log(x[c]);
        if (counts.b[c] != 0.0) total += counts.b[c] * std::log1p(-x[c]);
    }
    return total;
}

namespace {

// Affine inequality  sum coef[t] * x[idx[t]] + offset >= 0  with at most three terms.
struct Row {
    std::array<int, 3> idx{};
    std::array<double, 3> coef{};
    int nnz = 0;
    double offset = 0.0;

    double eval(const Eigen::VectorXd& x) const {
        double v = offset;
        for (int t = 0; t < nnz; ++t) v += coef[t] * x[idx[t]];
        return v;
    }
    double dot(const Eigen::VectorXd& d) const {
        double v = 0.0;
        for (int t = 0; t < nnz; ++t) v += coef[t] * d[idx[t]];
        return v;
    }
};

std::vector<Row> build_rows(const GridSpec& g, ShapeMode mode, double eps) {
    std::vector<Row> rows;
    auto at = [&](int i, int j) { return static_cast<int>(g.offset(i, j)); };
    auto push = [&](std::initializer_list<std::pair<int, double>> terms, double offset) {
        Row r;
        for (const auto& [idx, coef] : terms) {
            r.idx[r.nnz] = idx;
            r.coef[r.nnz] = coef;
            ++r.nnz;
        }
        r.offset = offset;
        rows.push_back(r);
    };
    for (int i = 1; i <= g.recency_levels; ++i) {
        for (int j = 1; j <= g.frequency_levels; ++j) {
            if (i + 1 <= g.recency_levels) push({{at(i + 1, j), 1.0}, {at(i, j), -1.0}}, 0.0);
            if (j + 1 <= g.frequency_levels) push({{at(i, j + 1), 1.0}, {at(i, j), -1.0}}, 0.0);
            if (mode == ShapeMode::mcc) {
                // x[i+2] - 2 x[i+1] + x[i] >= 0
                if (i + 2 <= g.recency_levels) {
                    push({{at(i + 2, j), 1.0}, {at(i + 1, j), -2.0}, {at(i, j), 1.0}}, 0.0);
                }
                // 2 x[j+1] - x[j] - x[j+2] >= 0
                if (j + 2 <= g.frequency_levels) {
                    push({{at(i, j + 1), 2.0}, {at(i, j), -1.0}, {at(i, j + 2), -1.0}}, 0.0);
                }
            }
        }
    }
    for (int c = 0; c < static_cast<int>(g.cells()); ++c) {
        push({{c, 1.0}}, -eps);
        push({{c, -1.0}}, 1.0 - eps);
    }
    return rows;
}

// Strictly interior start: the pooled rate plus a small pattern that is
// strictly increasing and strictly convex in recency and strictly increasing
// and strictly concave in frequency, so every inequality holds strictly.
Eigen::VectorXd interior_start(const WeightedCellCounts& w, double eps) {
    const GridSpec& g = w.grid;
    const double sa = std::accumulate(w.a.begin(), w.a.end(), 0.0);
    const double total = w.total();
    double base = total > 0.0 ? sa / total : 0.5;
    base = std::clamp(base, 2.0 * eps, 1.0 - 2.0 * eps);
    const double span = std::min({0.1, 2.0 * (base - 1.5 * eps), 2.0 * (1.0 - 1.5 * eps - base)});

    const double big_j = g.frequency_levels;
    Eigen::VectorXd u(static_cast<Eigen::Index>(g.cells()));
    for (int i = 1; i <= g.recency_levels; ++i) {
        for (int j = 1; j <= g.frequency_levels; ++j) {
            const double r = static_cast<double>(i) * i;
            const double c = j * (2.0 * big_j + 1.0) - static_cast<double>(j) * j;
            u[static_cast<Eigen::Index>(g.offset(i, j))] = r + c;
        }
    }
    const double lo = u.minCoeff();
    const double hi = u.maxCoeff();
    Eigen::VectorXd x(u.size());
    for (Eigen::Index c = 0; c < u.size(); ++c) {
        const double t = hi > lo ? (u[c] - lo) / (hi - lo) : 0.5;
        x[c] = base + span * (t - 0.5);
    }
    return x;
}

class BarrierProblem {
public:
    BarrierProblem(const WeightedCellCounts& w, std::vector<Row> rows)
        : a_(Eigen::Map<const Eigen::VectorXd>(w.a.data(), static_cast<Eigen::Index>(w.a.size()))),
          b_(Eigen::Map<const Eigen::VectorXd>(w.b.data(), static_cast<Eigen::Index>(w.b.size()))),
          rows_(std::move(rows)),
          n_(a_.size()) {
        for (const Row& r : rows_) {
            for (int s = 0; s < r.nnz; ++s) {
                for (int t = 0; t < r.nnz; ++t) pattern_.emplace_back(r.idx[s], r.idx[t], 0.0);
            }
        }
        for (Eigen::Index c = 0; c < n_; ++c) pattern_.emplace_back(c, c, 0.0);
    }

    Eigen::Index size() const { return n_; }
    std::size_t constraints() const { return rows_.size(); }

    // -f(x) - mu * sum log c_r(x); +inf outside the open feasible region.
    double value(const Eigen::VectorXd& x, double mu) const {
        double v = 0.0;
        for (Eigen::Index c = 0; c < n_; ++c) {
            if (a_[c] != 0.0) v -= a_[c] * std::log(x[c]);
            if (b_[c] != 0.0) v -= b_[c] * std::log1p(-x[c]);
        }
        double barrier = 0.0;
        for (const Row& r : rows_) {
            const double s = r.eval(x);
            if (!(s > 0.0)) return std::numeric_limits<double>::infinity();
            barrier += std::log(s);
        }
        return v - mu * barrier;
    }

    void gradient_hessian(const Eigen::VectorXd& x, double mu, Eigen::VectorXd& grad,
                          Eigen::SparseMatrix<double>& hess) {
        grad.setZero(n_);
        std::size_t p = 0;
        for (const Row& r : rows_) {
            const double s = r.eval(x);
            const double inv = 1.0 / s;
            for (int t = 0; t < r.nnz; ++t) grad[r.idx[t]] -= mu * r.coef[t] * inv;
            const double curv = mu * inv * inv;
            for (int s1 = 0; s1 < r.nnz; ++s1) {
                for (int t = 0; t < r.nnz; ++t) {
                    pattern_[p++] = Eigen::Triplet<double>(r.idx[s1], r.idx[t], curv * r.coef[s1] * r.coef[t]);
                }
            }
        }
        for (Eigen::Index c = 0; c < n_; ++c) {
            const double xc = x[c];
            const double om = 1.0 - xc;
            grad[c] += -a_[c] / xc + b_[c] / om;
            pattern_[p++] = Eigen::Triplet<double>(c, c, a_[c] / (xc * xc) + b_[c] / (om * om));
        }
        hess.setFromTriplets(pattern_.begin(), pattern_.end());
    }

    // Largest step keeping every row strictly positive, capped at 1.
    double max_step(const Eigen::VectorXd& x, const Eigen::VectorXd& d) const {
        double alpha = 1.0;
        for (const Row& r : rows_) {
            const double rate = r.dot(d);
            if (rate < 0.0) alpha = std::min(alpha, 0.99 * (-r.eval(x) / rate));
        }
        return alpha;
    }

private:
    Eigen::VectorXd a_;
    Eigen::VectorXd b_;
    std::vector<Row> rows_;
    Eigen::Index n_;
    std::vector<Eigen::Triplet<double>> pattern_;
};

// Newton's method on the face {x : rows in `active` hold with equality},
// via the regularized KKT system [H A'; A -d I]. Returns nullopt when the
// iteration leaves (0,1) or does not settle.
std::optional<Eigen::VectorXd> solve_on_face(const WeightedCellCounts& w, const std::vector<Row>& rows,
                                             const std::vector<std::size_t>& active, Eigen::VectorXd x) {
    const Eigen::Index n = x.size();
    const auto na = static_cast<Eigen::Index>(active.size());
    double hscale = 1.0;
    for (Eigen::Index c = 0; c < n; ++c) hscale = std::max(hscale, w.a[c] + w.b[c]);
    const double d1 = 1e-13 * hscale;
    const double d2 = 1e-13;

    std::vector<Eigen::Triplet<double>> trip;
    Eigen::SparseMatrix<double> kkt(n + na, n + na);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    Eigen::VectorXd rhs(n + na);
    // Multiplier estimate carried between steps so the -d2 block does not bias
    // the equalities (proximal method of multipliers).
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(na);
    double last = std::numeric_limits<double>::infinity();
    for (int it = 0; it < 30; ++it) {
        trip.clear();
        for (Eigen::Index c = 0; c < n; ++c) {
            const double xc = x[c];
            if (!(xc > 0.0 && xc < 1.0)) return std::nullopt;
            const double om = 1.0 - xc;
            trip.emplace_back(c, c, w.a[c] / (xc * xc) + w.b[c] / (om * om) + d1);
            rhs[c] = w.a[c] / xc - w.b[c] / om;  // -grad of -f
        }
        double residual = 0.0;
        for (Eigen::Index r = 0; r < na; ++r) {
            const Row& row = rows[active[static_cast<std::size_t>(r)]];
            for (int t = 0; t < row.nnz; ++t) {
                trip.emplace_back(n + r, row.idx[t], row.coef[t]);
                trip.emplace_back(row.idx[t], n + r, row.coef[t]);
            }
            trip.emplace_back(n + r, n + r, -d2);
            const double v = row.eval(x);
            rhs[n + r] = -v - d2 * nu[r];
            residual = std::max(residual, std::abs(v));
        }
        kkt.setFromTriplets(trip.begin(), trip.end());
        if (it == 0) ldlt.analyzePattern(kkt);
        ldlt.factorize(kkt);
        if (ldlt.info() != Eigen::Success) return std::nullopt;
        const Eigen::VectorXd sol = ldlt.solve(rhs);
        const Eigen::VectorXd dx = sol.head(n);
        nu = sol.tail(na);
        if (!dx.allFinite()) return std::nullopt;
        x += dx;
        const double size = dx.lpNorm<Eigen::Infinity>();
        if (size <= 1e-15 && residual <= 1e-14) return x;
        // stalled at roundoff
        if (size >= last && size <= 1e-12) return x;
        last = size;
    }
    return std::nullopt;
}

// Refines a barrier solution by solving exactly on the faces suggested by
// small slacks. Weakly active constraints leave the barrier point about
// sqrt(mu) away from the optimum; this recovers full precision. A candidate
// is kept only if it is feasible and does not lower the objective.
Eigen::VectorXd polish(const WeightedCellCounts& w, const std::vector<Row>& rows, const Eigen::VectorXd& xb) {
    auto objective = [&](const Eigen::VectorXd& x) {
        double v = 0.0;
        for (Eigen::Index c = 0; c < x.size(); ++c) {
            if (w.a[c] != 0.0) v += w.a[c] * std::log(x[c]);
            if (w.b[c] != 0.0) v += w.b[c] * std::log1p(-x[c]);
        }
        return v;
    };
    Eigen::VectorXd best = xb;
    double best_value = objective(xb);
    std::vector<double> slack(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) slack[r] = rows[r].eval(xb);

    std::size_t previous = std::numeric_limits<std::size_t>::max();
    for (double tau : {1e-3, 1e-4, 1e-5, 1e-6, 1e-7}) {
        std::vector<std::size_t> active;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (slack[r] <= tau) active.push_back(r);
        }
        if (active.empty() || active.size() == previous) continue;
        previous = active.size();
        auto cand = solve_on_face(w, rows, active, xb);
        if (!cand) continue;
        bool feasible = true;
        for (const Row& r : rows) {
            if (r.eval(*cand) < -1e-12) {
                feasible = false;
                break;
            }
        }
        if (!feasible) continue;
        const double v = objective(*cand);
        if (v >= best_value) {
            best = std::move(*cand);
            best_value = v;
        }
    }
    return best;
}

void check_weights(const WeightedCellCounts& w) {
    if (w.a.size() != w.grid.cells() || w.b.size() != w.grid.cells()) {
        throw InputError("weighted counts do not match grid " + w.grid.to_string());
    }
    for (std::size_t c = 0; c < w.a.size(); ++c) {
        if (!std::isfinite(w.a[c]) || !std::isfinite(w.b[c])) throw NumericalError("non-finite cell weight");
        if (w.a[c] < 0.0 || w.b[c] < 0.0) throw InputError("negative cell weight");
    }
}

}  // namespace

ShapeFit fit_shape(const WeightedCellCounts& counts, ShapeMode mode, const SolverConfig& config) {
    config.validate();
    check_weights(counts);

    WeightedCellCounts work = counts;
    if (config.pseudo_count > 0.0) {
        for (auto& v : work.a) v += config.pseudo_count;
        for (auto& v : work.b) v += config.pseudo_count;
    }

    const double eps = config.epsilon;
    const std::vector<Row> rows = build_rows(counts.grid, mode, eps);
    BarrierProblem problem(work, rows);
    const double scale = std::max(work.total(), 1.0);
    const auto m = static_cast<double>(problem.constraints());

    Eigen::VectorXd x = interior_start(work, eps);
    Eigen::VectorXd grad;
    Eigen::VectorXd step;
    Eigen::SparseMatrix<double> hess(problem.size(), problem.size());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    bool analyzed = false;

    ShapeFit fit;
    double mu = scale / m;
    const double gap_target = config.kkt_tol * scale;
    constexpr double kCenteringTol = 1e-10;  // Newton decrement^2 / mu
    constexpr double kRoundoff = 1e-14;

    while (true) {
        ++fit.barrier_rounds;
        double current = problem.value(x, mu);
        while (fit.newton_iterations < config.max_newton_iterations) {
            problem.gradient_hessian(x, mu, grad, hess);
            if (!analyzed) {
                ldlt.analyzePattern(hess);
                analyzed = true;
            }
            ldlt.factorize(hess);
            if (ldlt.info() != Eigen::Success) throw NumericalError("barrier Newton system is not positive definite");
            step = ldlt.solve(-grad);
            ++fit.newton_iterations;

            const double slope = grad.dot(step);
            const double decrement = -slope;
            if (!std::isfinite(decrement)) throw NumericalError("barrier Newton step is not finite");
            if (decrement / mu <= kCenteringTol) break;
            // below what the objective can resolve
            if (decrement <= kRoundoff * std::max(std::abs(current), 1.0)) break;

            double alpha = problem.max_step(x, step);
            bool moved = false;
            while (alpha > 1e-14) {
                Eigen::VectorXd trial = x + alpha * step;
                const double value = problem.value(trial, mu);
                if (value <= current + 0.25 * alpha * slope) {
                    moved = value < current;
                    x = std::move(trial);
                    current = value;
                    break;
                }
                alpha *= 0.5;
            }
            // No representable decrease left at this mu: roundoff floor.
            if (!moved) break;
        }
        if (m * mu <= gap_target) {
            fit.converged = true;
            break;
        }
        if (fit.newton_iterations >= config.max_newton_iterations) break;
        mu /= config.barrier_reduction;
    }

    x = polish(work, rows, x);
    for (Eigen::Index c = 0; c < x.size(); ++c) x[c] = std::clamp(x[c], eps, 1.0 - eps);

    std::vector<double> values(x.data(), x.data() + x.size());
    const ShapeTag tag = mode == ShapeMode::mcc ? ShapeTag::mcc : ShapeTag::monotone;
    fit.table = ProbabilityTable(counts.grid, std::move(values), eps, tag);
    if (!fit.table.within_box() || !is_feasible(fit.table, mode)) {
        throw NumericalError("shape solver returned an infeasible table");
    }
    fit.objective = objective_value(fit.table, counts);
    return fit;
}

std::string solver_backend_version() {
    return "Eigen " + std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
           std::to_string(EIGEN_MINOR_VERSION);
}

}  // namespace clickchoice
