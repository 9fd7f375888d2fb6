#include "clickchoice/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "clickchoice/errors.hpp"
#include "clickchoice/mixture.hpp"
#include "clickchoice/parallel.hpp"
#include "clickchoice/rng.hpp"

namespace clickchoice {

void EmConfig::validate() const {
    if (classes < 1) throw InputError("number of classes must be >= 1");
    if (max_em_iterations < 0) throw InputError("max_em_iterations must be >= 0");
    if (restarts < 1) throw InputError("restarts must be >= 1");
    if (!(loglik_rel_tol >= 0.0)) throw InputError("loglik_rel_tol must be >= 0");
    solver.validate();
}

namespace {

double log_binomial_coefficient(std::int64_t n, std::int64_t q) {
    return std::lgamma(static_cast<double>(n) + 1.0) - std::lgamma(static_cast<double>(q) + 1.0) -
           std::lgamma(static_cast<double>(n - q) + 1.0);
}

double log_sum_exp(const double* v, std::size_t count) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < count; ++s) hi = std::max(hi, v[s]);
    if (!std::isfinite(hi)) return hi;
    double sum = 0.0;
    for (std::size_t s = 0; s < count; ++s) sum += std::exp(v[s] - hi);
    return hi + std::log(sum);
}

void check_tables(const CountTensor& tensor, const std::vector<ProbabilityTable>& tables) {
    for (const auto& t : tables) {
        if (!(t.grid() == tensor.grid())) {
            throw InputError("table grid " + t.grid().to_string() + " does not match tensor grid " +
                             tensor.grid().to_string());
        }
    }
}

}  // namespace

double log_event_likelihood(const CountTensor& tensor, std::size_t k, const ProbabilityTable& table,
                            bool include_coefficients) {
    const std::size_t cells = tensor.grid().cells();
    const auto& x = table.values();
    double total = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
        const std::int64_t n = tensor.n_at(k, c);
        if (n == 0) continue;
        const std::int64_t q = tensor.q_at(k, c);
        if (q > 0) total += static_cast<double>(q) * std::log(x[c]);
        if (n > q) total += static_cast<double>(n - q) * std::log1p(-x[c]);
        if (include_coefficients) total += log_binomial_coefficient(n, q);
    }
    return total;
}

Matrix event_log_likelihoods(const CountTensor& tensor, const std::vector<ProbabilityTable>& tables,
                             bool include_coefficients) {
    check_tables(tensor, tables);
    Matrix out(tensor.num_categories(), tables.size());
    for (std::size_t k = 0; k < out.rows; ++k) {
        for (std::size_t s = 0; s < out.cols; ++s) {
            out(k, s) = log_event_likelihood(tensor, k, tables[s], include_coefficients);
        }
    }
    return out;
}

Matrix posterior_memberships(const CountTensor& tensor, const std::vector<double>& pi,
                             const std::vector<ProbabilityTable>& tables, bool include_coefficients) {
    if (pi.size() != tables.size()) throw InputError("pi and tables disagree on the number of classes");
    Matrix z = event_log_likelihoods(tensor, tables, include_coefficients);
    const std::size_t s_count = pi.size();
    std::vector<double> log_pi(s_count);
    for (std::size_t s = 0; s < s_count; ++s) log_pi[s] = std::log(pi[s]);
    for (std::size_t k = 0; k < z.rows; ++k) {
        double* row = &z.data[k * s_count];
        for (std::size_t s = 0; s < s_count; ++s) row[s] += log_pi[s];
        const double norm = log_sum_exp(row, s_count);
        double sum = 0.0;
        for (std::size_t s = 0; s < s_count; ++s) {
            row[s] = std::exp(row[s] - norm);
            sum += row[s];
        }
        for (std::size_t s = 0; s < s_count; ++s) row[s] /= sum;
    }
    return z;
}

std::vector<double> update_class_sizes(const Matrix& memberships) {
    std::vector<double> pi(memberships.cols, 0.0);
    if (memberships.rows == 0) return pi;
    for (std::size_t k = 0; k < memberships.rows; ++k) {
        for (std::size_t s = 0; s < memberships.cols; ++s) pi[s] += memberships(k, s);
    }
    for (double& p : pi) p /= static_cast<double>(memberships.rows);
    return pi;
}

std::vector<ProbabilityTable> m_step_tables(const CountTensor& tensor, const Matrix& memberships,
                                            const SolverConfig& config, int threads) {
    if (memberships.rows != tensor.num_categories()) {
        throw InputError("membership rows do not match the category count");
    }
    std::vector<ProbabilityTable> tables(memberships.cols);
    parallel_for(memberships.cols, threads, [&](std::size_t s) {
        std::vector<double> w(memberships.rows);
        for (std::size_t k = 0; k < memberships.rows; ++k) w[k] = memberships(k, s);
        tables[s] = fit_mcc(WeightedCellCounts::from_tensor(tensor, w), config).table;
    });
    return tables;
}

double observed_log_likelihood(const CountTensor& tensor, const std::vector<double>& pi,
                               const std::vector<ProbabilityTable>& tables, bool include_coefficients) {
    if (pi.size() != tables.size()) throw InputError("pi and tables disagree on the number of classes");
    Matrix ll = event_log_likelihoods(tensor, tables, include_coefficients);
    const std::size_t s_count = pi.size();
    double total = 0.0;
    std::vector<double> row(s_count);
    for (std::size_t k = 0; k < ll.rows; ++k) {
        for (std::size_t s = 0; s < s_count; ++s) row[s] = std::log(pi[s]) + ll(k, s);
        total += log_sum_exp(row.data(), s_count);
    }
    return total;
}

double complete_log_likelihood(const CountTensor& tensor, const Matrix& memberships, const std::vector<double>& pi,
                               const std::vector<ProbabilityTable>& tables) {
    Matrix ll = event_log_likelihoods(tensor, tables);
    double total = 0.0;
    for (std::size_t k = 0; k < ll.rows; ++k) {
        for (std::size_t s = 0; s < ll.cols; ++s) {
            const double z = memberships(k, s);
            if (z > 0.0) total += z * (ll(k, s) + std::log(pi[s]));
        }
    }
    return total;
}

Matrix random_memberships(std::size_t categories, std::size_t classes, std::uint64_t seed) {
    Rng rng(seed);
    Matrix z(categories, classes);
    for (std::size_t k = 0; k < categories; ++k) {
        double sum = 0.0;
        for (std::size_t s = 0; s < classes; ++s) {
            // Exp(1) draws normalized to a Dirichlet(1) row.
            const double e = -std::log1p(-uniform01(rng));
            z(k, s) = e;
            sum += e;
        }
        for (std::size_t s = 0; s < classes; ++s) z(k, s) /= sum;
    }
    return z;
}

namespace {

class MccFitter final : public ClassFitter {
public:
    explicit MccFitter(SolverConfig config) : config_(config) {}
    ModelKind kind() const override { return ModelKind::lcmcc; }
    ClassFit fit(const CountTensor& tensor, const std::vector<double>& weights) const override {
        ClassFit out;
        out.table = fit_mcc(WeightedCellCounts::from_tensor(tensor, weights), config_).table;
        return out;
    }

private:
    SolverConfig config_;
};

}  // namespace

LatentClassModel em_fit(const CountTensor& tensor, const EmConfig& config) {
    return fit_mixture(tensor, config, MccFitter(config.solver));
}

}  // namespace clickchoice
