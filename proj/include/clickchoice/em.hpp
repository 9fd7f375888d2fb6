#pragma once
// Latent-class mixture over product categories fitted by EM.
//
// Each category k carries the event E_k = {(n_ijk, q_ijk)}; class s has its
// own table X_s and size pi_s. Log-likelihoods omit the binomial
// coefficients unless asked for: they are constant in (pi, X) and cancel in
// every posterior.

#include <cstdint>
#include <string>
#include <vector>

#include "clickchoice/shape_solver.hpp"
#include "clickchoice/types.hpp"

namespace clickchoice {

struct EmConfig {
    int classes = 1;
    int max_em_iterations = 10;
    double loglik_rel_tol = 1e-6;
    int restarts = 10;
    std::uint64_t seed = 0;
    int threads = 1;
    SolverConfig solver;

    void validate() const;
};

// log f(E_k; X). With include_coefficients the log C(n, q) terms are added.
double log_event_likelihood(const CountTensor& tensor, std::size_t k, const ProbabilityTable& table,
                            bool include_coefficients = false);

// |K| x |S| matrix of log f(E_k; X_s).
Matrix event_log_likelihoods(const CountTensor& tensor, const std::vector<ProbabilityTable>& tables,
                             bool include_coefficients = false);

// Bayes-rule memberships via log-sum-exp.
Matrix posterior_memberships(const CountTensor& tensor, const std::vector<double>& pi,
                             const std::vector<ProbabilityTable>& tables, bool include_coefficients = false);

// pi_s = sum_k z_ks / |K|.
std::vector<double> update_class_sizes(const Matrix& memberships);

// One weighted MCC fit per class: a = sum_k z_ks q_ijk, b = sum_k z_ks (n_ijk - q_ijk).
std::vector<ProbabilityTable> m_step_tables(const CountTensor& tensor, const Matrix& memberships,
                                            const SolverConfig& config = {}, int threads = 1);

// sum_k log sum_s pi_s f(E_k; X_s).
double observed_log_likelihood(const CountTensor& tensor, const std::vector<double>& pi,
                               const std::vector<ProbabilityTable>& tables, bool include_coefficients = false);

// sum_ks z_ks (log f(E_k; X_s) + log pi_s).
double complete_log_likelihood(const CountTensor& tensor, const Matrix& memberships, const std::vector<double>& pi,
                               const std::vector<ProbabilityTable>& tables);

// Symmetric Dirichlet(1) rows.
Matrix random_memberships(std::size_t categories, std::size_t classes, std::uint64_t seed);

// Latent-class MCC model: `restarts` EM chains, best final observed
// log-likelihood wins, classes canonically ordered.
LatentClassModel em_fit(const CountTensor& tensor, const EmConfig& config);

}  // namespace clickchoice
