#pragma once
// The EM loop shared by the latent-class MCC model and latent-class logistic
// regression. Only the per-class M-step differs between the two.

#include <vector>

#include "clickchoice/em.hpp"
#include "clickchoice/types.hpp"

namespace clickchoice {

struct ClassFit {
    ProbabilityTable table;
    LogisticClassParams logistic;
};

class ClassFitter {
public:
    virtual ~ClassFitter() = default;
    virtual ModelKind kind() const = 0;
    // Maximizes the z-weighted likelihood for one class. `weights` has one
    // entry per category.
    virtual ClassFit fit(const CountTensor& tensor, const std::vector<double>& weights) const = 0;
};

struct ChainResult {
    std::vector<double> pi;
    std::vector<ClassFit> fits;
    Matrix memberships;
    ChainDiagnostics diagnostics;
};

// Weighted class objective sum_ij a log x + b log(1-x) of a fitted table.
double class_objective(const CountTensor& tensor, const std::vector<double>& weights, const ProbabilityTable& table);

// One EM chain from the given initial memberships. The first M-step does not
// count as an iteration. An M-step result that scores below the previous
// table on the new weights is replaced by the previous table, which keeps
// every round a non-decreasing step of the observed likelihood.
ChainResult run_chain(const CountTensor& tensor, const EmConfig& config, const ClassFitter& fitter,
                      Matrix initial_memberships);

LatentClassModel fit_mixture(const CountTensor& tensor, const EmConfig& config, const ClassFitter& fitter);

}  // namespace clickchoice
