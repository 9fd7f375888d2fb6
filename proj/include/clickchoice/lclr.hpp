#pragma once
// Latent-class logistic regression baseline: p_ijs = sigmoid(b0 + b1 i + b2 j)
// with raw integer levels as covariates, fitted through the same EM loop as
// the latent-class MCC model.

#include <vector>

#include "clickchoice/em.hpp"
#include "clickchoice/types.hpp"

namespace clickchoice {

inline constexpr double kLogisticCap = 50.0;

// sigmoid(b0 + b1 i + b2 j) clamped to [eps, 1 - eps]; untagged.
ProbabilityTable logistic_table(const LogisticClassParams& params, const GridSpec& grid,
                                double epsilon = kDefaultEpsilon);

struct LogisticFit {
    LogisticClassParams params;
    double gradient_norm = 0.0;
    int iterations = 0;
};

// Newton-Raphson on sum_ijk w_k (q log p + (n - q) log(1 - p)). Coefficients
// are confined to [-50, 50]; hitting the cap sets params.capped.
LogisticFit fit_weighted_logistic(const CountTensor& tensor, const std::vector<double>& weights = {});

// Gradient of the weighted log-likelihood at `params` (unclamped link).
std::vector<double> logistic_gradient(const CountTensor& tensor, const std::vector<double>& weights,
                                      const LogisticClassParams& params);

LatentClassModel lclr_em_fit(const CountTensor& tensor, const EmConfig& config);

}  // namespace clickchoice
