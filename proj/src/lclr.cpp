#include "clickchoice/lclr.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "clickchoice/errors.hpp"
#include "clickchoice/mixture.hpp"

namespace clickchoice {

namespace {

constexpr double kGradientTol = 1e-8;
constexpr int kMaxNewton = 200;

double sigmoid(double eta) {
    if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

// log(1 + exp(v)) without overflow.
double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

struct CellData {
    double i;
    double j;
    double pos;  // weighted purchases
    double neg;  // weighted non-purchases
};

std::vector<CellData> collect(const CountTensor& tensor, const std::vector<double>& weights) {
    const GridSpec& g = tensor.grid();
    std::vector<CellData> out;
    std::vector<double> pos(g.cells(), 0.0), neg(g.cells(), 0.0);
    for (std::size_t k = 0; k < tensor.num_categories(); ++k) {
        const double w = weights.empty() ? 1.0 : weights[k];
        if (w == 0.0) continue;
        for (std::size_t c = 0; c < g.cells(); ++c) {
            pos[c] += w * static_cast<double>(tensor.q_at(k, c));
            neg[c] += w * static_cast<double>(tensor.n_at(k, c) - tensor.q_at(k, c));
        }
    }
    for (int i = 1; i <= g.recency_levels; ++i) {
        for (int j = 1; j <= g.frequency_levels; ++j) {
            const std::size_t c = g.offset(i, j);
            if (pos[c] + neg[c] > 0.0) out.push_back({double(i), double(j), pos[c], neg[c]});
        }
    }
    return out;
}

double eta_of(const Eigen::Vector3d& beta, const CellData& d) { return beta[0] + beta[1] * d.i + beta[2] * d.j; }

double loglik(const std::vector<CellData>& data, const Eigen::Vector3d& beta) {
    double total = 0.0;
    for (const auto& d : data) {
        const double eta = eta_of(beta, d);
        // log p = -softplus(-eta), log(1-p) = -softplus(eta)
        total -= d.pos * softplus(-eta) + d.neg * softplus(eta);
    }
    return total;
}

Eigen::Vector3d gradient(const std::vector<CellData>& data, const Eigen::Vector3d& beta) {
    Eigen::Vector3d g = Eigen::Vector3d::Zero();
    for (const auto& d : data) {
        const double p = sigmoid(eta_of(beta, d));
        const double r = d.pos - (d.pos + d.neg) * p;
        g += r * Eigen::Vector3d(1.0, d.i, d.j);
    }
    return g;
}

Eigen::Vector3d clip(Eigen::Vector3d beta) {
    for (int t = 0; t < 3; ++t) beta[t] = std::clamp(beta[t], -kLogisticCap, kLogisticCap);
    return beta;
}

LogisticClassParams to_params(const Eigen::Vector3d& beta) {
    LogisticClassParams p{beta[0], beta[1], beta[2], false};
    p.capped = (beta.cwiseAbs().array() >= kLogisticCap).any();
    return p;
}

}  // namespace

ProbabilityTable logistic_table(const LogisticClassParams& params, const GridSpec& grid, double epsilon) {
    std::vector<double> values(grid.cells());
    for (int i = 1; i <= grid.recency_levels; ++i) {
        for (int j = 1; j <= grid.frequency_levels; ++j) {
            const double p = sigmoid(params.beta0 + params.beta1 * i + params.beta2 * j);
            values[grid.offset(i, j)] = std::clamp(p, epsilon, 1.0 - epsilon);
        }
    }
    return ProbabilityTable(grid, std::move(values), epsilon, ShapeTag::none);
}

std::vector<double> logistic_gradient(const CountTensor& tensor, const std::vector<double>& weights,
                                      const LogisticClassParams& params) {
    const auto g = gradient(collect(tensor, weights), Eigen::Vector3d(params.beta0, params.beta1, params.beta2));
    return {g[0], g[1], g[2]};
}

LogisticFit fit_weighted_logistic(const CountTensor& tensor, const std::vector<double>& weights) {
    if (!weights.empty() && weights.size() != tensor.num_categories()) {
        throw InputError("weight vector length does not match category count");
    }
    for (double w : weights) {
        if (!(w >= 0.0 && w <= 1.0)) throw InputError("logistic weights must lie in [0, 1]");
    }
    const auto data = collect(tensor, weights);
    LogisticFit fit;
    double total_pos = 0.0, total_neg = 0.0;
    for (const auto& d : data) {
        total_pos += d.pos;
        total_neg += d.neg;
    }
    if (data.empty()) return fit;
    // The MLE sits at infinity when one outcome never occurs.
    if (total_pos == 0.0 || total_neg == 0.0) {
        fit.params = to_params(Eigen::Vector3d(total_pos == 0.0 ? -kLogisticCap : kLogisticCap, 0.0, 0.0));
        fit.gradient_norm = gradient(data, Eigen::Vector3d(fit.params.beta0, 0.0, 0.0)).norm();
        return fit;
    }

    Eigen::Vector3d beta = Eigen::Vector3d::Zero();
    double current = loglik(data, beta);
    for (; fit.iterations < kMaxNewton; ++fit.iterations) {
        const Eigen::Vector3d g = gradient(data, beta);
        fit.gradient_norm = g.norm();
        if (fit.gradient_norm <= kGradientTol) break;

        Eigen::Matrix3d info = Eigen::Matrix3d::Zero();
        for (const auto& d : data) {
            const double p = sigmoid(eta_of(beta, d));
            const Eigen::Vector3d x(1.0, d.i, d.j);
            info += (d.pos + d.neg) * p * (1.0 - p) * x * x.transpose();
        }
        Eigen::LDLT<Eigen::Matrix3d> ldlt(info);
        Eigen::Vector3d step = ldlt.solve(g);
        if (ldlt.info() != Eigen::Success || !step.allFinite() || g.dot(step) <= 0.0) step = g;

        double alpha = 1.0;
        bool moved = false;
        while (alpha > 1e-12) {
            const Eigen::Vector3d trial = clip(beta + alpha * step);
            const double value = loglik(data, trial);
            if (value >= current) {
                moved = (trial - beta).norm() > 0.0;
                beta = trial;
                current = value;
                break;
            }
            alpha *= 0.5;
        }
        if (!moved) break;
    }
    fit.gradient_norm = gradient(data, beta).norm();
    fit.params = to_params(beta);
    return fit;
}

namespace {

class LogisticFitter final : public ClassFitter {
public:
    explicit LogisticFitter(double epsilon) : epsilon_(epsilon) {}
    ModelKind kind() const override { return ModelKind::lclr; }
    ClassFit fit(const CountTensor& tensor, const std::vector<double>& weights) const override {
        ClassFit out;
        out.logistic = fit_weighted_logistic(tensor, weights).params;
        out.table = logistic_table(out.logistic, tensor.grid(), epsilon_);
        return out;
    }

private:
    double epsilon_;
};

}  // namespace

LatentClassModel lclr_em_fit(const CountTensor& tensor, const EmConfig& config) {
    return fit_mixture(tensor, config, LogisticFitter(config.solver.epsilon));
}

}  // namespace clickchoice
