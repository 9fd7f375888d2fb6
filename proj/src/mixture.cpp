#include "clickchoice/mixture.hpp"

#include <cmath>
#include <limits>

#include "clickchoice/errors.hpp"
#include "clickchoice/parallel.hpp"
#include "clickchoice/rng.hpp"
#include "clickchoice/shape_solver.hpp"

namespace clickchoice {

double class_objective(const CountTensor& tensor, const std::vector<double>& weights, const ProbabilityTable& table) {
    return objective_value(table, WeightedCellCounts::from_tensor(tensor, weights));
}

namespace {

std::vector<double> column(const Matrix& z, std::size_t s) {
    std::vector<double> w(z.rows);
    for (std::size_t k = 0; k < z.rows; ++k) w[k] = z(k, s);
    return w;
}

std::vector<ProbabilityTable> tables_of(const std::vector<ClassFit>& fits) {
    std::vector<ProbabilityTable> out;
    out.reserve(fits.size());
    for (const auto& f : fits) out.push_back(f.table);
    return out;
}

bool has_empty_class(const Matrix& z) {
    const double floor = 1e-8 * static_cast<double>(z.rows);
    for (std::size_t s = 0; s < z.cols; ++s) {
        double mass = 0.0;
        for (std::size_t k = 0; k < z.rows; ++k) mass += z(k, s);
        if (mass < floor) return true;
    }
    return false;
}

// Steps 2 of the algorithm: class sizes, then one table per class.
void m_step(const CountTensor& tensor, const ClassFitter& fitter, const Matrix& z, std::vector<double>& pi,
            std::vector<ClassFit>& fits) {
    pi = update_class_sizes(z);
    const bool have_previous = fits.size() == z.cols;
    std::vector<ClassFit> next(z.cols);
    for (std::size_t s = 0; s < z.cols; ++s) {
        const auto w = column(z, s);
        ClassFit candidate = fitter.fit(tensor, w);
        if (have_previous &&
            class_objective(tensor, w, fits[s].table) > class_objective(tensor, w, candidate.table)) {
            candidate = fits[s];
        }
        next[s] = std::move(candidate);
    }
    fits = std::move(next);
}

}  // namespace

ChainResult run_chain(const CountTensor& tensor, const EmConfig& config, const ClassFitter& fitter,
                      Matrix initial_memberships) {
    ChainResult out;
    out.memberships = std::move(initial_memberships);
    auto& diag = out.diagnostics;

    auto record = [&] {
        const auto tables = tables_of(out.fits);
        diag.log_likelihood_trace.push_back(observed_log_likelihood(tensor, out.pi, tables));
        diag.complete_log_likelihood_trace.push_back(complete_log_likelihood(tensor, out.memberships, out.pi, tables));
    };

    // Step 0 enters at the M-step.
    m_step(tensor, fitter, out.memberships, out.pi, out.fits);
    record();
    if (has_empty_class(out.memberships)) {
        diag.degenerate = true;
        return out;
    }

    for (int it = 1; it <= config.max_em_iterations; ++it) {
        out.memberships = posterior_memberships(tensor, out.pi, tables_of(out.fits));
        if (has_empty_class(out.memberships)) {
            diag.degenerate = true;
            break;
        }
        m_step(tensor, fitter, out.memberships, out.pi, out.fits);
        record();
        diag.iterations = it;
        const auto& trace = diag.log_likelihood_trace;
        const double prev = trace[trace.size() - 2];
        const double gain = trace.back() - prev;
        const double scale = std::max(std::abs(prev), std::numeric_limits<double>::min());
        if (gain / scale < config.loglik_rel_tol) {
            diag.converged = true;
            break;
        }
    }
    // Report memberships consistent with the final parameters.
    if (!diag.degenerate) out.memberships = posterior_memberships(tensor, out.pi, tables_of(out.fits));
    return out;
}

LatentClassModel fit_mixture(const CountTensor& tensor, const EmConfig& config, const ClassFitter& fitter) {
    config.validate();
    if (tensor.num_categories() == 0) throw InputError("tensor has no categories");

    const auto chains = static_cast<std::size_t>(config.restarts);
    const auto classes = static_cast<std::size_t>(config.classes);
    std::vector<ChainResult> results(chains);

    parallel_for(chains, config.threads, [&](std::size_t c) {
        const std::uint64_t seed = derive_seed(config.seed, c);
        try {
            results[c] = run_chain(tensor, config, fitter, random_memberships(tensor.num_categories(), classes, seed));
        } catch (const std::exception& e) {
            results[c] = ChainResult{};
            results[c].diagnostics.failed = true;
            results[c].diagnostics.failure = e.what();
        }
        results[c].diagnostics.seed = seed;
    });

    // Best final log-likelihood among healthy chains, lowest index on ties;
    // degenerate chains only when nothing else survived.
    int best = -1;
    bool best_degenerate = true;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < chains; ++c) {
        const auto& d = results[c].diagnostics;
        if (d.failed || d.log_likelihood_trace.empty()) continue;
        const double ll = d.log_likelihood_trace.back();
        const bool better = best < 0 || (best_degenerate && !d.degenerate) ||
                            (best_degenerate == d.degenerate && ll > best_ll);
        if (better) {
            best = static_cast<int>(c);
            best_degenerate = d.degenerate;
            best_ll = ll;
        }
    }
    if (best < 0) {
        std::string why = "all EM chains failed";
        for (const auto& r : results) {
            if (!r.diagnostics.failure.empty()) {
                why += ": " + r.diagnostics.failure;
                break;
            }
        }
        throw NumericalError(why);
    }

    ChainResult& chosen = results[static_cast<std::size_t>(best)];
    LatentClassModel model;
    model.kind = fitter.kind();
    model.categories = tensor.categories();
    model.pi = chosen.pi;
    for (auto& f : chosen.fits) {
        model.tables.push_back(f.table);
        if (model.kind == ModelKind::lclr) model.logistic.push_back(f.logistic);
    }
    model.memberships = chosen.memberships;
    model.final_log_likelihood = best_ll;
    for (auto& r : results) model.diagnostics.chains.push_back(std::move(r.diagnostics));
    model.diagnostics.chosen_restart = best;
    model.diagnostics.degenerate = best_degenerate;
    canonicalize(model);
    return model;
}

}  // namespace clickchoice
