#include "clickchoice/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "clickchoice/errors.hpp"
#include "clickchoice/rng.hpp"

namespace clickchoice {

ProbabilityTable planted_mcc_table(const GridSpec& grid, double base, double amplitude, double recency_power,
                                   double frequency_saturation, double epsilon) {
    if (recency_power < 1.0) throw InputError("recency_power must be >= 1 for a convex recency profile");
    if (frequency_saturation <= 0.0) throw InputError("frequency_saturation must be positive");
    std::vector<double> values(grid.cells());
    const double big_i = grid.recency_levels;
    const double big_j = grid.frequency_levels;
    const double norm = 1.0 - std::exp(-frequency_saturation * big_j);
    for (int i = 1; i <= grid.recency_levels; ++i) {
        const double r = grid.recency_levels == 1 ? 1.0 : std::pow((i - 1.0) / (big_i - 1.0), recency_power);
        for (int j = 1; j <= grid.frequency_levels; ++j) {
            const double c = (1.0 - std::exp(-frequency_saturation * j)) / norm;
            values[grid.offset(i, j)] = std::clamp(base + amplitude * r * c, epsilon, 1.0 - epsilon);
        }
    }
    return ProbabilityTable(grid, std::move(values), epsilon, ShapeTag::mcc);
}

double min_pairwise_gap(const std::vector<ProbabilityTable>& tables) {
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < tables.size(); ++a) {
        for (std::size_t b = a + 1; b < tables.size(); ++b) {
            for (std::size_t c = 0; c < tables[a].values().size(); ++c) {
                gap = std::min(gap, std::abs(tables[a].values()[c] - tables[b].values()[c]));
            }
        }
    }
    return gap;
}

std::vector<std::string> category_names(std::size_t count) {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < count; ++k) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "c%02zu", k + 1);
        out.emplace_back(buf);
    }
    return out;
}

std::vector<std::size_t> proportional_assignment(std::size_t count, const std::vector<double>& shares) {
    const double total = std::accumulate(shares.begin(), shares.end(), 0.0);
    std::vector<std::size_t> sizes(shares.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t used = 0;
    for (std::size_t s = 0; s < shares.size(); ++s) {
        const double exact = static_cast<double>(count) * shares[s] / total;
        sizes[s] = static_cast<std::size_t>(std::floor(exact));
        used += sizes[s];
        remainders.emplace_back(exact - std::floor(exact), s);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; used < count; ++r, ++used) ++sizes[remainders[r % remainders.size()].second];
    std::vector<std::size_t> out;
    for (std::size_t s = 0; s < sizes.size(); ++s) out.insert(out.end(), sizes[s], s);
    return out;
}

namespace {

PlantedTruth make_truth(const std::vector<ProbabilityTable>& tables, const std::vector<std::size_t>& assignment) {
    if (tables.empty()) throw InputError("need at least one planted table");
    for (const auto& t : tables) {
        if (!(t.grid() == tables.front().grid())) throw InputError("planted tables disagree on grid");
        if (!t.within_box() || !is_feasible(t, ShapeMode::mcc)) throw InputError("planted table is not MCC-feasible");
    }
    PlantedTruth truth;
    truth.assignment = assignment;
    truth.tables = tables;
    truth.pi.assign(tables.size(), 0.0);
    for (std::size_t s : assignment) {
        if (s >= tables.size()) throw InputError("assignment refers to a missing class");
        truth.pi[s] += 1.0;
    }
    for (double& p : truth.pi) p /= static_cast<double>(assignment.size());
    return truth;
}

}  // namespace

PlantedTensor generate_planted_tensor(const std::vector<ProbabilityTable>& tables,
                                      const std::vector<std::size_t>& assignment,
                                      const std::vector<std::int64_t>& exposures, std::uint64_t seed) {
    PlantedTruth truth = make_truth(tables, assignment);
    const GridSpec grid = tables.front().grid();
    const std::size_t cells = grid.cells();
    if (exposures.size() != assignment.size() * cells) throw InputError("exposure array does not match K x cells");

    CountTensor tensor(grid, category_names(assignment.size()));
    for (std::size_t k = 0; k < assignment.size(); ++k) {
        Rng rng(derive_seed(seed, k));
        const auto& x = tables[assignment[k]].values();
        for (int i = 1; i <= grid.recency_levels; ++i) {
            for (int j = 1; j <= grid.frequency_levels; ++j) {
                const std::size_t c = grid.offset(i, j);
                const std::int64_t n = exposures[k * cells + c];
                if (n < 0) throw InputError("negative exposure");
                if (n == 0) continue;
                std::binomial_distribution<std::int64_t> draw(n, x[c]);
                tensor.add(k, i, j, n, draw(rng));
            }
        }
    }
    return {std::move(tensor), std::move(truth)};
}

PlantedTensor generate_planted_tensor(const std::vector<ProbabilityTable>& tables,
                                      const std::vector<std::size_t>& assignment, std::int64_t exposure_per_cell,
                                      std::uint64_t seed) {
    if (tables.empty()) throw InputError("need at least one planted table");
    std::vector<std::int64_t> exposures(assignment.size() * tables.front().grid().cells(), exposure_per_cell);
    return generate_planted_tensor(tables, assignment, exposures, seed);
}

std::vector<Sample> generate_planted_samples(const std::vector<ProbabilityTable>& tables,
                                             const std::vector<std::size_t>& assignment,
                                             const std::vector<std::string>& categories, std::size_t customers,
                                             std::size_t products_per_customer, Day base_date, std::uint64_t seed) {
    make_truth(tables, assignment);
    if (categories.size() != assignment.size()) throw InputError("category names do not match assignment");
    const GridSpec grid = tables.front().grid();
    std::vector<Sample> out;
    out.reserve(customers * products_per_customer);
    for (std::size_t u = 0; u < customers; ++u) {
        Rng rng(derive_seed(seed, u));
        char cid[32];
        std::snprintf(cid, sizeof cid, "u%06zu", u);
        for (std::size_t p = 0; p < products_per_customer; ++p) {
            Sample s;
            s.base_date = base_date;
            s.customer_id = cid;
            const std::size_t k = static_cast<std::size_t>(rng() % categories.size());
            char pid[48];
            std::snprintf(pid, sizeof pid, "%s-p%03zu", categories[k].c_str(), p);
            s.product_id = pid;
            s.category_id = categories[k];
            s.recency = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(grid.recency_levels));
            s.frequency = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(grid.frequency_levels));
            s.views = s.frequency;
            s.purchased = uniform01(rng) < tables[assignment[k]].at(s.recency, s.frequency);
            out.push_back(std::move(s));
        }
    }
    return out;
}

OracleFit oracle_fit(const WeightedCellCounts& counts, ShapeMode mode, double step, double epsilon) {
    const GridSpec& g = counts.grid;
    const std::size_t cells = g.cells();
    if (cells > kOracleMaxCells) {
        throw InputError("oracle_fit enumeration budget exceeded: " + std::to_string(cells) + " cells > " +
                         std::to_string(kOracleMaxCells));
    }
    if (!(step > 0.0 && step < 0.5)) throw InputError("oracle lattice step must lie in (0, 0.5)");

    // Lattice values k * step inside the box.
    const int k_lo = static_cast<int>(std::ceil(epsilon / step - 1e-9));
    const int k_hi = static_cast<int>(std::floor((1.0 - epsilon) / step + 1e-9));
    const int lo = std::max(k_lo, 1);
    int hi = k_hi;
    while (hi * step > 1.0 - epsilon) --hi;
    if (hi < lo) throw InputError("oracle lattice has no point inside the box");

    // Per-cell objective for every lattice index.
    const int levels = hi - lo + 1;
    std::vector<double> cell_value(cells * static_cast<std::size_t>(levels));
    for (std::size_t c = 0; c < cells; ++c) {
        for (int k = lo; k <= hi; ++k) {
            const double x = k * step;
            double v = 0.0;
            if (counts.a[c] != 0.0) v += counts.a[c] * std::log(x);
            if (counts.b[c] != 0.0) v += counts.b[c] * std::log1p(-x);
            cell_value[c * static_cast<std::size_t>(levels) + static_cast<std::size_t>(k - lo)] = v;
        }
    }

    std::vector<int> peak(cells, lo);
    for (std::size_t c = 0; c < cells; ++c) {
        const double* row = &cell_value[c * static_cast<std::size_t>(levels)];
        for (int v = lo + 1; v <= hi; ++v) {
            if (row[v - lo] > row[peak[c] - lo]) peak[c] = v;
        }
    }

    OracleFit best;
    best.objective = -std::numeric_limits<double>::infinity();
    std::vector<int> k(cells, 0);

    // Cells are filled in row-major order, so every constraint involving the
    // current cell only reaches back to cells already assigned.
    std::function<void(std::size_t, double)> descend = [&](std::size_t c, double partial) {
        if (c == cells) {
            ++best.enumerated;
            if (partial > best.objective) {
                best.objective = partial;
                best.values.resize(cells);
                for (std::size_t t = 0; t < cells; ++t) best.values[t] = k[t] * step;
            }
            return;
        }
        const int i = static_cast<int>(c) / g.frequency_levels + 1;
        const int j = static_cast<int>(c) % g.frequency_levels + 1;
        int low = lo;
        int high = hi;
        if (i >= 2) low = std::max(low, k[g.offset(i - 1, j)]);
        if (j >= 2) low = std::max(low, k[g.offset(i, j - 1)]);
        if (mode == ShapeMode::mcc) {
            if (i >= 3) low = std::max(low, 2 * k[g.offset(i - 1, j)] - k[g.offset(i - 2, j)]);
            if (j >= 3) high = std::min(high, 2 * k[g.offset(i, j - 1)] - k[g.offset(i, j - 2)]);
        }
        if (low > high) return;
        const double* row = &cell_value[c * static_cast<std::size_t>(levels)];
        if (c + 1 == cells) {
            // Last cell: its term is concave along the lattice, so the best
            // index in [low, high] is the clamped unconstrained argmax.
            const int v = std::clamp(peak[c], low, high);
            best.enumerated += static_cast<std::size_t>(high - low + 1);
            const double total = partial + row[v - lo];
            if (total > best.objective) {
                k[c] = v;
                best.objective = total;
                best.values.resize(cells);
                for (std::size_t t = 0; t < cells; ++t) best.values[t] = k[t] * step;
            }
            return;
        }
        for (int v = low; v <= high; ++v) {
            k[c] = v;
            descend(c + 1, partial + row[v - lo]);
        }
    };
    descend(0, 0.0);
    if (best.values.empty()) throw InputError("oracle lattice has no feasible table");
    return best;
}

Matrix oracle_posterior(const CountTensor& tensor, const std::vector<double>& pi,
                        const std::vector<ProbabilityTable>& tables) {
    const std::size_t cells = tensor.grid().cells();
    Matrix z(tensor.num_categories(), tables.size());
    for (std::size_t k = 0; k < tensor.num_categories(); ++k) {
        std::vector<long double> joint(tables.size());
        long double total = 0.0L;
        for (std::size_t s = 0; s < tables.size(); ++s) {
            long double f = 1.0L;
            for (std::size_t c = 0; c < cells; ++c) {
                const std::int64_t n = tensor.n_at(k, c);
                const std::int64_t q = tensor.q_at(k, c);
                const long double x = tables[s].values()[c];
                long double coef = 1.0L;
                for (std::int64_t t = 1; t <= q; ++t) coef = coef * static_cast<long double>(n - q + t) / t;
                f *= coef * std::pow(x, static_cast<long double>(q)) * std::pow(1.0L - x, static_cast<long double>(n - q));
            }
            joint[s] = static_cast<long double>(pi[s]) * f;
            total += joint[s];
        }
        if (!(total > 0.0L)) throw NumericalError("oracle_posterior underflowed; tensor too large for direct products");
        for (std::size_t s = 0; s < tables.size(); ++s) z(k, s) = static_cast<double>(joint[s] / total);
    }
    return z;
}

SimulatedClickstream generate_synthetic_clickstream(const ClickstreamProfile& profile, std::uint64_t seed) {
    SimulatedClickstream out;
    out.truth = make_truth(profile.tables, profile.assignment);
    if (profile.categories.size() != profile.assignment.size()) {
        throw InputError("profile categories do not match assignment");
    }
    if (!(profile.tables.front().grid() == profile.features.grid())) {
        throw InputError("profile tables grid " + profile.tables.front().grid().to_string() +
                         " does not match feature grid " + profile.features.grid().to_string());
    }
    if (profile.days < 1) throw InputError("profile needs at least one day");
    if (!(profile.daily_view_probability >= 0.0 && profile.daily_view_probability <= 1.0)) {
        throw InputError("daily_view_probability must lie in [0, 1]");
    }

    struct Product {
        std::string id;
        std::size_t category;
    };
    std::vector<Product> products;
    for (std::size_t k = 0; k < profile.categories.size(); ++k) {
        for (std::size_t p = 0; p < profile.products_per_category; ++p) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%s-p%03zu", profile.categories[k].c_str(), p);
            products.push_back({buf, k});
        }
    }
    if (products.empty()) return out;

    std::vector<ClickEvent> views;
    if (profile.daily_view_probability > 0.0) {
        const std::size_t interests = std::min(profile.interests_per_customer, products.size());
        for (std::size_t u = 0; u < profile.customers; ++u) {
            Rng rng(derive_seed(seed, u));
            char cid[32];
            std::snprintf(cid, sizeof cid, "u%06zu", u);
            std::vector<std::size_t> order(products.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            for (std::size_t t = 0; t < interests; ++t) {
                const std::size_t pick = t + static_cast<std::size_t>(rng() % (order.size() - t));
                std::swap(order[t], order[pick]);
            }
            std::poisson_distribution<int> extra(std::max(profile.extra_views_mean, 1e-12));
            for (int d = 0; d < profile.days; ++d) {
                const EpochSeconds day_start = start_of(profile.start_date + d);
                for (std::size_t t = 0; t < interests; ++t) {
                    if (uniform01(rng) >= profile.daily_view_probability) continue;
                    const Product& prod = products[order[t]];
                    const int count = 1 + (profile.extra_views_mean > 0.0 ? extra(rng) : 0);
                    for (int v = 0; v < count; ++v) {
                        ClickEvent ev;
                        ev.timestamp = day_start + static_cast<EpochSeconds>(rng() % kSecondsPerDay);
                        ev.customer_id = cid;
                        ev.product_id = prod.id;
                        ev.category_id = profile.categories[prod.category];
                        ev.kind = EventKind::view;
                        views.push_back(std::move(ev));
                    }
                }
            }
        }
    }
    if (views.empty()) return out;

    std::vector<Day> base_dates;
    for (int d = 1; d <= profile.days; ++d) base_dates.push_back(profile.start_date + d);
    const auto samples = build_samples(views, base_dates, profile.features);

    std::vector<std::size_t> class_of_category(profile.categories.size());
    for (std::size_t k = 0; k < profile.categories.size(); ++k) class_of_category[k] = profile.assignment[k];
    std::vector<std::size_t> category_of_product(products.size());
    std::map<std::string, std::size_t> category_index;
    for (std::size_t k = 0; k < profile.categories.size(); ++k) category_index[profile.categories[k]] = k;

    Rng rng(derive_seed(seed, 0xC11C5ULL));
    std::vector<ClickEvent> events = std::move(views);
    for (const auto& s : samples) {
        const std::size_t k = category_index.at(s.category_id);
        const double x = profile.tables[class_of_category[k]].at(s.recency, s.frequency);
        const bool buy = uniform01(rng) < x;
        const auto offset = static_cast<EpochSeconds>(rng() % kSecondsPerDay);
        if (!buy) continue;
        ClickEvent ev;
        ev.timestamp = start_of(s.base_date) + offset;
        ev.customer_id = s.customer_id;
        ev.product_id = s.product_id;
        ev.category_id = s.category_id;
        ev.kind = EventKind::purchase;
        events.push_back(std::move(ev));
    }
    std::sort(events.begin(), events.end(), [](const ClickEvent& a, const ClickEvent& b) {
        if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
        if (a.customer_id != b.customer_id) return a.customer_id < b.customer_id;
        if (a.product_id != b.product_id) return a.product_id < b.product_id;
        return a.kind < b.kind;
    });
    out.events = std::move(events);
    return out;
}

}  // namespace clickchoice
