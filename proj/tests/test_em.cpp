#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "clickchoice/em.hpp"
#include "clickchoice/errors.hpp"
#include "clickchoice/mixture.hpp"
#include "clickchoice/rng.hpp"
#include "clickchoice/synth.hpp"

using namespace clickchoice;

namespace {

CountTensor random_tensor(GridSpec g, std::size_t categories, std::uint64_t seed, int max_n = 30) {
    Rng rng(seed);
    CountTensor t(g, category_names(categories));
    for (std::size_t k = 0; k < categories; ++k) {
        for (int i = 1; i <= g.recency_levels; ++i) {
            for (int j = 1; j <= g.frequency_levels; ++j) {
                const auto n = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(max_n + 1));
                const double p = 0.05 + 0.6 * uniform01(rng);
                std::int64_t q = 0;
                for (std::int64_t r = 0; r < n; ++r) q += uniform01(rng) < p ? 1 : 0;
                t.add(k, i, j, n, q);
            }
        }
    }
    return t;
}

std::vector<ProbabilityTable> two_planted_tables(GridSpec g) {
    return {planted_mcc_table(g, 0.02, 0.2, 2.0, 0.5), planted_mcc_table(g, 0.45, 0.4, 1.5, 0.8)};
}

double coefficient_sum(const CountTensor& t) {
    double total = 0.0;
    for (std::size_t k = 0; k < t.num_categories(); ++k) {
        for (std::size_t c = 0; c < t.grid().cells(); ++c) {
            const double n = static_cast<double>(t.n_at(k, c));
            const double q = static_cast<double>(t.q_at(k, c));
            total += std::lgamma(n + 1) - std::lgamma(q + 1) - std::lgamma(n - q + 1);
        }
    }
    return total;
}

// Fraction of categories whose argmax class matches the planted one under
// the best label permutation (brute force over permutations).
double recovered_fraction(const Matrix& z, const std::vector<std::size_t>& truth, std::size_t classes) {
    std::vector<std::size_t> perm(classes);
    for (std::size_t s = 0; s < classes; ++s) perm[s] = s;
    std::size_t best = 0;
    do {
        std::size_t hits = 0;
        for (std::size_t k = 0; k < z.rows; ++k) {
            std::size_t arg = 0;
            for (std::size_t s = 1; s < z.cols; ++s) {
                if (z(k, s) > z(k, arg)) arg = s;
            }
            if (perm[arg] == truth[k]) ++hits;
        }
        best = std::max(best, hits);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / static_cast<double>(z.rows);
}

class ThrowingFitter final : public ClassFitter {
public:
    ModelKind kind() const override { return ModelKind::lcmcc; }
    ClassFit fit(const CountTensor&, const std::vector<double>&) const override {
        throw NumericalError("solver diverged on purpose");
    }
};

class PlainMccFitter final : public ClassFitter {
public:
    ModelKind kind() const override { return ModelKind::lcmcc; }
    ClassFit fit(const CountTensor& t, const std::vector<double>& w) const override {
        return {fit_mcc(WeightedCellCounts::from_tensor(t, w)).table, {}};
    }
};

}  // namespace

TEST_CASE("event log-likelihood examples") {
    const GridSpec g(1, 1);
    CountTensor empty(g, {"a"});
    CHECK(log_event_likelihood(empty, 0, ProbabilityTable::constant(g, 0.3)) == 0.0);

    CountTensor one(g, {"a"});
    one.add(0, 1, 1, 1, 1);
    CHECK(log_event_likelihood(one, 0, ProbabilityTable::constant(g, 0.5)) ==
          doctest::Approx(std::log(0.5)).epsilon(1e-14));

    CountTensor two(g, {"a"});
    two.add(0, 1, 1, 2, 1);
    const double without = log_event_likelihood(two, 0, ProbabilityTable::constant(g, 0.3));
    CHECK(without == doctest::Approx(std::log(0.3) + std::log(0.7)).epsilon(1e-14));
    CHECK(without == doctest::Approx(-1.5606).epsilon(1e-4));
    // full pmf: C(2,1) 0.3 0.7
    const double with = log_event_likelihood(two, 0, ProbabilityTable::constant(g, 0.3), true);
    CHECK(with == doctest::Approx(std::log(2.0 * 0.3 * 0.7)).epsilon(1e-14));
}

TEST_CASE("posterior examples") {
    const GridSpec g(2, 2);
    const auto t = random_tensor(g, 5, 1);
    const auto a = ProbabilityTable::constant(g, 0.2);
    const auto b = ProbabilityTable::constant(g, 0.6);

    const Matrix single = posterior_memberships(t, {1.0}, {a});
    for (std::size_t k = 0; k < 5; ++k) CHECK(single(k, 0) == 1.0);

    const Matrix same = posterior_memberships(t, {0.9, 0.1}, {a, a});
    for (std::size_t k = 0; k < 5; ++k) {
        CHECK(same(k, 0) == doctest::Approx(0.9).epsilon(1e-12));
        CHECK(same(k, 1) == doctest::Approx(0.1).epsilon(1e-12));
    }

    // category 0 observed at rate 0.2 exactly
    CountTensor fit_a(g, {"k"});
    for (int i = 1; i <= 2; ++i) {
        for (int j = 1; j <= 2; ++j) fit_a.add(0, i, j, 10, 2);
    }
    const Matrix z = posterior_memberships(fit_a, {0.5, 0.5}, {a, b});
    CHECK(z(0, 0) > 0.5);
    CHECK(z(0, 0) + z(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("class size update") {
    Matrix z(4, 2);
    z(0, 0) = z(1, 0) = z(2, 0) = 1.0;
    z(3, 1) = 1.0;
    CHECK(update_class_sizes(z) == std::vector<double>{0.75, 0.25});

    Matrix u(6, 3, 1.0 / 3.0);
    for (double p : update_class_sizes(u)) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("m-step with one class equals the pooled fit") {
    const auto t = random_tensor(GridSpec(3, 4), 6, 2);
    const auto tables = m_step_tables(t, Matrix(6, 1, 1.0));
    REQUIRE(tables.size() == 1);
    CHECK(tables[0] == fit_mcc(WeightedCellCounts::from_tensor(t.collapsed())).table);
}

TEST_CASE("m-step with a hard partition equals partitioned fits") {
    const auto t = random_tensor(GridSpec(3, 3), 6, 3);
    Matrix z(6, 2);
    const std::vector<std::size_t> part = {0, 1, 1, 0, 1, 0};
    for (std::size_t k = 0; k < 6; ++k) z(k, part[k]) = 1.0;
    const auto tables = m_step_tables(t, z);
    const auto first = fit_mcc(WeightedCellCounts::from_tensor(t.select({0, 3, 5}))).table;
    const auto second = fit_mcc(WeightedCellCounts::from_tensor(t.select({1, 2, 4}))).table;
    CHECK(tables[0] == first);
    CHECK(tables[1] == second);
}

TEST_CASE("m-step is equivariant under label permutation") {
    const auto t = random_tensor(GridSpec(2, 3), 5, 4);
    const Matrix z = random_memberships(5, 3, 8);
    Matrix swapped(5, 3);
    for (std::size_t k = 0; k < 5; ++k) {
        swapped(k, 0) = z(k, 2);
        swapped(k, 1) = z(k, 0);
        swapped(k, 2) = z(k, 1);
    }
    const auto a = m_step_tables(t, z);
    const auto b = m_step_tables(t, swapped, {}, 4);
    CHECK(b[0] == a[2]);
    CHECK(b[1] == a[0]);
    CHECK(b[2] == a[1]);
}

TEST_CASE("observed log-likelihood properties") {
    const GridSpec g(2, 2);
    const auto t = random_tensor(g, 4, 5);
    const std::vector<ProbabilityTable> tables = {ProbabilityTable::constant(g, 0.2),
                                                  ProbabilityTable::constant(g, 0.4)};
    const std::vector<double> pi = {0.3, 0.7};

    // |S| = 1 reduces to the per-category sum
    double direct = 0.0;
    for (std::size_t k = 0; k < 4; ++k) direct += log_event_likelihood(t, k, tables[0]);
    CHECK(observed_log_likelihood(t, {1.0}, {tables[0]}) == doctest::Approx(direct).epsilon(1e-13));

    // duplicating every category doubles it
    std::vector<std::int64_t> n = t.n_values(), q = t.q_values();
    n.insert(n.end(), t.n_values().begin(), t.n_values().end());
    q.insert(q.end(), t.q_values().begin(), t.q_values().end());
    const CountTensor doubled(g, category_names(8), n, q);
    CHECK(observed_log_likelihood(doubled, pi, tables) ==
          doctest::Approx(2.0 * observed_log_likelihood(t, pi, tables)).epsilon(1e-13));

    // coefficients shift the value by a constant
    CHECK(observed_log_likelihood(t, pi, tables, true) ==
          doctest::Approx(observed_log_likelihood(t, pi, tables) + coefficient_sum(t)).epsilon(1e-13));
}

TEST_CASE("posterior ignores the binomial coefficients") {
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        const GridSpec g(2, 2);
        const auto t = random_tensor(g, 6, 100 + trial);
        std::vector<ProbabilityTable> tables;
        for (int s = 0; s < 3; ++s) tables.push_back(ProbabilityTable::constant(g, 0.1 + 0.25 * uniform01(rng)));
        const std::vector<double> pi = {0.2, 0.5, 0.3};
        const Matrix a = posterior_memberships(t, pi, tables);
        const Matrix b = posterior_memberships(t, pi, tables, true);
        const Matrix c = oracle_posterior(t, pi, tables);
        for (std::size_t e = 0; e < a.data.size(); ++e) {
            CHECK(std::abs(a.data[e] - b.data[e]) <= 1e-12);
            CHECK(std::abs(a.data[e] - c.data[e]) <= 1e-12);
        }
    }
}

TEST_CASE("random memberships are Dirichlet rows and seed-determined") {
    const Matrix z = random_memberships(7, 4, 3);
    for (std::size_t k = 0; k < 7; ++k) {
        double s = 0.0;
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(z(k, c) > 0.0);
            s += z(k, c);
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
    CHECK(random_memberships(7, 4, 3) == z);
    CHECK_FALSE(random_memberships(7, 4, 4) == z);
}

TEST_CASE("single-class em equals the pooled mcc fit for any seed") {
    const auto t = random_tensor(GridSpec(3, 3), 5, 7);
    const auto pooled = fit_mcc(WeightedCellCounts::from_tensor(t.collapsed())).table;
    for (std::uint64_t seed : {0u, 1u, 99u}) {
        EmConfig cfg;
        cfg.seed = seed;
        cfg.restarts = 2;
        const auto m = em_fit(t, cfg);
        REQUIRE(m.tables.size() == 1);
        CHECK(m.tables[0] == pooled);
        CHECK(m.pi == std::vector<double>{1.0});
    }
}

TEST_CASE("em recovers two well-separated planted classes") {
    const GridSpec g(4, 3);
    const auto tables = two_planted_tables(g);
    CHECK(min_pairwise_gap(tables) >= 0.15);
    const std::vector<std::size_t> truth = {0, 1, 0, 0, 1, 1, 0, 1, 1, 0, 0, 1};
    const auto planted = generate_planted_tensor(tables, truth, 60, 11);
    EmConfig cfg;
    cfg.classes = 2;
    cfg.restarts = 5;
    cfg.seed = 3;
    const auto m = em_fit(planted.tensor, cfg);
    m.validate();
    CHECK(recovered_fraction(m.memberships, truth, 2) == 1.0);
    CHECK(m.pi[0] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("every chain trace is non-decreasing") {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto t = random_tensor(GridSpec(3, 3), 8, 20 + seed);
        EmConfig cfg;
        cfg.classes = 3;
        cfg.restarts = 3;
        cfg.seed = seed;
        const auto m = em_fit(t, cfg);
        for (const auto& chain : m.diagnostics.chains) {
            const auto& tr = chain.log_likelihood_trace;
            for (std::size_t i = 1; i < tr.size(); ++i) CHECK(tr[i] >= tr[i - 1] - 1e-6);
            CHECK(chain.iterations <= cfg.max_em_iterations);
        }
        CHECK(m.final_log_likelihood ==
              m.diagnostics.chains[static_cast<std::size_t>(m.diagnostics.chosen_restart)].log_likelihood_trace.back());
    }
}

TEST_CASE("em output is deterministic and thread independent") {
    const auto t = random_tensor(GridSpec(3, 2), 9, 31);
    EmConfig cfg;
    cfg.classes = 2;
    cfg.restarts = 4;
    cfg.seed = 12;
    const auto a = em_fit(t, cfg);
    cfg.threads = 4;
    const auto b = em_fit(t, cfg);
    CHECK(a == b);
    cfg.seed = 13;
    CHECK_FALSE(em_fit(t, cfg).diagnostics.chains[0].seed == a.diagnostics.chains[0].seed);
}

TEST_CASE("final memberships match the final parameters") {
    const auto t = random_tensor(GridSpec(2, 3), 7, 41);
    EmConfig cfg;
    cfg.classes = 2;
    cfg.restarts = 2;
    const auto m = em_fit(t, cfg);
    const Matrix z = posterior_memberships(t, m.pi, m.tables);
    for (std::size_t e = 0; e < z.data.size(); ++e) CHECK(std::abs(z.data[e] - m.memberships.data[e]) <= 1e-12);
    for (std::size_t k = 0; k < z.rows; ++k) {
        double s = 0.0;
        for (std::size_t c = 0; c < z.cols; ++c) s += m.memberships(k, c);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("classes come out in canonical order") {
    const auto t = random_tensor(GridSpec(2, 2), 10, 51);
    EmConfig cfg;
    cfg.classes = 3;
    cfg.restarts = 3;
    const auto m = em_fit(t, cfg);
    for (std::size_t s = 1; s < m.pi.size(); ++s) CHECK(m.pi[s - 1] >= m.pi[s]);
}

TEST_CASE("an emptied class marks the chain degenerate") {
    const auto t = random_tensor(GridSpec(2, 2), 4, 61);
    Matrix z(4, 2);
    for (std::size_t k = 0; k < 4; ++k) z(k, 0) = 1.0;
    EmConfig cfg;
    cfg.classes = 2;
    const auto chain = run_chain(t, cfg, PlainMccFitter(), z);
    CHECK(chain.diagnostics.degenerate);
    CHECK(chain.diagnostics.iterations == 0);
}

TEST_CASE("all chains failing raises a numerical error") {
    const auto t = random_tensor(GridSpec(2, 2), 4, 71);
    EmConfig cfg;
    cfg.classes = 2;
    cfg.restarts = 3;
    try {
        fit_mixture(t, cfg, ThrowingFitter());
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("diverged on purpose") != std::string::npos);
    }
}

TEST_CASE("config validation") {
    const auto t = random_tensor(GridSpec(1, 1), 2, 81);
    EmConfig cfg;
    cfg.classes = 0;
    CHECK_THROWS_AS(em_fit(t, cfg), InputError);
    cfg.classes = 1;
    cfg.restarts = 0;
    CHECK_THROWS_AS(em_fit(t, cfg), InputError);
    const CountTensor none(GridSpec(1, 1), {});
    CHECK_THROWS_AS(em_fit(none, EmConfig{}), InputError);
    CHECK_THROWS_AS(posterior_memberships(t, {1.0}, {ProbabilityTable::constant(GridSpec(2, 1), 0.5)}), InputError);
}
