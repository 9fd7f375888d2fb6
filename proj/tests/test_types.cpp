#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "clickchoice/errors.hpp"
#include "clickchoice/rng.hpp"
#include "clickchoice/types.hpp"

using namespace clickchoice;

TEST_CASE("GridSpec offsets and bounds") {
    GridSpec g(3, 4);
    CHECK(g.cells() == 12);
    CHECK(g.offset(1, 1) == 0);
    CHECK(g.offset(1, 4) == 3);
    CHECK(g.offset(2, 1) == 4);
    CHECK(g.offset(3, 4) == 11);
    CHECK(g.contains(3, 4));
    CHECK_FALSE(g.contains(0, 1));
    CHECK_FALSE(g.contains(1, 5));
    CHECK(g.to_string() == "3x4");
    CHECK_THROWS_AS(GridSpec(0, 2), InputError);
    CHECK_THROWS_AS(GridSpec(2, 0), InputError);
}

TEST_CASE("probability table validation") {
    GridSpec g(1, 2);
    CHECK_THROWS_AS(ProbabilityTable(g, {0.5}), InputError);
    CHECK_THROWS_AS(ProbabilityTable(g, {0.5, 0.5}, 0.0), InputError);
    CHECK_THROWS_AS(ProbabilityTable(g, {0.5, 0.5}, 0.5), InputError);
    ProbabilityTable t(g, {kDefaultEpsilon, 1.0 - kDefaultEpsilon});
    CHECK(t.within_box());
    ProbabilityTable u(g, {kDefaultEpsilon / 2, 0.5});
    CHECK_FALSE(u.within_box());
    CHECK(ProbabilityTable::constant(GridSpec(2, 2), 0.25).at(2, 2) == 0.25);
}

TEST_CASE("constant table is mcc-feasible") {
    const auto t = ProbabilityTable::constant(GridSpec(4, 5), 0.5);
    CHECK(check_shape_constraints(t, ShapeMode::mcc, kDefaultSlack).empty());
    CHECK(check_shape_constraints(t, ShapeMode::monotone, kDefaultSlack).empty());
}

TEST_CASE("decreasing 2x1 table has one recency violation") {
    ProbabilityTable t(GridSpec(2, 1), {0.8, 0.2});
    const auto v = check_shape_constraints(t, ShapeMode::monotone, kDefaultSlack);
    REQUIRE(v.size() == 1);
    CHECK(v[0].family == ConstraintFamily::recency_monotone);
    CHECK(v[0].i == 1);
    CHECK(v[0].j == 1);
    CHECK(v[0].residual == doctest::Approx(-0.6).epsilon(1e-12));
}

TEST_CASE("concave 3x1 recency profile violates convexity once") {
    ProbabilityTable t(GridSpec(3, 1), {0.1, 0.3, 0.4});
    const auto v = check_shape_constraints(t, ShapeMode::mcc, kDefaultSlack);
    REQUIRE(v.size() == 1);
    CHECK(v[0].family == ConstraintFamily::recency_convex);
    CHECK(v[0].residual == doctest::Approx(-0.1).epsilon(1e-12));
    CHECK(check_shape_constraints(t, ShapeMode::monotone, kDefaultSlack).empty());
}

TEST_CASE("frequency concavity residual sign") {
    // increments 0.1 then 0.3: not concave
    ProbabilityTable t(GridSpec(1, 3), {0.1, 0.2, 0.5});
    const auto v = check_shape_constraints(t, ShapeMode::mcc, kDefaultSlack);
    REQUIRE(v.size() == 1);
    CHECK(v[0].family == ConstraintFamily::frequency_concave);
    CHECK(v[0].residual == doctest::Approx(-0.2).epsilon(1e-12));
}

TEST_CASE("slack tolerates tiny negative residuals") {
    ProbabilityTable t(GridSpec(2, 1), {0.5, 0.5 - 1e-10});
    CHECK(is_feasible(t, ShapeMode::monotone, 1e-9));
    CHECK_FALSE(is_feasible(t, ShapeMode::monotone, 0.0));
}

TEST_CASE("mcc-feasible tables are monotone-feasible") {
    Rng rng(11);
    int mcc_count = 0;
    for (int trial = 0; trial < 4000; ++trial) {
        const int I = 1 + static_cast<int>(rng() % 4);
        const int J = 1 + static_cast<int>(rng() % 4);
        GridSpec g(I, J);
        std::vector<double> v(g.cells());
        // Sorted random values give many near-feasible candidates.
        for (auto& x : v) x = 0.01 + 0.98 * uniform01(rng);
        if (trial % 2 == 0) std::sort(v.begin(), v.end());
        ProbabilityTable t(g, v);
        if (check_shape_constraints(t, ShapeMode::mcc, 0.0).empty()) {
            ++mcc_count;
            CHECK(check_shape_constraints(t, ShapeMode::monotone, 0.0).empty());
        }
    }
    CHECK(mcc_count > 0);
}

TEST_CASE("count tensor bookkeeping") {
    GridSpec g(2, 2);
    CountTensor t(g, {"a", "b"});
    t.add(0, 1, 2, 3, 1);
    t.add(1, 2, 1, 5, 5);
    t.add(0, 1, 2, 1, 0);
    CHECK(t.n(0, 1, 2) == 4);
    CHECK(t.q(0, 1, 2) == 1);
    CHECK(t.total_pairs() == 9);
    CHECK(t.total_purchases() == 6);
    CHECK(t.category_index("b") == 1u);
    CHECK_FALSE(t.category_index("c").has_value());
    CHECK_THROWS_AS(t.add(0, 1, 1, 1, 2), InputError);
    CHECK_THROWS_AS(CountTensor(g, {"a"}, {1, 1, 1, 1}, {2, 0, 0, 0}), InputError);

    const auto c = t.collapsed();
    CHECK(c.num_categories() == 1);
    CHECK(c.n(0, 1, 2) == 4);
    CHECK(c.n(0, 2, 1) == 5);
    CHECK(c.total_pairs() == t.total_pairs());

    const auto s = t.select({1});
    CHECK(s.categories() == std::vector<std::string>{"b"});
    CHECK(s.n(0, 2, 1) == 5);
}

namespace {

LatentClassModel two_class_model() {
    LatentClassModel m;
    m.kind = ModelKind::lcmcc;
    m.categories = {"a", "b", "c"};
    GridSpec g(1, 2);
    m.pi = {0.25, 0.75};
    m.tables = {ProbabilityTable(g, {0.1, 0.2}, kDefaultEpsilon, ShapeTag::mcc),
                ProbabilityTable(g, {0.3, 0.4}, kDefaultEpsilon, ShapeTag::mcc)};
    m.memberships = Matrix(3, 2);
    m.memberships(0, 0) = 0.75;
    m.memberships(0, 1) = 0.25;
    m.memberships(1, 1) = 1.0;
    m.memberships(2, 1) = 1.0;
    return m;
}

}  // namespace

TEST_CASE("canonical order sorts by descending class size") {
    auto m = two_class_model();
    canonicalize(m);
    CHECK(m.pi == std::vector<double>{0.75, 0.25});
    CHECK(m.tables[0].values() == std::vector<double>{0.3, 0.4});
    CHECK(m.memberships(0, 0) == 0.25);
    CHECK(m.memberships(0, 1) == 0.75);
    CHECK(m.memberships(1, 0) == 1.0);
    m.validate();
}

TEST_CASE("canonical order breaks size ties by table values") {
    auto m = two_class_model();
    m.pi = {0.5, 0.5};
    std::swap(m.tables[0], m.tables[1]);
    canonicalize(m);
    CHECK(m.tables[0].values() == std::vector<double>{0.1, 0.2});
    auto again = m;
    canonicalize(again);
    CHECK(again == m);
}

TEST_CASE("model validation rejects broken invariants") {
    auto m = two_class_model();
    m.validate();
    auto bad_pi = m;
    bad_pi.pi = {0.3, 0.8};
    CHECK_THROWS_AS(bad_pi.validate(), NumericalError);
    auto bad_row = m;
    bad_row.memberships(2, 0) = 0.5;
    CHECK_THROWS_AS(bad_row.validate(), NumericalError);
    auto bad_table = m;
    bad_table.tables[0] = ProbabilityTable(GridSpec(1, 2), {0.4, 0.2}, kDefaultEpsilon, ShapeTag::mcc);
    CHECK_THROWS_AS(bad_table.validate(), NumericalError);
}

TEST_CASE("enum round trips") {
    for (auto k : {ModelKind::mono, ModelKind::mcc, ModelKind::lcmcc, ModelKind::lclr}) {
        CHECK(parse_model_kind(to_string(k)) == k);
    }
    for (auto s : {ShapeMode::monotone, ShapeMode::mcc}) CHECK(parse_shape_mode(to_string(s)) == s);
    for (auto s : {ShapeTag::none, ShapeTag::monotone, ShapeTag::mcc}) CHECK(parse_shape_tag(to_string(s)) == s);
    CHECK_THROWS_AS(parse_model_kind("svm"), InputError);
}
