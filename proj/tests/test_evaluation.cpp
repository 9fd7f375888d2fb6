#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "clickchoice/errors.hpp"
#include "clickchoice/evaluation.hpp"
#include "clickchoice/rng.hpp"
#include "clickchoice/synth.hpp"

using namespace clickchoice;

namespace {

Sample sample(Day date, std::string customer, std::string product, std::string category, int i, int j,
              bool purchased, int views = 1) {
    Sample s;
    s.base_date = date;
    s.customer_id = std::move(customer);
    s.product_id = std::move(product);
    s.category_id = std::move(category);
    s.recency = i;
    s.frequency = j;
    s.views = views;
    s.purchased = purchased;
    return s;
}

// Two classes on a 2x2 grid with distinct tables, categories a (class 0) and b (class 1).
LatentClassModel two_class_model() {
    const GridSpec g(2, 2);
    LatentClassModel m;
    m.kind = ModelKind::lcmcc;
    m.categories = {"a", "b"};
    m.pi = {0.6, 0.4};
    m.tables = {ProbabilityTable(g, {0.1, 0.2, 0.3, 0.4}, kDefaultEpsilon, ShapeTag::mcc),
                ProbabilityTable(g, {0.2, 0.3, 0.5, 0.7}, kDefaultEpsilon, ShapeTag::mcc)};
    m.memberships = Matrix(2, 2);
    m.memberships(0, 0) = 1.0;
    m.memberships(1, 1) = 1.0;
    return m;
}

std::vector<std::string> ids(const std::vector<ScoredPair>& v) {
    std::vector<std::string> out;
    for (const auto& p : v) out.push_back(p.product_id);
    return out;
}

std::vector<Sample> random_samples(std::uint64_t seed, std::size_t count, Day dates) {
    Rng rng(seed);
    std::vector<Sample> out;
    for (std::size_t t = 0; t < count; ++t) {
        const auto c = rng() % 6;
        out.push_back(sample(100 + static_cast<Day>(rng() % static_cast<std::uint64_t>(dates)),
                             "u" + std::to_string(c), "p" + std::to_string(rng() % 12), rng() % 2 ? "a" : "b",
                             1 + static_cast<int>(rng() % 2), 1 + static_cast<int>(rng() % 2), uniform01(rng) < 0.3,
                             1 + static_cast<int>(rng() % 20)));
    }
    return out;
}

}  // namespace

TEST_CASE("scores mix class tables by membership") {
    const auto m = two_class_model();
    CHECK(score_sample(m, sample(1, "u", "p", "a", 2, 1, false)) == 0.3);
    CHECK(score_sample(m, sample(1, "u", "p", "b", 2, 1, false)) == 0.5);
    // unseen category falls back to class sizes
    CHECK(score_sample(m, sample(1, "u", "p", "zz", 2, 2, false)) == doctest::Approx(0.6 * 0.4 + 0.4 * 0.7));

    const auto single = single_table_model(m.tables[1], ModelKind::mcc, {"a"});
    CHECK(score_sample(single, sample(1, "u", "p", "a", 1, 2, false)) == 0.3);

    auto uniform = m;
    uniform.tables[1] = uniform.tables[0];
    uniform.memberships = Matrix(2, 2, 0.5);
    CHECK(score_sample(uniform, sample(1, "u", "p", "a", 2, 2, false)) ==
          score_sample(uniform, sample(1, "u", "p", "b", 2, 2, false)));

    CHECK_THROWS_AS(score_sample(m, sample(1, "u", "p", "a", 3, 1, false)), InputError);
}

TEST_CASE("top-n selection") {
    SUBCASE("fewer than N viewed products are all selected") {
        const auto top = select_top_n({{"x", 0.2, 1, false}, {"y", 0.9, 1, false}}, 10);
        CHECK(ids(top) == std::vector<std::string>{"y", "x"});
    }
    SUBCASE("ViewF breaks score ties") {
        const auto top = select_top_n({{"low", 0.5, 2, false}, {"high", 0.5, 5, false}}, 1);
        CHECK(ids(top) == std::vector<std::string>{"high"});
    }
    SUBCASE("product id breaks the remaining ties") {
        const auto top = select_top_n({{"p9", 0.5, 3, false}, {"p1", 0.5, 3, false}, {"p5", 0.5, 3, false}}, 2);
        CHECK(ids(top) == std::vector<std::string>{"p1", "p5"});
    }
    SUBCASE("input order does not matter") {
        std::vector<ScoredPair> pairs;
        Rng rng(4);
        for (int t = 0; t < 30; ++t) {
            pairs.push_back({"p" + std::to_string(t), static_cast<double>(rng() % 4) / 4.0,
                             static_cast<int>(rng() % 3), false});
        }
        const auto a = ids(select_top_n(pairs, 7));
        std::reverse(pairs.begin(), pairs.end());
        CHECK(ids(select_top_n(pairs, 7)) == a);
        CHECK(a.size() == 7);
    }
    CHECK_THROWS_AS(select_top_n({}, 0), InputError);
}

TEST_CASE("recall precision f1 examples") {
    const auto half = prf1({"a", "b"}, {"a"});
    REQUIRE(half);
    CHECK(half->recall == 1.0);
    CHECK(half->precision == 0.5);
    CHECK(half->f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

    const auto all = prf1({"a", "c"}, {"c", "a"});
    CHECK(all->recall == 1.0);
    CHECK(all->precision == 1.0);
    CHECK(all->f1 == 1.0);

    const auto none = prf1({"b"}, {"a"});
    CHECK(none->recall == 0.0);
    CHECK(none->precision == 0.0);
    CHECK(none->f1 == 0.0);

    const auto empty_selection = prf1({}, {"a"});
    CHECK(empty_selection->precision == 0.0);
    CHECK(empty_selection->f1 == 0.0);
    CHECK_FALSE(prf1({"a"}, {}).has_value());
}

TEST_CASE("average precision examples") {
    CHECK(*average_precision({true}) == 1.0);
    CHECK(*average_precision({false, true}) == 0.5);
    CHECK(*average_precision({true, false, true}) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
    CHECK_FALSE(average_precision({false, false}).has_value());
    CHECK(mean_average_precision({{true}, {false, true}, {false}}) == 0.75);
    CHECK(mean_average_precision({{false}}) == 0.0);
}

TEST_CASE("f1 never exceeds twice the smaller side") {
    Rng rng(8);
    for (int t = 0; t < 500; ++t) {
        std::vector<std::string> sel, bought;
        for (int p = 0; p < 8; ++p) {
            if (rng() % 2) sel.push_back("p" + std::to_string(p));
            if (rng() % 3 == 0) bought.push_back("p" + std::to_string(p));
        }
        const auto m = prf1(sel, bought);
        if (!m) continue;
        CHECK(m->f1 <= 2.0 * std::min(m->recall, m->precision) + 1e-15);
        CHECK(m->f1 >= 0.0);
        CHECK(m->f1 <= 1.0);
    }
}

TEST_CASE("a perfect ranking gives map one, and relabeling products changes nothing") {
    const auto m = two_class_model();
    // purchased pairs sit in higher-probability cells than every other pair
    std::vector<Sample> s = {sample(5, "u1", "p1", "b", 2, 2, true), sample(5, "u1", "p2", "a", 1, 1, false),
                             sample(5, "u1", "p3", "b", 2, 1, true), sample(5, "u2", "p4", "a", 2, 2, true),
                             sample(5, "u2", "p5", "a", 1, 1, false)};
    const auto r = run_evaluation(m, s, {1});
    CHECK(r.overall_map == 1.0);
    for (auto& x : s) x.product_id = "z" + x.product_id;
    CHECK(run_evaluation(m, s, {1}).overall_map == 1.0);
}

TEST_CASE("one customer on one date reports that customer's metrics") {
    const auto m = two_class_model();
    const std::vector<Sample> s = {sample(7, "u", "p1", "a", 1, 1, true), sample(7, "u", "p2", "b", 2, 2, false),
                                   sample(7, "u", "p3", "a", 2, 1, false)};
    const auto r = run_evaluation(m, s, {1, 2});
    // ranking: p2 (0.7), p3 (0.3), p1 (0.1)
    REQUIRE(r.per_base_date.size() == 1);
    CHECK(r.dates_used == 1);
    CHECK(r.overall[0].f1 == 0.0);
    CHECK(r.overall[1].recall == 0.0);
    CHECK(r.overall_map == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    const auto direct = prf1({"p2", "p3", "p1"}, {"p1"});
    const auto full = run_evaluation(m, s, {3});
    CHECK(full.overall[0].f1 == direct->f1);
    CHECK(full.overall[0].precision == direct->precision);
}

TEST_CASE("duplicating a test set under a new date leaves the averages alone") {
    const auto m = two_class_model();
    const auto base = random_samples(3, 120, 1);
    auto doubled = base;
    for (auto s : base) {
        s.base_date += 50;
        doubled.push_back(s);
    }
    const auto a = run_evaluation(m, base, {1, 3});
    const auto b = run_evaluation(m, doubled, {1, 3});
    CHECK(b.per_base_date.size() == 2 * a.per_base_date.size());
    for (std::size_t x = 0; x < 2; ++x) {
        CHECK(b.overall[x].f1 == doctest::Approx(a.overall[x].f1).epsilon(1e-14));
        CHECK(b.overall[x].recall == doctest::Approx(a.overall[x].recall).epsilon(1e-14));
    }
    CHECK(b.overall_map == doctest::Approx(a.overall_map).epsilon(1e-14));
}

TEST_CASE("metrics stay in the unit interval and are thread independent") {
    const auto m = two_class_model();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto s = random_samples(seed, 200, 4);
        const auto r = run_evaluation(m, s, {1, 3, 5});
        for (const auto& d : r.per_base_date) {
            for (const auto& t : d.top_n) {
                for (double v : {t.recall, t.precision, t.f1}) {
                    CHECK(v >= 0.0);
                    CHECK(v <= 1.0);
                }
            }
            CHECK(d.map >= 0.0);
            CHECK(d.map <= 1.0);
        }
        const auto r4 = run_evaluation(m, s, {1, 3, 5}, 4);
        CHECK(r4.overall_map == r.overall_map);
        for (std::size_t x = 0; x < 3; ++x) CHECK(r4.overall[x].f1 == r.overall[x].f1);
    }
}

TEST_CASE("dates without purchasers are flagged and skipped") {
    const auto m = two_class_model();
    const std::vector<Sample> s = {sample(1, "u", "p1", "a", 1, 1, true), sample(2, "u", "p1", "a", 1, 1, false)};
    const auto r = run_evaluation(m, s, {1});
    REQUIRE(r.per_base_date.size() == 2);
    CHECK_FALSE(r.per_base_date[0].flagged);
    CHECK(r.per_base_date[1].flagged);
    CHECK(r.dates_used == 1);
    CHECK(r.overall[0].f1 == 1.0);
    CHECK_THROWS_AS(run_evaluation(m, {}, {1}), InputError);
    CHECK_THROWS_AS(run_evaluation(m, s, {}), InputError);
}

TEST_CASE("class profiles") {
    auto m = two_class_model();
    m.categories = {"a", "b", "c"};
    m.memberships = Matrix(3, 2);
    m.memberships(0, 0) = 0.9;
    m.memberships(0, 1) = 0.1;
    m.memberships(1, 1) = 1.0;
    m.memberships(2, 0) = 0.7;
    m.memberships(2, 1) = 0.3;
    CountTensor t(GridSpec(2, 2), {"a", "b", "c"});
    t.add(0, 1, 1, 5, 1);
    t.add(2, 1, 1, 9, 1);
    const auto p = report_class_profiles(m, &t, {2}, {1});
    REQUIRE(p.size() == 2);
    CHECK(p[0].categories == std::vector<std::string>{"c", "a"});
    CHECK(p[0].category_pairs == std::vector<std::int64_t>{9, 5});
    CHECK(p[1].categories == std::vector<std::string>{"b"});
    CHECK(p[0].at_frequency.at(2) == std::vector<double>{0.2, 0.4});
    CHECK(p[1].at_recency.at(1) == std::vector<double>{0.2, 0.3});
    CHECK(p[0].pi == 0.6);
    CHECK_THROWS_AS(report_class_profiles(m, nullptr, {3}, {}), InputError);
}
