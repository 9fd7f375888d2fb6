#include "clickchoice/evaluation.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "clickchoice/errors.hpp"
#include "clickchoice/parallel.hpp"

namespace clickchoice {

LatentClassModel single_table_model(const ProbabilityTable& table, ModelKind kind,
                                    std::vector<std::string> categories) {
    LatentClassModel m;
    m.kind = kind;
    m.categories = std::move(categories);
    m.pi = {1.0};
    m.tables = {table};
    m.memberships = Matrix(m.categories.size(), 1, 1.0);
    return m;
}

namespace {

// Category id -> row index, rebuilt per call site that scores many samples.
std::unordered_map<std::string, std::size_t> category_rows(const LatentClassModel& model) {
    std::unordered_map<std::string, std::size_t> rows;
    for (std::size_t k = 0; k < model.categories.size(); ++k) rows.emplace(model.categories[k], k);
    return rows;
}

double score_with(const LatentClassModel& model, const std::unordered_map<std::string, std::size_t>& rows,
                  const Sample& s) {
    if (!model.grid().contains(s.recency, s.frequency)) {
        throw InputError("sample level (" + std::to_string(s.recency) + "," + std::to_string(s.frequency) +
                         ") outside model grid " + model.grid().to_string());
    }
    const auto it = rows.find(s.category_id);
    double score = 0.0;
    for (std::size_t c = 0; c < model.classes(); ++c) {
        const double w = it != rows.end() ? model.memberships(it->second, c) : model.pi[c];
        score += w * model.tables[c].at(s.recency, s.frequency);
    }
    return score;
}

}  // namespace

double score_sample(const LatentClassModel& model, const Sample& sample) {
    return score_with(model, category_rows(model), sample);
}

std::map<std::string, std::vector<ScoredPair>> score_pairs(const LatentClassModel& model,
                                                           std::span<const Sample> samples) {
    const auto rows = category_rows(model);
    std::map<std::string, std::vector<ScoredPair>> out;
    for (const auto& s : samples) {
        out[s.customer_id].push_back({s.product_id, score_with(model, rows, s), viewf_value(s), s.purchased});
    }
    return out;
}

void rank_pairs(std::vector<ScoredPair>& pairs) {
    std::sort(pairs.begin(), pairs.end(), [](const ScoredPair& a, const ScoredPair& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.viewf != b.viewf) return a.viewf > b.viewf;
        return a.product_id < b.product_id;
    });
}

std::vector<ScoredPair> select_top_n(std::vector<ScoredPair> pairs, std::size_t n) {
    if (n < 1) throw InputError("top-N needs N >= 1");
    rank_pairs(pairs);
    if (pairs.size() > n) pairs.resize(n);
    return pairs;
}

std::optional<Prf1> prf1(const std::vector<std::string>& selected, const std::vector<std::string>& purchased) {
    const std::set<std::string> bought(purchased.begin(), purchased.end());
    if (bought.empty()) return std::nullopt;
    const std::set<std::string> chosen(selected.begin(), selected.end());
    std::size_t hits = 0;
    for (const auto& p : chosen) hits += bought.count(p);
    Prf1 r;
    r.recall = static_cast<double>(hits) / static_cast<double>(bought.size());
    r.precision = chosen.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(chosen.size());
    const double denom = r.recall + r.precision;
    r.f1 = denom > 0.0 ? 2.0 * r.recall * r.precision / denom : 0.0;
    return r;
}

std::optional<double> average_precision(const std::vector<bool>& ranked_labels) {
    std::size_t hits = 0;
    double sum = 0.0;
    for (std::size_t r = 0; r < ranked_labels.size(); ++r) {
        if (!ranked_labels[r]) continue;
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
    if (hits == 0) return std::nullopt;
    return sum / static_cast<double>(hits);
}

double mean_average_precision(const std::vector<std::vector<bool>>& ranked_lists) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& list : ranked_lists) {
        if (auto ap = average_precision(list)) {
            sum += *ap;
            ++count;
        }
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

EvalReport run_evaluation(const LatentClassModel& model, std::span<const Sample> test_samples,
                          const std::vector<std::size_t>& n_values, int threads) {
    if (n_values.empty()) throw InputError("evaluation needs at least one N");
    for (auto n : n_values) {
        if (n < 1) throw InputError("top-N needs N >= 1");
    }
    if (test_samples.empty()) throw InputError("evaluation needs a nonempty test set");

    std::map<Day, std::vector<Sample>> by_date;
    for (const auto& s : test_samples) by_date[s.base_date].push_back(s);
    std::vector<Day> dates;
    for (const auto& [d, v] : by_date) dates.push_back(d);

    EvalReport report;
    report.n_values = n_values;
    report.per_base_date.resize(dates.size());
    parallel_for(dates.size(), threads, [&](std::size_t t) {
        DateReport& dr = report.per_base_date[t];
        dr.base_date = dates[t];
        dr.top_n.resize(n_values.size());
        for (std::size_t x = 0; x < n_values.size(); ++x) dr.top_n[x].n = n_values[x];

        auto customers = score_pairs(model, by_date.at(dates[t]));
        dr.customers = customers.size();
        std::vector<std::vector<bool>> ranked_labels;
        for (auto& [customer, pairs] : customers) {
            rank_pairs(pairs);
            std::vector<std::string> bought;
            std::vector<bool> labels;
            for (const auto& p : pairs) {
                labels.push_back(p.purchased);
                if (p.purchased) bought.push_back(p.product_id);
            }
            if (bought.empty()) continue;
            ++dr.purchasing_customers;
            ranked_labels.push_back(std::move(labels));
            for (std::size_t x = 0; x < n_values.size(); ++x) {
                std::vector<std::string> chosen;
                for (std::size_t r = 0; r < pairs.size() && r < n_values[x]; ++r) chosen.push_back(pairs[r].product_id);
                const auto m = prf1(chosen, bought);
                dr.top_n[x].recall += m->recall;
                dr.top_n[x].precision += m->precision;
                dr.top_n[x].f1 += m->f1;
            }
        }
        if (dr.purchasing_customers == 0) {
            dr.flagged = true;
            return;
        }
        const auto denom = static_cast<double>(dr.purchasing_customers);
        for (auto& m : dr.top_n) {
            m.recall /= denom;
            m.precision /= denom;
            m.f1 /= denom;
        }
        dr.map = mean_average_precision(ranked_labels);
    });

    report.overall.resize(n_values.size());
    for (std::size_t x = 0; x < n_values.size(); ++x) report.overall[x].n = n_values[x];
    for (const auto& dr : report.per_base_date) {
        if (dr.flagged) continue;
        ++report.dates_used;
        for (std::size_t x = 0; x < n_values.size(); ++x) {
            report.overall[x].recall += dr.top_n[x].recall;
            report.overall[x].precision += dr.top_n[x].precision;
            report.overall[x].f1 += dr.top_n[x].f1;
        }
        report.overall_map += dr.map;
    }
    if (report.dates_used > 0) {
        const auto denom = static_cast<double>(report.dates_used);
        for (auto& m : report.overall) {
            m.recall /= denom;
            m.precision /= denom;
            m.f1 /= denom;
        }
        report.overall_map /= denom;
    }
    return report;
}

}  // namespace clickchoice
