#pragma once
// Top-N purchase prediction and its metrics.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clickchoice/features.hpp"
#include "clickchoice/types.hpp"

namespace clickchoice {

// Wraps a single table (MCC(1), monotone) as a one-class model.
LatentClassModel single_table_model(const ProbabilityTable& table, ModelKind kind,
                                    std::vector<std::string> categories = {});

struct ScoredPair {
    std::string product_id;
    double score = 0.0;
    int viewf = 0;  // tie-break key
    bool purchased = false;
};

// Score of one sample: sum_s z_ks x_ijs when the category was seen in
// training, else sum_s pi_s x_ijs.
double score_sample(const LatentClassModel& model, const Sample& sample);

// Samples of one base date grouped by customer (ordered by customer id).
std::map<std::string, std::vector<ScoredPair>> score_pairs(const LatentClassModel& model,
                                                           std::span<const Sample> samples);

// Descending score, then descending ViewF, then ascending product id.
void rank_pairs(std::vector<ScoredPair>& pairs);

std::vector<ScoredPair> select_top_n(std::vector<ScoredPair> pairs, std::size_t n);

struct Prf1 {
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
};

// nullopt when nothing was purchased (customer excluded from averages).
std::optional<Prf1> prf1(const std::vector<std::string>& selected, const std::vector<std::string>& purchased);

// Labels in rank order; nullopt without any positive label.
std::optional<double> average_precision(const std::vector<bool>& ranked_labels);

// Mean over lists that contain at least one positive; 0 if none do.
double mean_average_precision(const std::vector<std::vector<bool>>& ranked_lists);

struct TopNMetrics {
    std::size_t n = 0;
    double recall = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
};

struct DateReport {
    Day base_date = 0;
    std::size_t customers = 0;             // customers with a sample on this date
    std::size_t purchasing_customers = 0;  // those included in averages
    std::vector<TopNMetrics> top_n;
    double map = 0.0;
    bool flagged = false;  // no purchasing customers; excluded from overall
};

struct EvalReport {
    std::vector<DateReport> per_base_date;
    std::vector<TopNMetrics> overall;
    double overall_map = 0.0;
    std::vector<std::size_t> n_values;
    std::size_t dates_used = 0;
};

EvalReport run_evaluation(const LatentClassModel& model, std::span<const Sample> test_samples,
                          const std::vector<std::size_t>& n_values, int threads = 1);

// Per-class summaries: size, categories assigned by highest membership
// (ordered by descending exposure when a tensor is given), and table slices
// at fixed recency or frequency levels.
struct ClassProfile {
    std::size_t index = 0;
    double pi = 0.0;
    std::vector<std::string> categories;
    std::vector<std::int64_t> category_pairs;  // parallel exposure counts when known
    std::map<int, std::vector<double>> at_frequency;  // j -> x_{., j}
    std::map<int, std::vector<double>> at_recency;    // i -> x_{i, .}
};

std::vector<ClassProfile> report_class_profiles(const LatentClassModel& model, const CountTensor* tensor,
                                                const std::vector<int>& frequency_slices,
                                                const std::vector<int>& recency_slices);

}  // namespace clickchoice
