#pragma once
// Clickstream ingestion and recency/frequency feature extraction.
//
// For a base date D the lookback window is [D - lookback_days, D). Every
// customer-product pair with at least one page view in the window becomes a
// Sample; it is labeled purchased when the pair has a purchase event in
// [D, D + label_horizon_days). Purchase events never count as views.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clickchoice/timeutil.hpp"
#include "clickchoice/types.hpp"

namespace clickchoice {

enum class EventKind { view, purchase };

struct ClickEvent {
    EpochSeconds timestamp = 0;
    std::string customer_id;
    std::string product_id;
    std::string category_id;
    EventKind kind = EventKind::view;

    friend bool operator==(const ClickEvent&, const ClickEvent&) = default;
};

enum class RecencyFeature { viewr, sesr, dayr };
enum class FrequencyFeature { viewf, sesf, dayf };

std::string_view to_string(RecencyFeature f);
std::string_view to_string(FrequencyFeature f);
RecencyFeature parse_recency_feature(std::string_view text);
FrequencyFeature parse_frequency_feature(std::string_view text);

// ViewR 24, SesR 12, DayR 24, ViewF 16, SesF 8, DayF 8.
int default_levels(RecencyFeature f);
int default_levels(FrequencyFeature f);

struct FeatureConfig {
    RecencyFeature recency_feature = RecencyFeature::dayr;
    FrequencyFeature frequency_feature = FrequencyFeature::viewf;
    int recency_levels = 24;
    int frequency_levels = 16;
    int lookback_days = 28;
    int label_horizon_days = 1;
    int session_gap_minutes = 30;
    double outlier_top_fraction = 0.01;

    static FeatureConfig with_features(RecencyFeature r, FrequencyFeature f);
    GridSpec grid() const { return GridSpec(recency_levels, frequency_levels); }
    void validate() const;
};

struct Sample {
    Day base_date = 0;
    std::string customer_id;
    std::string product_id;
    std::string category_id;
    int recency = 1;
    int frequency = 1;
    int views = 0;  // raw page-view count of the pair in the window
    bool purchased = false;

    friend bool operator==(const Sample&, const Sample&) = default;
};

// ViewF value of a pair (its PV count capped at 16); used for tie-breaking.
inline int viewf_value(const Sample& s) { return s.views < 16 ? s.views : 16; }

// i = max{levels + 1 - m, 1}; m >= 1.
int recency_level(std::int64_t m, int levels);
// j = min{n, levels}; n >= 1.
int frequency_level(std::int64_t n, int levels);

// 1 + number of gaps strictly longer than gap_seconds in sorted times.
std::size_t count_sessions(std::span<const EpochSeconds> sorted_times, EpochSeconds gap_seconds);

struct IngestSummary {
    std::size_t lines = 0;
    std::size_t events = 0;
    std::size_t malformed = 0;
    std::vector<std::string> malformed_examples;  // first few, "line N: reason"
};

enum class EventFormat { jsonl, csv };

// Malformed records are skipped and counted; an unparseable timestamp throws
// InputError naming the line.
std::vector<ClickEvent> parse_events(std::istream& in, EventFormat format, IngestSummary& summary);
std::vector<ClickEvent> read_events(const std::string& path, IngestSummary& summary);
void write_events_jsonl(std::ostream& out, std::span<const ClickEvent> events);

std::vector<Sample> build_samples(std::span<const ClickEvent> events, std::span<const Day> base_dates,
                                  const FeatureConfig& config);

// Drops every event of the top ceil(fraction * customers) customers by
// purchase count; ties at the cutoff remove the lexicographically larger id first.
std::vector<ClickEvent> exclude_outlier_customers(std::span<const ClickEvent> events, double fraction);

// Bernoulli(rate) thinning driven by `seed`.
std::vector<Sample> subsample(std::span<const Sample> samples, double rate, std::uint64_t seed);

// InputError naming the id for a category not in `categories`, or for a
// sample outside the grid.
CountTensor aggregate_counts(std::span<const Sample> samples, const GridSpec& grid,
                             const std::vector<std::string>& categories);

// Sorted distinct category ids of the samples.
std::vector<std::string> categories_of(std::span<const Sample> samples);

}  // namespace clickchoice
