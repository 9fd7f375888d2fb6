#include "clickchoice/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <json.hpp>
#include <set>
#include <sstream>
#include <unordered_map>

#include "clickchoice/errors.hpp"
#include "clickchoice/rng.hpp"

namespace clickchoice {

using nlohmann::json;

std::string_view to_string(RecencyFeature f) {
    switch (f) {
        case RecencyFeature::viewr: return "viewr";
        case RecencyFeature::sesr: return "sesr";
        case RecencyFeature::dayr: return "dayr";
    }
    return "?";
}

std::string_view to_string(FrequencyFeature f) {
    switch (f) {
        case FrequencyFeature::viewf: return "viewf";
        case FrequencyFeature::sesf: return "sesf";
        case FrequencyFeature::dayf: return "dayf";
    }
    return "?";
}

RecencyFeature parse_recency_feature(std::string_view text) {
    if (text == "viewr") return RecencyFeature::viewr;
    if (text == "sesr") return RecencyFeature::sesr;
    if (text == "dayr") return RecencyFeature::dayr;
    throw InputError("unknown recency feature '" + std::string(text) + "' (expected viewr, sesr, dayr)");
}

FrequencyFeature parse_frequency_feature(std::string_view text) {
    if (text == "viewf") return FrequencyFeature::viewf;
    if (text == "sesf") return FrequencyFeature::sesf;
    if (text == "dayf") return FrequencyFeature::dayf;
    throw InputError("unknown frequency feature '" + std::string(text) + "' (expected viewf, sesf, dayf)");
}

int default_levels(RecencyFeature f) {
    switch (f) {
        case RecencyFeature::viewr: return 24;
        case RecencyFeature::sesr: return 12;
        case RecencyFeature::dayr: return 24;
    }
    return 24;
}

int default_levels(FrequencyFeature f) {
    switch (f) {
        case FrequencyFeature::viewf: return 16;
        case FrequencyFeature::sesf: return 8;
        case FrequencyFeature::dayf: return 8;
    }
    return 16;
}

FeatureConfig FeatureConfig::with_features(RecencyFeature r, FrequencyFeature f) {
    FeatureConfig c;
    c.recency_feature = r;
    c.frequency_feature = f;
    c.recency_levels = default_levels(r);
    c.frequency_levels = default_levels(f);
    return c;
}

void FeatureConfig::validate() const {
    if (recency_levels < 1 || frequency_levels < 1) throw InputError("feature levels must be >= 1");
    if (lookback_days < 1) throw InputError("lookback_days must be >= 1");
    if (label_horizon_days < 1) throw InputError("label_horizon_days must be >= 1");
    if (session_gap_minutes < 0) throw InputError("session_gap_minutes must be >= 0");
    if (!(outlier_top_fraction >= 0.0 && outlier_top_fraction < 1.0)) {
        throw InputError("outlier fraction must lie in [0, 1)");
    }
}

int recency_level(std::int64_t m, int levels) {
    if (m < 1) throw std::invalid_argument("recency_level: elapsed units must be >= 1");
    if (levels < 1) throw std::invalid_argument("recency_level: levels must be >= 1");
    const std::int64_t i = static_cast<std::int64_t>(levels) + 1 - m;
    return static_cast<int>(std::max<std::int64_t>(i, 1));
}

int frequency_level(std::int64_t n, int levels) {
    if (n < 1) throw std::invalid_argument("frequency_level: count must be >= 1");
    if (levels < 1) throw std::invalid_argument("frequency_level: levels must be >= 1");
    return static_cast<int>(std::min<std::int64_t>(n, levels));
}

std::size_t count_sessions(std::span<const EpochSeconds> sorted_times, EpochSeconds gap_seconds) {
    if (sorted_times.empty()) return 0;
    std::size_t sessions = 1;
    for (std::size_t t = 1; t < sorted_times.size(); ++t) {
        if (sorted_times[t] - sorted_times[t - 1] > gap_seconds) ++sessions;
    }
    return sessions;
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

constexpr std::size_t kMaxMalformedExamples = 10;

void note_malformed(IngestSummary& summary, std::size_t line, const std::string& why) {
    ++summary.malformed;
    if (summary.malformed_examples.size() < kMaxMalformedExamples) {
        summary.malformed_examples.push_back("line " + std::to_string(line) + ": " + why);
    }
}

std::optional<EventKind> parse_kind(std::string_view text) {
    if (text == "view" || text == "pv" || text == "page_view") return EventKind::view;
    if (text == "purchase") return EventKind::purchase;
    return std::nullopt;
}

EpochSeconds require_timestamp(std::string_view text, std::size_t line) {
    auto t = parse_timestamp(text);
    if (!t) throw InputError("line " + std::to_string(line) + ": unparseable timestamp '" + std::string(text) + "'");
    return *t;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t c = 0; c < line.size(); ++c) {
        const char ch = line[c];
        if (quoted) {
            if (ch == '"' && c + 1 < line.size() && line[c + 1] == '"') {
                cur.push_back('"');
                ++c;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::string id_field(const json& rec, const char* key) {
    const auto it = rec.find(key);
    if (it == rec.end()) return {};
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
    return {};
}

}  // namespace

std::vector<ClickEvent> parse_events(std::istream& in, EventFormat format, IngestSummary& summary) {
    std::vector<ClickEvent> events;
    std::string line;
    std::size_t line_no = 0;

    if (format == EventFormat::jsonl) {
        while (std::getline(in, line)) {
            ++line_no;
            ++summary.lines;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            json rec = json::parse(line, nullptr, false);
            if (rec.is_discarded() || !rec.is_object()) {
                note_malformed(summary, line_no, "not a JSON object");
                continue;
            }
            // header line written by the simulator
            if (rec.contains("schema_version") && rec.value("kind", std::string()) == "events_header") continue;
            ClickEvent ev;
            ev.customer_id = id_field(rec, "customer_id");
            ev.product_id = id_field(rec, "product_id");
            ev.category_id = id_field(rec, "category_id");
            const auto ts = rec.find("timestamp");
            const auto kind = rec.find("kind");
            if (ts == rec.end() || kind == rec.end() || !kind->is_string() || ev.customer_id.empty() ||
                ev.product_id.empty() || ev.category_id.empty()) {
                note_malformed(summary, line_no, "missing field");
                continue;
            }
            const auto k = parse_kind(kind->get<std::string>());
            if (!k) {
                note_malformed(summary, line_no, "unknown kind");
                continue;
            }
            ev.kind = *k;
            if (ts->is_number_integer()) {
                ev.timestamp = ts->get<std::int64_t>();
            } else if (ts->is_string()) {
                ev.timestamp = require_timestamp(ts->get<std::string>(), line_no);
            } else {
                throw InputError("line " + std::to_string(line_no) + ": unparseable timestamp " + ts->dump());
            }
            events.push_back(std::move(ev));
        }
    } else {
        std::vector<int> col(5, -1);
        if (!std::getline(in, line)) return events;
        ++line_no;
        ++summary.lines;
        const auto header = split_csv(line);
        const char* names[5] = {"timestamp", "customer_id", "product_id", "category_id", "kind"};
        for (int c = 0; c < static_cast<int>(header.size()); ++c) {
            for (int f = 0; f < 5; ++f) {
                if (header[static_cast<std::size_t>(c)] == names[f]) col[static_cast<std::size_t>(f)] = c;
            }
        }
        for (int f = 0; f < 5; ++f) {
            if (col[static_cast<std::size_t>(f)] < 0) throw InputError(std::string("CSV header lacks column ") + names[f]);
        }
        while (std::getline(in, line)) {
            ++line_no;
            ++summary.lines;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            const auto fields = split_csv(line);
            const int needed = *std::max_element(col.begin(), col.end());
            if (static_cast<int>(fields.size()) <= needed) {
                note_malformed(summary, line_no, "too few columns");
                continue;
            }
            auto field = [&](int f) -> const std::string& { return fields[static_cast<std::size_t>(col[static_cast<std::size_t>(f)])]; };
            ClickEvent ev;
            ev.customer_id = field(1);
            ev.product_id = field(2);
            ev.category_id = field(3);
            const auto k = parse_kind(field(4));
            if (ev.customer_id.empty() || ev.product_id.empty() || ev.category_id.empty() || !k) {
                note_malformed(summary, line_no, "missing field or unknown kind");
                continue;
            }
            ev.kind = *k;
            ev.timestamp = require_timestamp(field(0), line_no);
            events.push_back(std::move(ev));
        }
    }
    summary.events = events.size();
    return events;
}

std::vector<ClickEvent> read_events(const std::string& path, IngestSummary& summary) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open events file " + path);
    const bool csv = path.size() >= 4 && path.substr(path.size() - 4) == ".csv";
    return parse_events(in, csv ? EventFormat::csv : EventFormat::jsonl, summary);
}

void write_events_jsonl(std::ostream& out, std::span<const ClickEvent> events) {
    for (const auto& ev : events) {
        json rec = {{"timestamp", ev.timestamp},
                    {"customer_id", ev.customer_id},
                    {"product_id", ev.product_id},
                    {"category_id", ev.category_id},
                    {"kind", ev.kind == EventKind::view ? "view" : "purchase"}};
        out << rec.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// Feature extraction

namespace {

struct ViewRecord {
    EpochSeconds time;
    const std::string* product;
    const std::string* category;
};

struct CustomerHistory {
    std::vector<ViewRecord> views;  // sorted by time, input order within ties
    std::map<std::string, std::vector<EpochSeconds>> purchases;  // per product, sorted
};

struct PairStat {
    int views = 0;
    int days = 0;
    int sessions = 0;
    Day last_day = 0;
    std::size_t last_session = 0;
    EpochSeconds last_time = 0;
    const std::string* category = nullptr;
};

}  // namespace

std::vector<Sample> build_samples(std::span<const ClickEvent> events, std::span<const Day> base_dates,
                                  const FeatureConfig& config) {
    config.validate();
    if (base_dates.empty()) throw InputError("build_samples needs at least one base date");

    std::map<std::string, CustomerHistory> customers;
    for (const auto& ev : events) {
        auto& hist = customers[ev.customer_id];
        if (ev.kind == EventKind::view) {
            hist.views.push_back({ev.timestamp, &ev.product_id, &ev.category_id});
        } else {
            hist.purchases[ev.product_id].push_back(ev.timestamp);
        }
    }
    for (auto& [id, hist] : customers) {
        std::stable_sort(hist.views.begin(), hist.views.end(),
                         [](const ViewRecord& a, const ViewRecord& b) { return a.time < b.time; });
        for (auto& [p, times] : hist.purchases) std::sort(times.begin(), times.end());
    }

    const EpochSeconds gap = static_cast<EpochSeconds>(config.session_gap_minutes) * 60;
    std::vector<Day> dates(base_dates.begin(), base_dates.end());
    std::sort(dates.begin(), dates.end());
    dates.erase(std::unique(dates.begin(), dates.end()), dates.end());

    std::vector<Sample> out;
    std::vector<EpochSeconds> window_times;
    std::vector<std::size_t> session_of;
    for (Day base : dates) {
        const EpochSeconds window_begin = start_of(base - config.lookback_days);
        const EpochSeconds window_end = start_of(base);
        const EpochSeconds label_end = start_of(base + config.label_horizon_days);

        for (const auto& [customer, hist] : customers) {
            auto first = std::lower_bound(hist.views.begin(), hist.views.end(), window_begin,
                                          [](const ViewRecord& v, EpochSeconds t) { return v.time < t; });
            auto last = std::lower_bound(first, hist.views.end(), window_end,
                                         [](const ViewRecord& v, EpochSeconds t) { return v.time < t; });
            if (first == last) continue;

            window_times.clear();
            session_of.clear();
            std::size_t session = 0;
            for (auto it = first; it != last; ++it) {
                if (!window_times.empty() && it->time - window_times.back() > gap) ++session;
                window_times.push_back(it->time);
                session_of.push_back(session);
            }
            const std::size_t total_sessions = session + 1;

            std::map<std::string_view, PairStat> pairs;
            std::size_t pos = 0;
            for (auto it = first; it != last; ++it, ++pos) {
                PairStat& st = pairs[*it->product];
                const Day d = day_of(it->time);
                if (st.views == 0 || d != st.last_day) ++st.days;
                if (st.views == 0 || session_of[pos] != st.last_session) ++st.sessions;
                ++st.views;
                st.last_day = d;
                st.last_session = session_of[pos];
                st.last_time = it->time;
                st.category = it->category;
            }

            for (const auto& [product, st] : pairs) {
                std::int64_t m = 1;
                switch (config.recency_feature) {
                    case RecencyFeature::dayr: m = base - st.last_day; break;
                    case RecencyFeature::viewr: {
                        auto after = std::upper_bound(window_times.begin(), window_times.end(), st.last_time);
                        m = static_cast<std::int64_t>(window_times.end() - after) + 1;
                        break;
                    }
                    case RecencyFeature::sesr:
                        m = static_cast<std::int64_t>(total_sessions - st.last_session);
                        break;
                }
                std::int64_t n = 1;
                switch (config.frequency_feature) {
                    case FrequencyFeature::viewf: n = st.views; break;
                    case FrequencyFeature::sesf: n = st.sessions; break;
                    case FrequencyFeature::dayf: n = st.days; break;
                }

                bool purchased = false;
                if (auto pit = hist.purchases.find(std::string(product)); pit != hist.purchases.end()) {
                    auto lo = std::lower_bound(pit->second.begin(), pit->second.end(), window_end);
                    purchased = lo != pit->second.end() && *lo < label_end;
                }

                Sample s;
                s.base_date = base;
                s.customer_id = customer;
                s.product_id = std::string(product);
                s.category_id = *st.category;
                s.recency = recency_level(m, config.recency_levels);
                s.frequency = frequency_level(n, config.frequency_levels);
                s.views = st.views;
                s.purchased = purchased;
                out.push_back(std::move(s));
            }
        }
    }
    return out;
}

std::vector<ClickEvent> exclude_outlier_customers(std::span<const ClickEvent> events, double fraction) {
    if (!(fraction >= 0.0 && fraction < 1.0)) throw InputError("outlier fraction must lie in [0, 1)");
    std::map<std::string, std::int64_t> purchases;
    for (const auto& ev : events) {
        auto& count = purchases[ev.customer_id];
        if (ev.kind == EventKind::purchase) ++count;
    }
    const auto removed_count = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(purchases.size()) - 1e-9));
    if (removed_count == 0) return {events.begin(), events.end()};

    std::vector<std::pair<std::int64_t, std::string>> ranked;
    ranked.reserve(purchases.size());
    for (const auto& [id, count] : purchases) ranked.emplace_back(count, id);
    std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first > y.first;
        return x.second > y.second;
    });
    std::set<std::string, std::less<>> removed;
    for (std::size_t r = 0; r < removed_count && r < ranked.size(); ++r) removed.insert(ranked[r].second);

    std::vector<ClickEvent> kept;
    kept.reserve(events.size());
    for (const auto& ev : events) {
        if (!removed.contains(ev.customer_id)) kept.push_back(ev);
    }
    return kept;
}

std::vector<Sample> subsample(std::span<const Sample> samples, double rate, std::uint64_t seed) {
    if (!(rate > 0.0 && rate <= 1.0)) throw InputError("sample rate must lie in (0, 1]");
    if (rate == 1.0) return {samples.begin(), samples.end()};
    Rng rng(seed);
    std::vector<Sample> kept;
    for (const auto& s : samples) {
        if (uniform01(rng) < rate) kept.push_back(s);
    }
    return kept;
}

CountTensor aggregate_counts(std::span<const Sample> samples, const GridSpec& grid,
                             const std::vector<std::string>& categories) {
    CountTensor tensor(grid, categories);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t k = 0; k < categories.size(); ++k) index.emplace(categories[k], k);
    for (const auto& s : samples) {
        auto it = index.find(s.category_id);
        if (it == index.end()) throw InputError("unknown category id '" + s.category_id + "'");
        if (!grid.contains(s.recency, s.frequency)) {
            throw InputError("sample level (" + std::to_string(s.recency) + "," + std::to_string(s.frequency) +
                             ") outside grid " + grid.to_string());
        }
        tensor.add(it->second, s.recency, s.frequency, 1, s.purchased ? 1 : 0);
    }
    return tensor;
}

std::vector<std::string> categories_of(std::span<const Sample> samples) {
    std::set<std::string> ids;
    for (const auto& s : samples) ids.insert(s.category_id);
    return {ids.begin(), ids.end()};
}

}  // namespace clickchoice
