#include "clickchoice/serialization.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "clickchoice/errors.hpp"
#include "clickchoice/timeutil.hpp"

namespace clickchoice {

namespace {

template <class Fn>
auto guarded(const char* what, Fn&& fn) {
    try {
        return fn();
    } catch (const Json::exception& e) {
        throw InputError(std::string("malformed ") + what + ": " + e.what());
    }
}

Json date_json(Day d) { return format_date(d); }

Day date_from_json(const Json& j) {
    if (j.is_number_integer()) return j.get<Day>();
    const auto d = parse_date(j.get<std::string>());
    if (!d) throw InputError("bad date '" + j.get<std::string>() + "'");
    return *d;
}

}  // namespace

Json grid_to_json(const GridSpec& grid) {
    return {{"recency_levels", grid.recency_levels}, {"frequency_levels", grid.frequency_levels}};
}

GridSpec grid_from_json(const Json& j) {
    return guarded("grid", [&] {
        return GridSpec(j.at("recency_levels").get<int>(), j.at("frequency_levels").get<int>());
    });
}

Json table_values_to_json(const ProbabilityTable& table) {
    const GridSpec& g = table.grid();
    Json rows = Json::array();
    for (int i = 1; i <= g.recency_levels; ++i) {
        Json row = Json::array();
        for (int j = 1; j <= g.frequency_levels; ++j) row.push_back(table.at(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

ProbabilityTable table_from_values_json(const Json& values, const GridSpec& grid, double epsilon, ShapeTag tag) {
    return guarded("table", [&] {
        if (!values.is_array() || values.size() != static_cast<std::size_t>(grid.recency_levels)) {
            throw InputError("table has " + std::to_string(values.size()) + " rows, grid " + grid.to_string() +
                             " needs " + std::to_string(grid.recency_levels));
        }
        std::vector<double> flat;
        flat.reserve(grid.cells());
        for (const auto& row : values) {
            if (!row.is_array() || row.size() != static_cast<std::size_t>(grid.frequency_levels)) {
                throw InputError("table row length does not match grid " + grid.to_string());
            }
            for (const auto& v : row) flat.push_back(v.get<double>());
        }
        return ProbabilityTable(grid, std::move(flat), epsilon, tag);
    });
}

Json feature_config_to_json(const FeatureConfig& c) {
    return {{"recency", std::string(to_string(c.recency_feature))},
            {"frequency", std::string(to_string(c.frequency_feature))},
            {"recency_levels", c.recency_levels},
            {"frequency_levels", c.frequency_levels},
            {"lookback_days", c.lookback_days},
            {"label_horizon_days", c.label_horizon_days},
            {"session_gap_minutes", c.session_gap_minutes},
            {"outlier_top_fraction", c.outlier_top_fraction}};
}

FeatureConfig feature_config_from_json(const Json& j) {
    return guarded("feature config", [&] {
        FeatureConfig c = FeatureConfig::with_features(
            parse_recency_feature(j.value("recency", std::string("dayr"))),
            parse_frequency_feature(j.value("frequency", std::string("viewf"))));
        c.recency_levels = j.value("recency_levels", c.recency_levels);
        c.frequency_levels = j.value("frequency_levels", c.frequency_levels);
        c.lookback_days = j.value("lookback_days", c.lookback_days);
        c.label_horizon_days = j.value("label_horizon_days", c.label_horizon_days);
        c.session_gap_minutes = j.value("session_gap_minutes", c.session_gap_minutes);
        c.outlier_top_fraction = j.value("outlier_top_fraction", c.outlier_top_fraction);
        c.validate();
        return c;
    });
}

Json solver_config_to_json(const SolverConfig& c) {
    return {{"epsilon", c.epsilon},
            {"kkt_tol", c.kkt_tol},
            {"max_newton_iterations", c.max_newton_iterations},
            {"barrier_reduction", c.barrier_reduction},
            {"pseudo_count", c.pseudo_count}};
}

Json em_config_to_json(const EmConfig& c) {
    return {{"classes", c.classes},
            {"max_em_iterations", c.max_em_iterations},
            {"loglik_rel_tol", c.loglik_rel_tol},
            {"restarts", c.restarts},
            {"seed", c.seed},
            {"solver", solver_config_to_json(c.solver)}};
}

void check_document(const Json& doc, const std::string& kind) {
    if (!doc.is_object()) throw InputError("expected a JSON object for " + kind);
    if (!doc.contains("schema_version") || !doc["schema_version"].is_number_integer()) {
        throw InputError(kind + " document has no schema_version");
    }
    const int version = doc["schema_version"].get<int>();
    if (version != kSchemaVersion) {
        throw InputError(kind + " document has schema_version " + std::to_string(version) + ", expected " +
                         std::to_string(kSchemaVersion));
    }
    const std::string found = doc.value("kind", std::string());
    if (found != kind) throw InputError("expected a " + kind + " document, found '" + found + "'");
}

Json table_document(const ProbabilityTable& table, ModelKind model, double objective, const Json& features,
                    const Json& config) {
    return {{"schema_version", kSchemaVersion},
            {"kind", "probability_table"},
            {"model", std::string(to_string(model))},
            {"shape", std::string(to_string(table.tag()))},
            {"grid", grid_to_json(table.grid())},
            {"epsilon", table.epsilon()},
            {"values", table_values_to_json(table)},
            {"objective", objective},
            {"features", features},
            {"config", config}};
}

Json tensor_document(const CountTensor& tensor, const Json& features, const Json& config) {
    const GridSpec& g = tensor.grid();
    Json n = Json::array();
    Json q = Json::array();
    for (std::size_t k = 0; k < tensor.num_categories(); ++k) {
        Json nk = Json::array();
        Json qk = Json::array();
        for (int i = 1; i <= g.recency_levels; ++i) {
            Json nr = Json::array();
            Json qr = Json::array();
            for (int j = 1; j <= g.frequency_levels; ++j) {
                nr.push_back(tensor.n(k, i, j));
                qr.push_back(tensor.q(k, i, j));
            }
            nk.push_back(std::move(nr));
            qk.push_back(std::move(qr));
        }
        n.push_back(std::move(nk));
        q.push_back(std::move(qk));
    }
    return {{"schema_version", kSchemaVersion},
            {"kind", "count_tensor"},
            {"grid", grid_to_json(g)},
            {"features", features},
            {"categories", tensor.categories()},
            {"total_pairs", tensor.total_pairs()},
            {"total_purchases", tensor.total_purchases()},
            {"n", std::move(n)},
            {"q", std::move(q)},
            {"config", config}};
}

CountTensor tensor_from_document(const Json& doc) {
    check_document(doc, "count_tensor");
    return guarded("count tensor", [&] {
        const GridSpec g = grid_from_json(doc.at("grid"));
        auto categories = doc.at("categories").get<std::vector<std::string>>();
        const auto& n = doc.at("n");
        const auto& q = doc.at("q");
        if (n.size() != categories.size() || q.size() != categories.size()) {
            throw InputError("count tensor arrays do not match the category list");
        }
        std::vector<std::int64_t> nf;
        std::vector<std::int64_t> qf;
        nf.reserve(categories.size() * g.cells());
        qf.reserve(categories.size() * g.cells());
        for (std::size_t k = 0; k < categories.size(); ++k) {
            if (n[k].size() != static_cast<std::size_t>(g.recency_levels) ||
                q[k].size() != static_cast<std::size_t>(g.recency_levels)) {
                throw InputError("count tensor rows do not match grid " + g.to_string());
            }
            for (int i = 0; i < g.recency_levels; ++i) {
                if (n[k][i].size() != static_cast<std::size_t>(g.frequency_levels) ||
                    q[k][i].size() != static_cast<std::size_t>(g.frequency_levels)) {
                    throw InputError("count tensor columns do not match grid " + g.to_string());
                }
                for (int j = 0; j < g.frequency_levels; ++j) {
                    nf.push_back(n[k][i][j].get<std::int64_t>());
                    qf.push_back(q[k][i][j].get<std::int64_t>());
                }
            }
        }
        return CountTensor(g, std::move(categories), std::move(nf), std::move(qf));
    });
}

Json model_document(const LatentClassModel& model, const Json& features, const Json& config) {
    Json classes = Json::array();
    for (std::size_t s = 0; s < model.classes(); ++s) {
        Json c = {{"index", s + 1},
                  {"pi", model.pi[s]},
                  {"shape", std::string(to_string(model.tables[s].tag()))},
                  {"table", table_values_to_json(model.tables[s])}};
        if (s < model.logistic.size()) {
            const auto& b = model.logistic[s];
            c["beta"] = {b.beta0, b.beta1, b.beta2};
            c["capped"] = b.capped;
        }
        classes.push_back(std::move(c));
    }
    Json memberships = Json::array();
    for (std::size_t k = 0; k < model.memberships.rows; ++k) {
        Json row = Json::array();
        for (std::size_t s = 0; s < model.memberships.cols; ++s) row.push_back(model.memberships(k, s));
        memberships.push_back(std::move(row));
    }
    Json chains = Json::array();
    for (const auto& ch : model.diagnostics.chains) {
        chains.push_back({{"seed", ch.seed},
                          {"iterations", ch.iterations},
                          {"converged", ch.converged},
                          {"degenerate", ch.degenerate},
                          {"failed", ch.failed},
                          {"failure", ch.failure},
                          {"log_likelihood_trace", ch.log_likelihood_trace},
                          {"complete_log_likelihood_trace", ch.complete_log_likelihood_trace}});
    }
    Json trace = Json::array();
    if (model.diagnostics.chosen_restart >= 0 &&
        static_cast<std::size_t>(model.diagnostics.chosen_restart) < model.diagnostics.chains.size()) {
        trace = model.diagnostics.chains[static_cast<std::size_t>(model.diagnostics.chosen_restart)]
                    .log_likelihood_trace;
    }
    return {{"schema_version", kSchemaVersion},
            {"kind", "latent_class_model"},
            {"model", std::string(to_string(model.kind))},
            {"grid", grid_to_json(model.grid())},
            {"epsilon", model.tables.front().epsilon()},
            {"features", features},
            {"categories", model.categories},
            {"classes", std::move(classes)},
            {"memberships", std::move(memberships)},
            {"final_log_likelihood", model.final_log_likelihood},
            {"diagnostics",
             {{"chosen_restart", model.diagnostics.chosen_restart},
              {"degenerate", model.diagnostics.degenerate},
              {"log_likelihood_trace", std::move(trace)},
              {"chains", std::move(chains)}}},
            {"config", config}};
}

LatentClassModel model_from_document(const Json& doc) {
    check_document(doc, "latent_class_model");
    return guarded("latent class model", [&] {
        LatentClassModel m;
        m.kind = parse_model_kind(doc.at("model").get<std::string>());
        const GridSpec g = grid_from_json(doc.at("grid"));
        const double eps = doc.at("epsilon").get<double>();
        m.categories = doc.at("categories").get<std::vector<std::string>>();
        const auto& classes = doc.at("classes");
        if (classes.empty()) throw InputError("model has no classes");
        for (const auto& c : classes) {
            m.pi.push_back(c.at("pi").get<double>());
            m.tables.push_back(table_from_values_json(c.at("table"), g, eps,
                                                      parse_shape_tag(c.value("shape", std::string("none")))));
            if (c.contains("beta")) {
                const auto& b = c["beta"];
                m.logistic.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                                      c.value("capped", false)});
            }
        }
        if (!m.logistic.empty() && m.logistic.size() != m.tables.size()) {
            throw InputError("beta given for only some classes");
        }
        const auto& z = doc.at("memberships");
        if (z.size() != m.categories.size()) throw InputError("membership rows do not match categories");
        m.memberships = Matrix(m.categories.size(), m.pi.size());
        for (std::size_t k = 0; k < z.size(); ++k) {
            if (z[k].size() != m.pi.size()) throw InputError("membership columns do not match classes");
            for (std::size_t s = 0; s < m.pi.size(); ++s) m.memberships(k, s) = z[k][s].get<double>();
        }
        m.final_log_likelihood = doc.value("final_log_likelihood", 0.0);
        if (doc.contains("diagnostics")) {
            const auto& d = doc["diagnostics"];
            m.diagnostics.chosen_restart = d.value("chosen_restart", -1);
            m.diagnostics.degenerate = d.value("degenerate", false);
            for (const auto& ch : d.value("chains", Json::array())) {
                ChainDiagnostics c;
                c.seed = ch.value("seed", std::uint64_t{0});
                c.iterations = ch.value("iterations", 0);
                c.converged = ch.value("converged", false);
                c.degenerate = ch.value("degenerate", false);
                c.failed = ch.value("failed", false);
                c.failure = ch.value("failure", std::string());
                c.log_likelihood_trace = ch.value("log_likelihood_trace", std::vector<double>{});
                c.complete_log_likelihood_trace = ch.value("complete_log_likelihood_trace", std::vector<double>{});
                m.diagnostics.chains.push_back(std::move(c));
            }
        }
        return m;
    });
}

LatentClassModel load_any_model(const Json& doc) {
    const std::string kind = doc.is_object() ? doc.value("kind", std::string()) : std::string();
    if (kind == "latent_class_model") return model_from_document(doc);
    if (kind == "probability_table") {
        check_document(doc, "probability_table");
        return guarded("probability table", [&] {
            const GridSpec g = grid_from_json(doc.at("grid"));
            auto table = table_from_values_json(doc.at("values"), g, doc.at("epsilon").get<double>(),
                                                parse_shape_tag(doc.value("shape", std::string("none"))));
            return single_table_model(table, parse_model_kind(doc.value("model", std::string("mcc"))));
        });
    }
    throw InputError("expected a probability_table or latent_class_model document, found '" + kind + "'");
}

void write_samples_jsonl(std::ostream& out, const std::vector<Sample>& samples, const Json& header) {
    Json h = header;
    h["kind"] = "sample_header";
    h["schema_version"] = kSchemaVersion;
    h["count"] = samples.size();
    out << h.dump() << '\n';
    for (const auto& s : samples) {
        const Json line = {{"base_date", date_json(s.base_date)},
                           {"customer_id", s.customer_id},
                           {"product_id", s.product_id},
                           {"category_id", s.category_id},
                           {"recency", s.recency},
                           {"frequency", s.frequency},
                           {"views", s.views},
                           {"purchased", s.purchased}};
        out << line.dump() << '\n';
    }
}

SampleFile read_samples_jsonl(std::istream& in) {
    SampleFile file;
    std::string line;
    std::size_t number = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::exception& e) {
            throw InputError("samples line " + std::to_string(number) + ": " + e.what());
        }
        if (!have_header) {
            check_document(j, "sample_header");
            file.header = std::move(j);
            have_header = true;
            continue;
        }
        try {
            Sample s;
            s.base_date = date_from_json(j.at("base_date"));
            s.customer_id = j.at("customer_id").get<std::string>();
            s.product_id = j.at("product_id").get<std::string>();
            s.category_id = j.at("category_id").get<std::string>();
            s.recency = j.at("recency").get<int>();
            s.frequency = j.at("frequency").get<int>();
            s.views = j.value("views", s.frequency);
            s.purchased = j.at("purchased").get<bool>();
            file.samples.push_back(std::move(s));
        } catch (const Json::exception& e) {
            throw InputError("samples line " + std::to_string(number) + ": " + e.what());
        }
    }
    if (!have_header) throw InputError("samples file is empty (no sample_header line)");
    return file;
}

namespace {

Json metrics_json(const std::vector<TopNMetrics>& ms) {
    Json out = Json::array();
    for (const auto& m : ms) {
        out.push_back({{"n", m.n}, {"recall", m.recall}, {"precision", m.precision}, {"f1", m.f1}});
    }
    return out;
}

}  // namespace

Json report_to_json(const EvalReport& report) {
    Json dates = Json::array();
    for (const auto& d : report.per_base_date) {
        dates.push_back({{"base_date", date_json(d.base_date)},
                         {"customers", d.customers},
                         {"purchasing_customers", d.purchasing_customers},
                         {"flagged", d.flagged},
                         {"top_n", metrics_json(d.top_n)},
                         {"map", d.map}});
    }
    return {{"n_values", report.n_values},
            {"dates_used", report.dates_used},
            {"overall", metrics_json(report.overall)},
            {"overall_map", report.overall_map},
            {"per_base_date", std::move(dates)}};
}

Json class_profiles_to_json(const std::vector<ClassProfile>& profiles) {
    Json out = Json::array();
    for (const auto& p : profiles) {
        Json at_f = Json::object();
        for (const auto& [j, v] : p.at_frequency) at_f[std::to_string(j)] = v;
        Json at_r = Json::object();
        for (const auto& [i, v] : p.at_recency) at_r[std::to_string(i)] = v;
        Json c = {{"index", p.index},
                  {"pi", p.pi},
                  {"category_count", p.categories.size()},
                  {"categories", p.categories},
                  {"at_frequency", std::move(at_f)},
                  {"at_recency", std::move(at_r)}};
        if (!p.category_pairs.empty()) c["category_pairs"] = p.category_pairs;
        out.push_back(std::move(c));
    }
    return out;
}

Json truth_to_json(const PlantedTruth& truth, const std::vector<std::string>& categories) {
    Json classes = Json::array();
    for (std::size_t s = 0; s < truth.tables.size(); ++s) {
        classes.push_back({{"index", s + 1}, {"pi", truth.pi[s]}, {"table", table_values_to_json(truth.tables[s])}});
    }
    Json assignment = Json::object();
    for (std::size_t k = 0; k < truth.assignment.size() && k < categories.size(); ++k) {
        assignment[categories[k]] = truth.assignment[k] + 1;
    }
    return {{"schema_version", kSchemaVersion},
            {"kind", "planted_truth"},
            {"grid", grid_to_json(truth.tables.front().grid())},
            {"classes", std::move(classes)},
            {"assignment", std::move(assignment)}};
}

ClickstreamProfile profile_from_json(const Json& j) {
    return guarded("profile", [&] {
        ClickstreamProfile p;
        const auto start = parse_date(j.at("start_date").get<std::string>());
        if (!start) throw InputError("profile start_date must be YYYY-MM-DD");
        p.start_date = *start;
        p.days = j.value("days", p.days);
        p.customers = j.value("customers", p.customers);
        p.products_per_category = j.value("products_per_category", p.products_per_category);
        p.interests_per_customer = j.value("interests_per_customer", p.interests_per_customer);
        p.daily_view_probability = j.value("daily_view_probability", p.daily_view_probability);
        p.extra_views_mean = j.value("extra_views_mean", p.extra_views_mean);
        if (j.contains("features")) p.features = feature_config_from_json(j["features"]);
        const GridSpec g = p.features.grid();
        const double eps = j.value("epsilon", kDefaultEpsilon);

        const auto& classes = j.at("classes");
        if (!classes.is_array() || classes.empty()) throw InputError("profile needs at least one class");
        std::vector<double> shares;
        for (const auto& c : classes) {
            if (c.contains("table")) {
                p.tables.push_back(table_from_values_json(c["table"], g, eps, ShapeTag::mcc));
            } else {
                p.tables.push_back(planted_mcc_table(g, c.at("base").get<double>(), c.at("amplitude").get<double>(),
                                                     c.value("recency_power", 2.0),
                                                     c.value("frequency_saturation", 0.3), eps));
            }
            shares.push_back(c.value("share", 1.0));
        }
        if (j.contains("categories") && j["categories"].is_array()) {
            for (const auto& c : j["categories"]) {
                p.categories.push_back(c.at("id").get<std::string>());
                const int cls = c.at("class").get<int>();
                if (cls < 1 || static_cast<std::size_t>(cls) > p.tables.size()) {
                    throw InputError("category " + p.categories.back() + " refers to class " + std::to_string(cls));
                }
                p.assignment.push_back(static_cast<std::size_t>(cls - 1));
            }
        } else {
            const std::size_t count = j.value("num_categories", std::size_t{8});
            p.categories = category_names(count);
            p.assignment = proportional_assignment(count, shares);
        }
        if (p.categories.empty()) throw InputError("profile needs at least one category");
        return p;
    });
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw InputError("'" + path + "' is not valid JSON: " + e.what());
    }
}

std::string dump_json(const Json& doc) { return doc.dump(2) + "\n"; }

void write_json_file(const std::string& path, const Json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << dump_json(doc);
    if (!out) throw InputError("failed writing '" + path + "'");
}

}  // namespace clickchoice
