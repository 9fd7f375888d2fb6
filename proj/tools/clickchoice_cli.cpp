// clickchoice: simulate -> features -> fit -> evaluate -> report.
//
// Exit codes: 0 success, 1 input/validation error, 2 numerical failure.
// Option precedence is command-line flag, then the --config file, then the
// built-in default. Output artifacts embed the resolved configuration but
// never the thread count or output paths, so reruns with any --threads value
// write identical bytes.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "clickchoice/em.hpp"
#include "clickchoice/errors.hpp"
#include "clickchoice/evaluation.hpp"
#include "clickchoice/features.hpp"
#include "clickchoice/lclr.hpp"
#include "clickchoice/parallel.hpp"
#include "clickchoice/serialization.hpp"
#include "clickchoice/shape_solver.hpp"
#include "clickchoice/synth.hpp"

namespace cc = clickchoice;
using cc::Json;

namespace {

void setup_logging() {
    auto logger = spdlog::stderr_logger_mt("clickchoice");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    const char* env = std::getenv("CLICKCHOICE_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") {
        spdlog::set_level(spdlog::level::err);
    } else if (level == "debug") {
        spdlog::set_level(spdlog::level::debug);
    } else {
        spdlog::set_level(spdlog::level::info);
        if (level != "info") spdlog::warn("CLICKCHOICE_LOG='{}' not one of error,info,debug; using info", level);
    }
}

// Fills options the user did not pass from the matching config-file section.
class Resolver {
public:
    Resolver(CLI::App* app, const Json* section) : app_(app), section_(section) {}

    template <class T>
    void take(const std::string& flag, const std::string& key, T& value) {
        const CLI::Option* opt = app_->get_option_no_throw(flag);
        if (opt != nullptr && opt->count() > 0) return;
        if (section_ == nullptr || !section_->contains(key)) return;
        try {
            value = (*section_)[key].get<T>();
        } catch (const Json::exception& e) {
            throw cc::InputError("config key '" + key + "': " + e.what());
        }
    }

private:
    CLI::App* app_;
    const Json* section_;
};

const Json* config_section(const Json& config, const std::string& name) {
    if (!config.is_object() || !config.contains(name)) return nullptr;
    if (!config[name].is_object()) throw cc::InputError("config section '" + name + "' must be an object");
    return &config[name];
}

void require(const std::string& value, const std::string& flag) {
    if (value.empty()) throw cc::InputError(flag + " is required");
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw cc::InputError("cannot write '" + path + "'");
    return out;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string profile;
    std::uint64_t seed = 0;
    std::string out;
    std::string truth;
};

int run_simulate(const SimulateArgs& a) {
    require(a.profile, "--profile");
    require(a.out, "--out");
    const Json profile_doc = cc::read_json_file(a.profile);
    const auto profile = cc::profile_from_json(profile_doc);
    const Json config = {{"profile", a.profile}, {"profile_document", profile_doc}, {"seed", a.seed}};
    spdlog::info("simulate: seed {} customers {} categories {} days {}", a.seed, profile.customers,
                 profile.categories.size(), profile.days);

    const auto sim = cc::generate_synthetic_clickstream(profile, a.seed);
    auto out = open_output(a.out);
    const Json header = {{"kind", "events_header"}, {"schema_version", cc::kSchemaVersion}, {"config", config}};
    out << header.dump() << '\n';
    cc::write_events_jsonl(out, sim.events);
    if (!out) throw cc::InputError("failed writing '" + a.out + "'");
    spdlog::info("wrote {} events to {}", sim.events.size(), a.out);

    if (!a.truth.empty()) {
        Json truth = cc::truth_to_json(sim.truth, profile.categories);
        truth["features"] = cc::feature_config_to_json(profile.features);
        truth["config"] = config;
        cc::write_json_file(a.truth, truth);
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct FeaturesArgs {
    std::string events;
    std::string base_dates;
    std::string recency = "dayr";
    std::string frequency = "viewf";
    int recency_levels = 0;  // 0: the feature's default
    int frequency_levels = 0;
    int lookback_days = 28;
    int label_horizon_days = 1;
    int session_gap_min = 30;
    double outlier_frac = 0.01;
    double sample_rate = 1.0;
    std::uint64_t seed = 0;
    std::string out;
    std::string tensor_out;
};

int run_features(const FeaturesArgs& a) {
    require(a.events, "--events");
    require(a.base_dates, "--base-dates");
    if (a.out.empty() && a.tensor_out.empty()) throw cc::InputError("--out or --tensor-out is required");
    auto fc = cc::FeatureConfig::with_features(cc::parse_recency_feature(a.recency),
                                               cc::parse_frequency_feature(a.frequency));
    if (a.recency_levels > 0) fc.recency_levels = a.recency_levels;
    if (a.frequency_levels > 0) fc.frequency_levels = a.frequency_levels;
    fc.lookback_days = a.lookback_days;
    fc.label_horizon_days = a.label_horizon_days;
    fc.session_gap_minutes = a.session_gap_min;
    fc.outlier_top_fraction = a.outlier_frac;
    fc.validate();
    const auto dates = cc::parse_date_range(a.base_dates);
    if (!(a.sample_rate > 0.0 && a.sample_rate <= 1.0)) throw cc::InputError("--sample-rate must lie in (0, 1]");

    const Json features = cc::feature_config_to_json(fc);
    const Json config = {{"events", a.events},    {"base_dates", a.base_dates}, {"features", features},
                         {"sample_rate", a.sample_rate}, {"seed", a.seed}};
    spdlog::info("features: {}", config.dump());

    cc::IngestSummary summary;
    const auto events = cc::read_events(a.events, summary);
    spdlog::info("read {} events from {} lines", summary.events, summary.lines);
    if (summary.malformed > 0) {
        spdlog::warn("skipped {} malformed records", summary.malformed);
        for (const auto& m : summary.malformed_examples) spdlog::debug("  {}", m);
    }
    const auto kept = cc::exclude_outlier_customers(events, fc.outlier_top_fraction);
    auto samples = cc::build_samples(kept, dates, fc);
    if (a.sample_rate < 1.0) samples = cc::subsample(samples, a.sample_rate, a.seed);
    spdlog::info("{} samples over {} base dates", samples.size(), dates.size());

    const Json header = {{"grid", cc::grid_to_json(fc.grid())}, {"features", features}, {"config", config}};
    if (!a.out.empty()) {
        auto out = open_output(a.out);
        cc::write_samples_jsonl(out, samples, header);
        if (!out) throw cc::InputError("failed writing '" + a.out + "'");
    }
    if (!a.tensor_out.empty()) {
        const auto tensor = cc::aggregate_counts(samples, fc.grid(), cc::categories_of(samples));
        cc::write_json_file(a.tensor_out, cc::tensor_document(tensor, features, config));
        spdlog::info("tensor: {} categories, {} pairs, {} purchases", tensor.num_categories(), tensor.total_pairs(),
                     tensor.total_purchases());
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct FitArgs {
    std::string model;
    std::string tensor;
    int classes = 1;
    int restarts = 10;
    std::uint64_t seed = 0;
    int max_iter = 10;
    double tol = 1e-6;
    double epsilon = cc::kDefaultEpsilon;
    std::string out;
};

int run_fit(const FitArgs& a, int threads) {
    require(a.model, "--model");
    require(a.tensor, "--tensor");
    require(a.out, "--out");
    const auto kind = cc::parse_model_kind(a.model);
    const Json tensor_doc = cc::read_json_file(a.tensor);
    const auto tensor = cc::tensor_from_document(tensor_doc);
    const Json features = tensor_doc.value("features", Json::object());

    cc::EmConfig em;
    em.classes = a.classes;
    em.restarts = a.restarts;
    em.seed = a.seed;
    em.max_em_iterations = a.max_iter;
    em.loglik_rel_tol = a.tol;
    em.threads = threads;
    em.solver.epsilon = a.epsilon;

    Json config = {{"model", a.model}, {"tensor", a.tensor}, {"tensor_config", tensor_doc.value("config", Json())}};
    if (kind == cc::ModelKind::mono || kind == cc::ModelKind::mcc) {
        if (a.classes != 1) throw cc::InputError("--classes applies to lcmcc and lclr only");
        em.solver.validate();
        config["solver"] = cc::solver_config_to_json(em.solver);
        spdlog::info("fit: {}", config.dump());
        const auto counts = cc::WeightedCellCounts::from_tensor(tensor.collapsed());
        const auto mode = kind == cc::ModelKind::mono ? cc::ShapeMode::monotone : cc::ShapeMode::mcc;
        const auto fit = cc::fit_shape(counts, mode, em.solver);
        spdlog::info("objective {} after {} Newton steps", fit.objective, fit.newton_iterations);
        cc::write_json_file(a.out, cc::table_document(fit.table, kind, fit.objective, features, config));
        return 0;
    }

    em.validate();
    config["em"] = cc::em_config_to_json(em);
    spdlog::info("fit: {}", config.dump());
    spdlog::info("seed {}", em.seed);
    const auto model = kind == cc::ModelKind::lcmcc ? cc::em_fit(tensor, em) : cc::lclr_em_fit(tensor, em);
    model.validate();
    if (model.diagnostics.degenerate) spdlog::warn("every EM chain hit an empty class; reporting the best one");
    spdlog::info("log-likelihood {} (restart {})", model.final_log_likelihood, model.diagnostics.chosen_restart);
    cc::write_json_file(a.out, cc::model_document(model, features, config));
    return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::vector<std::string> models;
    std::string samples;
    std::vector<std::size_t> top_n{3, 5, 10};
    std::string out;
    std::string emit_plots;
};

std::string model_label(const cc::LatentClassModel& m) {
    std::string name(cc::to_string(m.kind));
    for (auto& ch : name) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return name + "(" + std::to_string(m.classes()) + ")";
}

double model_sample_rate(const Json& doc) {
    const auto cfg = doc.value("config", Json::object());
    if (!cfg.is_object()) return 1.0;
    const auto tc = cfg.value("tensor_config", Json::object());
    return tc.is_object() ? tc.value("sample_rate", 1.0) : 1.0;
}

int run_evaluate(const EvaluateArgs& a, int threads) {
    if (a.models.empty()) throw cc::InputError("--model is required");
    require(a.samples, "--samples");
    require(a.out, "--out");
    if (a.top_n.empty()) throw cc::InputError("--top-n needs at least one value");

    std::ifstream in(a.samples);
    if (!in) throw cc::InputError("cannot open '" + a.samples + "'");
    const auto file = cc::read_samples_jsonl(in);
    std::optional<cc::GridSpec> sample_grid;
    if (file.header.contains("grid")) sample_grid = cc::grid_from_json(file.header["grid"]);

    const Json config = {{"models", a.models}, {"samples", a.samples}, {"top_n", a.top_n}};
    spdlog::info("evaluate: {}", config.dump());

    struct Entry {
        std::string path;
        Json doc;
        cc::LatentClassModel model;
        cc::EvalReport report;
    };
    std::vector<Entry> entries;
    for (const auto& path : a.models) {
        Entry e;
        e.path = path;
        e.doc = cc::read_json_file(path);
        e.model = cc::load_any_model(e.doc);
        if (sample_grid && !(*sample_grid == e.model.grid())) {
            throw cc::InputError("model '" + path + "' grid " + e.model.grid().to_string() +
                                 " does not match samples grid " + sample_grid->to_string());
        }
        e.report = cc::run_evaluation(e.model, file.samples, a.top_n, threads);
        entries.push_back(std::move(e));
    }

    Json models = Json::array();
    for (const auto& e : entries) {
        models.push_back({{"path", e.path},
                          {"label", model_label(e.model)},
                          {"model", std::string(cc::to_string(e.model.kind))},
                          {"classes", e.model.classes()},
                          {"sample_rate", model_sample_rate(e.doc)},
                          {"report", cc::report_to_json(e.report)}});
        for (const auto& m : e.report.overall) {
            spdlog::info("{} N={} recall {:.4f} precision {:.4f} F1 {:.4f}", model_label(e.model), m.n, m.recall,
                         m.precision, m.f1);
        }
        spdlog::info("{} MAP {:.4f} over {} base dates", model_label(e.model), e.report.overall_map,
                     e.report.dates_used);
    }
    const Json doc = {{"schema_version", cc::kSchemaVersion},
                      {"kind", "evaluation_report"},
                      {"models", std::move(models)},
                      {"config", config}};
    cc::write_json_file(a.out, doc);

    if (!a.emit_plots.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(a.emit_plots, ec);
        if (ec) throw cc::InputError("cannot create '" + a.emit_plots + "': " + ec.message());
        auto f1 = open_output((std::filesystem::path(a.emit_plots) / "f1_by_model.csv").string());
        auto map = open_output((std::filesystem::path(a.emit_plots) / "map_by_classes.csv").string());
        f1 << "label,model,classes,sample_rate,n,base_date,recall,precision,f1\n";
        map << "label,model,classes,sample_rate,base_date,map\n";
        for (const auto& e : entries) {
            const std::string prefix = model_label(e.model) + "," + std::string(cc::to_string(e.model.kind)) + "," +
                                       std::to_string(e.model.classes()) + "," +
                                       format_double(model_sample_rate(e.doc)) + ",";
            for (const auto& d : e.report.per_base_date) {
                if (d.flagged) continue;
                for (const auto& m : d.top_n) {
                    f1 << prefix << m.n << "," << cc::format_date(d.base_date) << "," << format_double(m.recall) << ","
                       << format_double(m.precision) << "," << format_double(m.f1) << "\n";
                }
                map << prefix << cc::format_date(d.base_date) << "," << format_double(d.map) << "\n";
            }
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
    std::string model;
    std::string tensor;
    std::vector<int> frequency_slices;
    std::vector<int> recency_slices;
    std::string out;
};

int run_report(ReportArgs a) {
    require(a.model, "--model");
    const Json model_doc = cc::read_json_file(a.model);
    const auto model = cc::load_any_model(model_doc);
    std::optional<cc::CountTensor> tensor;
    if (!a.tensor.empty()) tensor = cc::tensor_from_document(cc::read_json_file(a.tensor));
    const auto& g = model.grid();
    if (tensor && !(tensor->grid() == g)) {
        throw cc::InputError("tensor grid " + tensor->grid().to_string() + " does not match model grid " +
                             g.to_string());
    }
    if (a.frequency_slices.empty()) a.frequency_slices = {g.frequency_levels};
    if (a.recency_slices.empty()) a.recency_slices = {g.recency_levels};

    const Json config = {{"model", a.model},
                         {"tensor", a.tensor},
                         {"frequency_slices", a.frequency_slices},
                         {"recency_slices", a.recency_slices}};
    spdlog::info("report: {}", config.dump());
    const auto profiles =
        cc::report_class_profiles(model, tensor ? &*tensor : nullptr, a.frequency_slices, a.recency_slices);
    const Json doc = {{"schema_version", cc::kSchemaVersion},
                      {"kind", "class_report"},
                      {"model", std::string(cc::to_string(model.kind))},
                      {"grid", cc::grid_to_json(g)},
                      {"classes", cc::class_profiles_to_json(profiles)},
                      {"config", config}};
    if (a.out.empty()) {
        std::cout << cc::dump_json(doc);
    } else {
        cc::write_json_file(a.out, doc);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();

    CLI::App app{"Shape-restricted purchase-probability models for clickstream data"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string("clickchoice ") + CLICKCHOICE_VERSION);

    std::string config_path;
    int threads = cc::default_thread_count();
    app.add_option("--config", config_path, "JSON config file; sections per subcommand");
    app.add_option("--threads", threads, "worker threads (outputs do not depend on it)")
        ->check(CLI::PositiveNumber);

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "synthetic clickstream with planted latent classes");
    sim_cmd->add_option("--profile", sim.profile, "profile JSON");
    sim_cmd->add_option("--seed", sim.seed);
    sim_cmd->add_option("--out", sim.out, "events JSONL");
    sim_cmd->add_option("--truth", sim.truth, "ground-truth JSON");

    FeaturesArgs feat;
    auto* feat_cmd = app.add_subcommand("features", "recency/frequency samples and the count tensor");
    feat_cmd->add_option("--events", feat.events, "events JSONL or CSV");
    feat_cmd->add_option("--base-dates", feat.base_dates, "START..END (inclusive) or one date");
    feat_cmd->add_option("--recency", feat.recency)->check(CLI::IsMember({"viewr", "sesr", "dayr"}));
    feat_cmd->add_option("--frequency", feat.frequency)->check(CLI::IsMember({"viewf", "sesf", "dayf"}));
    feat_cmd->add_option("--recency-levels", feat.recency_levels);
    feat_cmd->add_option("--frequency-levels", feat.frequency_levels);
    feat_cmd->add_option("--lookback-days", feat.lookback_days);
    feat_cmd->add_option("--label-horizon-days", feat.label_horizon_days);
    feat_cmd->add_option("--session-gap-min", feat.session_gap_min);
    feat_cmd->add_option("--outlier-frac", feat.outlier_frac);
    feat_cmd->add_option("--sample-rate", feat.sample_rate);
    feat_cmd->add_option("--seed", feat.seed);
    feat_cmd->add_option("--out", feat.out, "samples JSONL");
    feat_cmd->add_option("--tensor-out", feat.tensor_out, "count tensor JSON");

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "fit mono, mcc, lcmcc or lclr to a count tensor");
    fit_cmd->add_option("--model", fit.model)->check(CLI::IsMember({"mono", "mcc", "lcmcc", "lclr"}));
    fit_cmd->add_option("--tensor", fit.tensor);
    fit_cmd->add_option("--classes", fit.classes);
    fit_cmd->add_option("--restarts", fit.restarts);
    fit_cmd->add_option("--seed", fit.seed);
    fit_cmd->add_option("--max-iter", fit.max_iter);
    fit_cmd->add_option("--tol", fit.tol, "relative log-likelihood tolerance");
    fit_cmd->add_option("--epsilon", fit.epsilon, "box bound");
    fit_cmd->add_option("--out", fit.out);

    EvaluateArgs ev;
    auto* ev_cmd = app.add_subcommand("evaluate", "top-N recall/precision/F1 and MAP");
    ev_cmd->add_option("--model", ev.models, "model or table JSON; repeat to compare");
    ev_cmd->add_option("--samples", ev.samples);
    ev_cmd->add_option("--top-n", ev.top_n)->delimiter(',');
    ev_cmd->add_option("--out", ev.out);
    ev_cmd->add_option("--emit-plots", ev.emit_plots, "directory for CSV series");

    ReportArgs rep;
    auto* rep_cmd = app.add_subcommand("report", "per-class summaries of a fitted model");
    rep_cmd->add_option("--model", rep.model);
    rep_cmd->add_option("--tensor", rep.tensor);
    rep_cmd->add_option("--frequency-slices", rep.frequency_slices)->delimiter(',');
    rep_cmd->add_option("--recency-slices", rep.recency_slices)->delimiter(',');
    rep_cmd->add_option("--out", rep.out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        Json config = Json::object();
        if (!config_path.empty()) config = cc::read_json_file(config_path);
        Resolver(&app, &config).take("--threads", "threads", threads);
        if (threads < 1) throw cc::InputError("threads must be >= 1");
        spdlog::info("clickchoice {} ({})", CLICKCHOICE_VERSION, cc::solver_backend_version());
        spdlog::debug("threads {}", threads);

        if (sim_cmd->parsed()) {
            Resolver r(sim_cmd, config_section(config, "simulate"));
            r.take("--profile", "profile", sim.profile);
            r.take("--seed", "seed", sim.seed);
            r.take("--out", "out", sim.out);
            r.take("--truth", "truth", sim.truth);
            return run_simulate(sim);
        }
        if (feat_cmd->parsed()) {
            Resolver r(feat_cmd, config_section(config, "features"));
            r.take("--events", "events", feat.events);
            r.take("--base-dates", "base_dates", feat.base_dates);
            r.take("--recency", "recency", feat.recency);
            r.take("--frequency", "frequency", feat.frequency);
            r.take("--recency-levels", "recency_levels", feat.recency_levels);
            r.take("--frequency-levels", "frequency_levels", feat.frequency_levels);
            r.take("--lookback-days", "lookback_days", feat.lookback_days);
            r.take("--label-horizon-days", "label_horizon_days", feat.label_horizon_days);
            r.take("--session-gap-min", "session_gap_min", feat.session_gap_min);
            r.take("--outlier-frac", "outlier_frac", feat.outlier_frac);
            r.take("--sample-rate", "sample_rate", feat.sample_rate);
            r.take("--seed", "seed", feat.seed);
            r.take("--out", "out", feat.out);
            r.take("--tensor-out", "tensor_out", feat.tensor_out);
            return run_features(feat);
        }
        if (fit_cmd->parsed()) {
            Resolver r(fit_cmd, config_section(config, "fit"));
            r.take("--model", "model", fit.model);
            r.take("--tensor", "tensor", fit.tensor);
            r.take("--classes", "classes", fit.classes);
            r.take("--restarts", "restarts", fit.restarts);
            r.take("--seed", "seed", fit.seed);
            r.take("--max-iter", "max_iter", fit.max_iter);
            r.take("--tol", "tol", fit.tol);
            r.take("--epsilon", "epsilon", fit.epsilon);
            r.take("--out", "out", fit.out);
            return run_fit(fit, threads);
        }
        if (ev_cmd->parsed()) {
            Resolver r(ev_cmd, config_section(config, "evaluate"));
            r.take("--model", "models", ev.models);
            r.take("--samples", "samples", ev.samples);
            r.take("--top-n", "top_n", ev.top_n);
            r.take("--out", "out", ev.out);
            r.take("--emit-plots", "emit_plots", ev.emit_plots);
            return run_evaluate(ev, threads);
        }
        if (rep_cmd->parsed()) {
            Resolver r(rep_cmd, config_section(config, "report"));
            r.take("--model", "model", rep.model);
            r.take("--tensor", "tensor", rep.tensor);
            r.take("--frequency-slices", "frequency_slices", rep.frequency_slices);
            r.take("--recency-slices", "recency_slices", rep.recency_slices);
            r.take("--out", "out", rep.out);
            return run_report(rep);
        }
    } catch (const cc::NumericalError& e) {
        spdlog::error("numerical failure: {}", e.what());
        return 2;
    } catch (const cc::InputError& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 1;
}
