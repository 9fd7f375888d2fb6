#pragma once
// JSON documents for tables, tensors, models, samples and reports.
//
// Doubles are written with shortest round-trip formatting, so reading a
// document back reproduces every value bit for bit.

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "clickchoice/em.hpp"
#include "clickchoice/evaluation.hpp"
#include "clickchoice/features.hpp"
#include "clickchoice/synth.hpp"
#include "clickchoice/types.hpp"

namespace clickchoice {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

Json grid_to_json(const GridSpec& grid);
GridSpec grid_from_json(const Json& j);

// Nested [i][j] values.
Json table_values_to_json(const ProbabilityTable& table);
ProbabilityTable table_from_values_json(const Json& values, const GridSpec& grid, double epsilon, ShapeTag tag);

Json feature_config_to_json(const FeatureConfig& config);
FeatureConfig feature_config_from_json(const Json& j);

Json solver_config_to_json(const SolverConfig& config);
Json em_config_to_json(const EmConfig& config);

// kind "probability_table".
Json table_document(const ProbabilityTable& table, ModelKind model, double objective, const Json& features,
                    const Json& config);
// kind "count_tensor"; n and q nested [k][i][j].
Json tensor_document(const CountTensor& tensor, const Json& features, const Json& config);
CountTensor tensor_from_document(const Json& doc);
// kind "latent_class_model".
Json model_document(const LatentClassModel& model, const Json& features, const Json& config);
LatentClassModel model_from_document(const Json& doc);

// Accepts either a probability_table or a latent_class_model document.
LatentClassModel load_any_model(const Json& doc);

// JSONL: one header line {"kind":"sample_header", ...} then one sample per line.
void write_samples_jsonl(std::ostream& out, const std::vector<Sample>& samples, const Json& header);
struct SampleFile {
    Json header;
    std::vector<Sample> samples;
};
SampleFile read_samples_jsonl(std::istream& in);

Json report_to_json(const EvalReport& report);
Json class_profiles_to_json(const std::vector<ClassProfile>& profiles);

Json truth_to_json(const PlantedTruth& truth, const std::vector<std::string>& categories);

// Profile document for the clickstream simulator. Tables are given per class
// as nested [i][j] values or as {"base", "amplitude", "recency_power",
// "frequency_saturation"} generator parameters.
ClickstreamProfile profile_from_json(const Json& j);

// InputError naming the path when the file is missing or not valid JSON.
Json read_json_file(const std::string& path);
// Pretty-printed with a trailing newline.
void write_json_file(const std::string& path, const Json& doc);
std::string dump_json(const Json& doc);

// Throws InputError when the document lacks a compatible schema_version or
// has the wrong kind.
void check_document(const Json& doc, const std::string& kind);

}  // namespace clickchoice
