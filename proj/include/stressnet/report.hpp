#pragma once

// Model files, JSON/CSV reports and plot-ready CSV extraction.
//
// Report JSON documents carry a "kind" field ("train", "eval", "cv", "loso",
// "personalize"). CSV numbers use the same shortest round-trip formatting
// as the JSON documents so values can be compared textually.

#include "json.hpp"

#include "stressnet/personalization.hpp"

#include <filesystem>

namespace stressnet {

using Json = nlohmann::json;

inline constexpr int kModelSchemaVersion = 1;
inline constexpr const char* kModelFormat = "stressnet-model";

Json to_json(const PipelineConfig& cfg);
Json to_json(const nn::ModelConfig& cfg);
Json to_json(const TrainConfig& cfg);
Json to_json(const Metrics& m);
Json to_json(const TrainReport& r);  // history, metrics, warnings (no parameters)
Json to_json(const CvReport& r);
Json to_json(const LosoReport& r);
Json to_json(const PersonalizationReport& r);

PipelineConfig pipeline_config_from_json(const Json& j);
nn::ModelConfig model_config_from_json(const Json& j);
TrainConfig train_config_from_json(const Json& j);

struct StoredModel {
    nn::ModelConfig config;
    nn::Params params;
    std::uint64_t seed = 0;
};

/// Writes the model document. Tensor values are rounded to 32-bit floats.
void save_model(const std::filesystem::path& path, const nn::ModelConfig& cfg, const nn::Params& params,
                std::uint64_t seed);
Json model_to_json(const nn::ModelConfig& cfg, const nn::Params& params, std::uint64_t seed);

/// Throws schema_error naming the offending field on any mismatch.
StoredModel load_model(const std::filesystem::path& path);
StoredModel model_from_json(const Json& doc);

/// Shortest round-trip decimal text of a double, as in the JSON reports.
std::string format_number(double v);

void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const Json& doc);
Json read_json(const std::filesystem::path& path);

std::string history_csv(const TrainReport& r);                 // epoch,loss,train_acc
std::string cv_folds_csv(const CvReport& r);                   // one row per fold
std::string loso_csv(const LosoReport& r);                     // one row per subject
std::string personalization_csv(std::span<const PersonalizationReport> rs);  // subject,original_acc,total_samples,retrain_size,final_acc
std::string personalization_trace_csv(std::span<const PersonalizationReport> rs);

enum class PlotKind { LosoAccuracy, LosoF1, History };

PlotKind parse_plot_kind(const std::string& text);

/// Extracts plot series from a report document without recomputing values.
std::string plot_data_csv(const Json& report, PlotKind kind);
void emit_plot_data(const Json& report, PlotKind kind, const std::filesystem::path& path);

}  // namespace stressnet
