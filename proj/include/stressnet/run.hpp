#pragma once

// Run configuration, manifests and the command implementations behind the
// `stressnet` binary. Every command writes into a fresh timestamped
// subdirectory of the output directory (synth writes its CSVs directly).

#include "stressnet/report.hpp"

#include <filesystem>

namespace stressnet {

inline constexpr const char* kToolVersion = "0.3.0";

struct SynthSettings {
    int n_subjects = 15;
    std::vector<std::string> shifted_subjects;
    SynthProfile profile;
};

struct RunConfig {
    std::string command;
    std::filesystem::path data_dir = "data";
    std::filesystem::path output_dir = "runs";
    Task task = Task::Bi;
    std::uint64_t seed = 42;
    std::size_t jobs = 1;

    PipelineConfig pipeline;
    nn::ModelConfig model;
    TrainConfig train;

    double train_fraction = 0.75;
    int folds = 10;

    PersonalizeOptions personalize;
    std::vector<std::string> personalize_subjects;  // empty: every subject below its training accuracy

    std::filesystem::path model_path;  // eval
    std::string eval_subset = "all";   // all | train | test

    SynthSettings synth;

    std::filesystem::path report_path;  // plot-data
    std::string plot_kind = "loso_accuracy";
    std::filesystem::path plot_out;

    void validate() const;
};

/// Full default configuration document; every overridable key is present.
Json default_config_json();

/// Applies `--section.key value`; the value is parsed according to the type
/// of the existing entry. Unknown keys are config errors.
void apply_override(Json& doc, const std::string& dotted_key, const std::string& value);

/// Reads a config file. A RunManifest is accepted too: its config snapshot
/// is returned.
Json load_config_document(const std::filesystem::path& path);

/// Deep-merges `patch` into `base` (objects recursively, everything else replaced).
void merge_config(Json& base, const Json& patch);

RunConfig run_config_from_json(const Json& doc);
Json to_json(const RunConfig& cfg);

/// Per-subject and per-class window counts of the assembled task corpus.
Json corpus_summary(const WindowedDataset& ds);

/// Runs the configured command and returns the directory it wrote into.
std::filesystem::path run_command(const RunConfig& cfg);

}  // namespace stressnet
