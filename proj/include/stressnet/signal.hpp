#pragma once

// EDA ingestion, normalization, windowing and dataset partitioning.

#include "stressnet/core.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace stressnet {

inline constexpr int kSamplingRateHz = 4;

/// WESAD condition codes that produce windows. Everything else is dropped.
enum ConditionCode : int { kBaseline = 1, kStress = 2, kAmusement = 3 };

/// Class labels used by the model.
enum ClassLabel : int { kClassBaseline = 0, kClassStress = 1, kClassAmusement = 2 };

/// One subject's raw wrist EDA stream.
struct EdaRecording {
    std::string subject_id;
    int sampling_rate_hz = kSamplingRateHz;
    std::vector<double> samples;       // microsiemens
    std::vector<int> condition_codes;  // one per sample

    std::size_t size() const { return samples.size(); }
};

struct PipelineConfig {
    int window_seconds = 60;
    double overlap_fraction = 0.5;
    int sampling_rate_hz = kSamplingRateHz;

    int window_len() const { return window_seconds * sampling_rate_hz; }
    int hop() const;
    /// Throws config_error when the derived hop or window is not positive.
    void validate() const;
};

struct EdaWindow {
    VecD values;
    int class_label = 0;
    std::string subject_id;
};

struct WindowedDataset {
    std::vector<EdaWindow> windows;
    int num_classes = 3;

    std::size_t size() const { return windows.size(); }
    bool empty() const { return windows.empty(); }

    /// Count per class label, length num_classes.
    std::vector<std::size_t> class_counts() const;
    /// Subject tags in natural order ("S2" < "S10").
    std::vector<std::string> subjects() const;
    WindowedDataset subset(const std::vector<std::size_t>& indices) const;
    WindowedDataset for_subject(const std::string& subject) const;
    WindowedDataset excluding_subject(const std::string& subject) const;
    void append(const WindowedDataset& other);
};

/// Natural ordering for subject tags: digit runs compare numerically.
bool subject_less(const std::string& a, const std::string& b);

/// Parses a neutral subject CSV (header `eda_uS,label`).
EdaRecording load_recording(const std::filesystem::path& path, const std::string& subject_id);
void save_recording(const EdaRecording& rec, const std::filesystem::path& path);

/// Loads every `S<id>.csv` in a directory, in natural subject order.
std::vector<EdaRecording> load_corpus(const std::filesystem::path& data_dir);

/// Per-subject min-max rescale of the whole recording to [0, 1].
EdaRecording min_max_normalize(const EdaRecording& rec);

/// Condition code to class label, or -1 for codes that yield no windows.
int class_for_condition(int code);

/// Number of windows a run of `run_length` samples yields.
std::size_t windows_in_run(std::size_t run_length, const PipelineConfig& cfg);

/// Windows are cut only inside contiguous same-condition runs.
WindowedDataset segment(const EdaRecording& rec, const PipelineConfig& cfg);

/// normalize + segment for every recording, concatenated (3-class labels).
WindowedDataset build_corpus(const std::vector<EdaRecording>& recordings, const PipelineConfig& cfg);

struct Split {
    WindowedDataset train;
    WindowedDataset test;
};

/// Stratified random split; train holds round(train_fraction * size) windows.
Split make_split(const WindowedDataset& ds, double train_fraction, std::uint64_t seed);

/// Index form of make_split, used by the dataset version and by tests.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    const std::vector<int>& labels, int num_classes, double train_fraction, std::uint64_t seed);

struct Fold {
    WindowedDataset train;
    WindowedDataset validation;
};

/// Stratified k-fold partition. Validation sets are disjoint and cover ds.
std::vector<Fold> kfold(const WindowedDataset& ds, int k, std::uint64_t seed);

/// Index form of kfold: fold id per element.
std::vector<int> kfold_assignment(const std::vector<int>& labels, int num_classes, int k,
                                  std::uint64_t seed);

// --- synthetic subjects -----------------------------------------------------

/// Shape parameters of the synthetic EDA generator. Levels are offsets (uS)
/// above a per-subject tonic base; rates are phasic peaks per minute.
struct SynthProfile {
    double baseline_seconds = 1200.0;
    double stress_seconds = 600.0;
    double amusement_seconds = 390.0;

    double tonic_base_min = 1.0;
    double tonic_base_max = 4.0;
    double baseline_level = 0.0;
    double stress_level = 1.5;
    double amusement_level = 0.6;

    double baseline_peak_rate = 1.0;
    double stress_peak_rate = 8.0;
    double amusement_peak_rate = 4.0;
    double peak_amplitude = 0.35;
    double peak_rise_seconds = 0.75;
    double peak_decay_seconds = 4.0;

    double drift_sigma = 0.01;        // uS per sqrt(second)
    double reversion_seconds = 20.0;  // tonic level relaxation time
    double noise_sigma = 0.005;

    /// Builds a profile from a flat key/value block; unknown keys are errors.
    static SynthProfile from_map(const std::map<std::string, double>& kv);
    std::map<std::string, double> to_map() const;
    void validate() const;
};

/// A subject whose stress response differs from the default population:
/// tonic level drops under stress and the response is carried by phasic
/// activity alone.
SynthProfile shifted_profile(SynthProfile base = {});

EdaRecording synth_subject(std::uint64_t seed, const SynthProfile& profile,
                           const std::string& subject_id = "S0");

/// Subject tags following the WESAD numbering (S2..S17 without S12), then S18+.
std::vector<std::string> default_subject_tags(std::size_t n);

}  // namespace stressnet
