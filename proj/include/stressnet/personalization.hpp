#pragma once

// Leave-one-subject-out evaluation and incremental fine-tuning on the
// held-out subject.

#include "stressnet/train.hpp"

#include <optional>

namespace stressnet {

struct LosoFoldReport {
    std::string left_out_subject;
    std::vector<std::string> train_subjects;
    std::size_t train_windows = 0;
    std::size_t test_windows = 0;
    Metrics train;
    Metrics test;
    nn::Params params;  // model trained without the left-out subject
};

struct LosoReport {
    std::vector<LosoFoldReport> folds;  // natural subject order
    double mean_train_accuracy = 0;
    double mean_train_f1 = 0;
    double mean_test_accuracy = 0;
    double mean_test_f1 = 0;
};

/// Trains on every subject except `left_out` (seed cfg.seed + subject index)
/// and evaluates on both sides.
LosoFoldReport loso_run(const WindowedDataset& corpus, const std::string& left_out, const TrainConfig& cfg,
                        const nn::ModelConfig& mcfg);

LosoReport loso_all(const WindowedDataset& corpus, const TrainConfig& cfg, const nn::ModelConfig& mcfg,
                    std::size_t jobs = 1);

struct PersonalizeOptions {
    int epochs = 50;  // fine-tuning epochs per step
    int stride = 1;   // growth of k per step
    bool from_scratch = false;
};

struct PersonalizationStep {
    std::size_t k = 0;
    double full_accuracy = 0;
    std::optional<double> remainder_accuracy;  // empty once k == total
};

struct PersonalizationReport {
    std::string subject;
    double target = 0;
    double original_test_accuracy = 0;
    std::size_t total_samples = 0;
    std::size_t retrain_sample_size = 0;
    double final_test_accuracy = 0;
    std::optional<double> final_remainder_accuracy;
    bool target_reached = false;
    std::vector<PersonalizationStep> trace;  // k strictly increasing, starts at 0
    std::vector<std::size_t> sample_order;   // prefix of length k is the step-k sample set
};

/// Seeded permutation whose every prefix is as close to class-proportional
/// as possible.
std::vector<std::size_t> stratified_order(std::span<const int> labels, int num_classes, std::uint64_t seed);

/// Grows the re-training set one stratified prefix at a time, fine-tuning
/// `base` on it, until accuracy on the full left-out set reaches `target`
/// or every window has been used.
PersonalizationReport personalize(const nn::ModelConfig& mcfg, const nn::Params& base,
                                  const WindowedDataset& leftout, double target, const TrainConfig& cfg,
                                  const PersonalizeOptions& opts = {});

}  // namespace stressnet
