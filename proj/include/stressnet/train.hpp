#pragma once

// Mini-batch training, metrics and k-fold cross-validation.

#include "stressnet/nn/model.hpp"
#include "stressnet/signal.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stressnet {

enum class Task { Bi, Tri };

std::string to_string(Task task);
Task parse_task(const std::string& text);
int num_classes(Task task);

/// bi: drops amusement windows (baseline=0, stress=1); tri: all three classes.
WindowedDataset assemble_task(const WindowedDataset& all, Task task);

enum class OptimizerKind { Adam, Sgd };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& text);

struct TrainConfig {
    int epochs = 200;
    int batch_size = 32;
    double lr = 0.001;
    std::uint64_t seed = 0;
    bool shuffle_each_epoch = true;
    OptimizerKind optimizer = OptimizerKind::Adam;

    void validate() const;
};

using ConfusionMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

struct ClassScores {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::int64_t support = 0;
};

/// Classification metrics. For two classes the headline precision, recall
/// and f1 are those of the positive (stress) class; for more classes they
/// are macro averages. Macro values are always reported alongside.
struct Metrics {
    std::int64_t count = 0;
    double accuracy = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::string averaging;  // "positive_class" or "macro"
    double macro_precision = 0;
    double macro_recall = 0;
    double macro_f1 = 0;
    std::vector<ClassScores> per_class;
    ConfusionMatrix confusion;  // rows = true class, columns = predicted
};

/// Entry (i, j) counts samples of true class i predicted as j.
ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> labels, int num_classes);

/// 2PR/(P+R), or 0 when both are 0.
double harmonic_f1(double precision, double recall);

Metrics metrics_from_confusion(const ConfusionMatrix& confusion);

/// Argmax class per window, inference mode.
std::vector<int> predict(const nn::ModelConfig& mcfg, const nn::Params& params, const WindowedDataset& ds);

Metrics evaluate(const nn::ModelConfig& mcfg, const nn::Params& params, const WindowedDataset& ds);

struct EpochStats {
    int epoch = 0;
    double loss = 0;            // mean training loss over the epoch
    double train_accuracy = 0;  // running accuracy of the training-mode predictions
};

struct TrainReport {
    nn::Params params;
    std::vector<EpochStats> history;
    Metrics train;
    std::optional<Metrics> test;
    std::vector<std::string> warnings;
};

/// Trains a freshly initialized model (init seed = cfg.seed).
TrainReport train(const WindowedDataset& train_set, const TrainConfig& cfg, const nn::ModelConfig& mcfg);

/// Continues training from `start`; used for fine-tuning.
TrainReport train_from(nn::Params start, const WindowedDataset& train_set, const TrainConfig& cfg,
                       const nn::ModelConfig& mcfg);

struct FoldResult {
    int fold = 0;
    std::size_t train_size = 0;
    std::size_t validation_size = 0;
    double final_loss = 0;
    Metrics train;
    Metrics validation;
};

struct MeanStd {
    double mean = 0;
    double stdev = 0;  // sample standard deviation
};

MeanStd mean_std(std::span<const double> values);

struct CvReport {
    int k = 0;
    std::vector<FoldResult> folds;
    MeanStd train_accuracy, train_f1;
    MeanStd validation_accuracy, validation_f1;
};

/// k independent models, fold i trained with seed cfg.seed + i.
CvReport cross_validate(const WindowedDataset& ds, int k, const TrainConfig& cfg, const nn::ModelConfig& mcfg,
                        std::size_t jobs = 1);

}  // namespace stressnet
