#include "stressnet/train.hpp"

#include "stressnet/nn/network.hpp"
#include "stressnet/nn/optimizer.hpp"

#include <numeric>

namespace stressnet {

std::string to_string(Task task) { return task == Task::Bi ? "bi" : "tri"; }

Task parse_task(const std::string& text) {
    if (text == "bi") return Task::Bi;
    if (text == "tri") return Task::Tri;
    throw Error("config_error", "task must be 'bi' or 'tri', got '" + text + "'");
}

int num_classes(Task task) { return task == Task::Bi ? 2 : 3; }

WindowedDataset assemble_task(const WindowedDataset& all, Task task) {
    WindowedDataset out;
    out.num_classes = num_classes(task);
    out.windows.reserve(all.size());
    for (const auto& w : all.windows) {
        if (task == Task::Bi && w.class_label == kClassAmusement) continue;
        out.windows.push_back(w);
    }
    return out;
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(const std::string& text) {
    if (text == "adam") return OptimizerKind::Adam;
    if (text == "sgd") return OptimizerKind::Sgd;
    throw Error("config_error", "optimizer must be 'adam' or 'sgd', got '" + text + "'");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw Error("config_error", "epochs must be >= 1");
    if (batch_size < 1) throw Error("config_error", "batch_size must be >= 1");
    if (!(lr > 0.0)) throw Error("config_error", "learning rate must be positive");
}

// --- metrics ----------------------------------------------------------------

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> labels, int num_classes) {
    if (preds.size() != labels.size())
        throw Error("shape_error", "prediction and label sequences differ in length");
    if (num_classes < 1) throw Error("shape_error", "num_classes must be positive");
    ConfusionMatrix cm = ConfusionMatrix::Zero(num_classes, num_classes);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] < 0 || preds[i] >= num_classes || labels[i] < 0 || labels[i] >= num_classes)
            throw Error("label_error", "class id out of range at position " + std::to_string(i));
        ++cm(labels[i], preds[i]);
    }
    return cm;
}

double harmonic_f1(double precision, double recall) {
    const double sum = precision + recall;
    return sum > 0.0 ? 2.0 * precision * recall / sum : 0.0;
}

Metrics metrics_from_confusion(const ConfusionMatrix& cm) {
    Metrics m;
    const auto classes = static_cast<std::size_t>(cm.rows());
    m.confusion = cm;
    m.count = cm.sum();
    m.accuracy = m.count > 0 ? static_cast<double>(cm.trace()) / static_cast<double>(m.count) : 0.0;

    m.per_class.resize(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        const auto i = static_cast<Eigen::Index>(c);
        const std::int64_t tp = cm(i, i);
        const std::int64_t predicted = cm.col(i).sum();
        const std::int64_t actual = cm.row(i).sum();
        auto& s = m.per_class[c];
        s.support = actual;
        s.precision = predicted > 0 ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
        s.recall = actual > 0 ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
        s.f1 = harmonic_f1(s.precision, s.recall);
        m.macro_precision += s.precision;
        m.macro_recall += s.recall;
    }
    if (classes > 0) {
        m.macro_precision /= static_cast<double>(classes);
        m.macro_recall /= static_cast<double>(classes);
    }
    m.macro_f1 = harmonic_f1(m.macro_precision, m.macro_recall);

    if (classes == 2) {
        m.averaging = "positive_class";
        m.precision = m.per_class[1].precision;
        m.recall = m.per_class[1].recall;
    } else {
        m.averaging = "macro";
        m.precision = m.macro_precision;
        m.recall = m.macro_recall;
    }
    m.f1 = harmonic_f1(m.precision, m.recall);
    return m;
}

namespace {

constexpr std::size_t kEvalBatch = 64;

std::vector<const VecD*> window_ptrs(const WindowedDataset& ds) {
    std::vector<const VecD*> ptrs;
    ptrs.reserve(ds.size());
    for (const auto& w : ds.windows) ptrs.push_back(&w.values);
    return ptrs;
}

std::vector<int> labels_of(const WindowedDataset& ds) {
    std::vector<int> labels;
    labels.reserve(ds.size());
    for (const auto& w : ds.windows) labels.push_back(w.class_label);
    return labels;
}

}  // namespace

std::vector<int> predict(const nn::ModelConfig& mcfg, const nn::Params& params, const WindowedDataset& ds) {
    const auto ptrs = window_ptrs(ds);
    std::vector<int> preds;
    preds.reserve(ds.size());
    nn::ForwardCache<double> workspace;
    for (std::size_t start = 0; start < ptrs.size(); start += kEvalBatch) {
        const std::size_t n = std::min(kEvalBatch, ptrs.size() - start);
        const std::span<const VecD* const> chunk(ptrs.data() + start, n);
        const MatD x = nn::stack_windows<double>(chunk, mcfg);
        const MatD logits = nn::forward_batch(mcfg, params, x, static_cast<Eigen::Index>(n),
                                              static_cast<const nn::DropoutMasks<double>*>(nullptr), &workspace);
        for (Eigen::Index b = 0; b < logits.cols(); ++b) preds.push_back(nn::argmax(logits.col(b)));
    }
    return preds;
}

Metrics evaluate(const nn::ModelConfig& mcfg, const nn::Params& params, const WindowedDataset& ds) {
    const auto preds = predict(mcfg, params, ds);
    const auto labels = labels_of(ds);
    return metrics_from_confusion(confusion_matrix(preds, labels, mcfg.num_classes));
}

// --- training ---------------------------------------------------------------

TrainReport train_from(nn::Params params, const WindowedDataset& train_set, const TrainConfig& cfg,
                       const nn::ModelConfig& mcfg) {
    cfg.validate();
    mcfg.validate();
    if (train_set.empty()) throw Error("empty_dataset", "training set is empty");
    if (train_set.num_classes != mcfg.num_classes)
        throw Error("config_error", "dataset has " + std::to_string(train_set.num_classes) +
                                        " classes but the model has " + std::to_string(mcfg.num_classes));
    if (!params.matches(mcfg)) throw Error("shape_error", "initial parameters do not match the model config");

    TrainReport report;
    const auto counts = train_set.class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c)
        if (counts[c] == 0) report.warnings.push_back("class " + std::to_string(c) + " absent from training set");

    const auto ptrs = window_ptrs(train_set);
    const auto labels = labels_of(train_set);
    const std::size_t n = ptrs.size();
    const auto batch_size = static_cast<std::size_t>(cfg.batch_size);

    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    auto adam = nn::AdamState<double>::init(mcfg, {.lr = cfg.lr});
    const bool dropout = mcfg.dropout1 > 0.0 || mcfg.dropout2 > 0.0;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<const VecD*> batch_ptrs;
    std::vector<int> batch_labels;
    nn::ForwardCache<double> cache;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle_each_epoch) rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t len = std::min(batch_size, n - start);
            batch_ptrs.clear();
            batch_labels.clear();
            for (std::size_t i = start; i < start + len; ++i) {
                batch_ptrs.push_back(ptrs[order[i]]);
                batch_labels.push_back(labels[order[i]]);
            }
            const auto b = static_cast<Eigen::Index>(len);
            const MatD x = nn::stack_windows<double>(batch_ptrs, mcfg);
            nn::DropoutMasks<double> masks;
            if (dropout) masks = nn::draw_dropout_masks<double>(mcfg, b, rng);
            const MatD logits = nn::forward_batch(mcfg, params, x, b, &masks, &cache);
            for (Eigen::Index j = 0; j < b; ++j)
                if (nn::argmax(logits.col(j)) == batch_labels[static_cast<std::size_t>(j)]) ++correct;

            auto lg = nn::backward_batch(mcfg, params, logits, cache, batch_labels);
            loss_sum += lg.loss * static_cast<double>(len);
            if (cfg.optimizer == OptimizerKind::Adam) nn::adam_step(params, lg.grads, adam);
            else nn::sgd_step(params, lg.grads, cfg.lr);
        }
        report.history.push_back(
            {epoch + 1, loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)});
    }

    report.train = evaluate(mcfg, params, train_set);
    report.params = std::move(params);
    return report;
}

TrainReport train(const WindowedDataset& train_set, const TrainConfig& cfg, const nn::ModelConfig& mcfg) {
    return train_from(nn::init_model(mcfg, cfg.seed), train_set, cfg, mcfg);
}

// --- cross-validation -------------------------------------------------------

MeanStd mean_std(std::span<const double> values) {
    MeanStd r;
    if (values.empty()) return r;
    r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - r.mean) * (v - r.mean);
        r.stdev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return r;
}

CvReport cross_validate(const WindowedDataset& ds, int k, const TrainConfig& cfg, const nn::ModelConfig& mcfg,
                        std::size_t jobs) {
    const auto folds = kfold(ds, k, cfg.seed);
    CvReport report;
    report.k = k;
    report.folds.resize(folds.size());

    parallel_for(folds.size(), jobs, [&](std::size_t i) {
        try {
            TrainConfig fold_cfg = cfg;
            fold_cfg.seed = cfg.seed + i;
            auto trained = train(folds[i].train, fold_cfg, mcfg);
            auto& r = report.folds[i];
            r.fold = static_cast<int>(i);
            r.train_size = folds[i].train.size();
            r.validation_size = folds[i].validation.size();
            r.final_loss = trained.history.back().loss;
            r.train = std::move(trained.train);
            r.validation = evaluate(mcfg, trained.params, folds[i].validation);
        } catch (const Error& e) {
            throw Error(e.code(), "fold " + std::to_string(i) + ": " + e.what());
        }
    });

    std::vector<double> ta, tf, va, vf;
    for (const auto& f : report.folds) {
        ta.push_back(f.train.accuracy);
        tf.push_back(f.train.f1);
        va.push_back(f.validation.accuracy);
        vf.push_back(f.validation.f1);
    }
    report.train_accuracy = mean_std(ta);
    report.train_f1 = mean_std(tf);
    report.validation_accuracy = mean_std(va);
    report.validation_f1 = mean_std(vf);
    return report;
}

}  // namespace stressnet
