#include "stressnet/personalization.hpp"

#include <algorithm>
#include <numeric>

namespace stressnet {

LosoFoldReport loso_run(const WindowedDataset& corpus, const std::string& left_out, const TrainConfig& cfg,
                        const nn::ModelConfig& mcfg) {
    const auto subjects = corpus.subjects();
    const auto it = std::find(subjects.begin(), subjects.end(), left_out);
    if (it == subjects.end()) throw Error("unknown_subject", "subject '" + left_out + "' not in corpus");

    const WindowedDataset train_set = corpus.excluding_subject(left_out);
    const WindowedDataset test_set = corpus.for_subject(left_out);

    LosoFoldReport r;
    r.left_out_subject = left_out;
    r.train_subjects = train_set.subjects();
    if (std::find(r.train_subjects.begin(), r.train_subjects.end(), left_out) != r.train_subjects.end())
        throw Error("leakage", "left-out subject present in training set");
    r.train_windows = train_set.size();
    r.test_windows = test_set.size();

    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = cfg.seed + static_cast<std::uint64_t>(it - subjects.begin());
    auto trained = train(train_set, fold_cfg, mcfg);
    r.train = std::move(trained.train);
    r.test = evaluate(mcfg, trained.params, test_set);
    r.params = std::move(trained.params);
    return r;
}

LosoReport loso_all(const WindowedDataset& corpus, const TrainConfig& cfg, const nn::ModelConfig& mcfg,
                    std::size_t jobs) {
    const auto subjects = corpus.subjects();
    if (subjects.size() < 2) throw Error("missing_data", "leave-one-subject-out needs at least two subjects");

    LosoReport report;
    report.folds.resize(subjects.size());
    parallel_for(subjects.size(), jobs, [&](std::size_t i) {
        try {
            report.folds[i] = loso_run(corpus, subjects[i], cfg, mcfg);
        } catch (const Error& e) {
            throw Error(e.code(), "subject " + subjects[i] + ": " + e.what());
        }
    });

    const auto n = static_cast<double>(report.folds.size());
    for (const auto& f : report.folds) {
        report.mean_train_accuracy += f.train.accuracy / n;
        report.mean_train_f1 += f.train.f1 / n;
        report.mean_test_accuracy += f.test.accuracy / n;
        report.mean_test_f1 += f.test.f1 / n;
    }
    return report;
}

std::vector<std::size_t> stratified_order(std::span<const int> labels, int num_classes, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) by_class.at(static_cast<std::size_t>(labels[i])).push_back(i);
    for (auto& idx : by_class) rng.shuffle(idx);

    // element r of a class with n members sits at quantile (r + 0.5) / n
    struct Keyed {
        double key;
        int cls;
        std::size_t index;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(labels.size());
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const auto n = static_cast<double>(by_class[c].size());
        for (std::size_t r = 0; r < by_class[c].size(); ++r)
            keyed.push_back({(static_cast<double>(r) + 0.5) / n, static_cast<int>(c), by_class[c][r]});
    }
    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
        return a.key != b.key ? a.key < b.key : a.cls < b.cls;
    });
    std::vector<std::size_t> order;
    order.reserve(keyed.size());
    for (const auto& k : keyed) order.push_back(k.index);
    return order;
}

PersonalizationReport personalize(const nn::ModelConfig& mcfg, const nn::Params& base,
                                  const WindowedDataset& leftout, double target, const TrainConfig& cfg,
                                  const PersonalizeOptions& opts) {
    if (leftout.empty()) throw Error("empty_dataset", "left-out set is empty");
    if (opts.stride < 1) throw Error("config_error", "personalization stride must be >= 1");
    if (opts.epochs < 1) throw Error("config_error", "personalization epochs must be >= 1");

    PersonalizationReport r;
    r.subject = leftout.windows.front().subject_id;
    r.target = target;
    r.total_samples = leftout.size();

    std::vector<int> labels;
    for (const auto& w : leftout.windows) labels.push_back(w.class_label);
    r.sample_order = stratified_order(labels, leftout.num_classes, cfg.seed);

    const double original = evaluate(mcfg, base, leftout).accuracy;
    r.original_test_accuracy = original;
    r.final_test_accuracy = original;
    r.final_remainder_accuracy = original;
    r.trace.push_back({0, original, original});
    if (original >= target) {
        r.target_reached = true;
        return r;
    }

    const std::size_t n = leftout.size();
    const auto stride = static_cast<std::size_t>(opts.stride);
    for (std::size_t k = std::min(stride, n);; k = std::min(k + stride, n)) {
        const std::vector<std::size_t> chosen(r.sample_order.begin(), r.sample_order.begin() + static_cast<long>(k));
        const std::vector<std::size_t> rest(r.sample_order.begin() + static_cast<long>(k), r.sample_order.end());
        const WindowedDataset retrain_set = leftout.subset(chosen);

        TrainConfig step_cfg = cfg;
        step_cfg.epochs = opts.epochs;
        step_cfg.seed = cfg.seed + k;
        const auto tuned = opts.from_scratch ? train(retrain_set, step_cfg, mcfg)
                                             : train_from(base, retrain_set, step_cfg, mcfg);

        PersonalizationStep step;
        step.k = k;
        step.full_accuracy = evaluate(mcfg, tuned.params, leftout).accuracy;
        if (!rest.empty()) step.remainder_accuracy = evaluate(mcfg, tuned.params, leftout.subset(rest)).accuracy;
        r.trace.push_back(step);

        r.retrain_sample_size = k;
        r.final_test_accuracy = step.full_accuracy;
        r.final_remainder_accuracy = step.remainder_accuracy;
        if (step.full_accuracy >= target) {
            r.target_reached = true;
            break;
        }
        if (k == n) break;
    }
    return r;
}

}  // namespace stressnet
