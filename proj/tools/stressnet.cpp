// stressnet: EDA stress classification experiments from the command line.
//
//   stressnet synth --out-dir data --seed 7
//   stressnet train --data-dir data --out-dir runs --task bi
//   stressnet cv --config exp.json --train.epochs 50 --jobs 4
//   stressnet plot-data --report runs/loso-.../report.json --kind loso_f1
//
// Any configuration value can be overridden with `--<section>.<key> value`.

#include "CLI11.hpp"

#include "stressnet/run.hpp"

#include <iostream>

namespace {

struct Flags {
    std::string config;
    std::string data_dir;
    std::string out_dir;
    std::string task;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;

    std::optional<int> n_subjects;
    std::vector<std::string> shifted;
    std::string model;
    std::string subset;
    std::optional<int> folds;
    std::vector<std::string> subjects;
    std::string report;
    std::string kind;
    std::string plot_out;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON config file or a previous run's manifest.json");
    cmd->add_option("--data-dir", f.data_dir, "Directory of S<id>.csv subject files");
    cmd->add_option("--out-dir", f.out_dir, "Output directory");
    cmd->add_option("--task", f.task, "bi or tri")->check(CLI::IsMember({"bi", "tri"}));
    cmd->add_option("--seed", f.seed, "Run seed");
    cmd->add_option("--jobs", f.jobs, "Worker threads for folds");
}

/// Pulls `--section.key value` / `--section.key=value` pairs out of argv.
std::vector<std::pair<std::string, std::string>> take_overrides(std::vector<std::string>& args) {
    std::vector<std::pair<std::string, std::string>> overrides;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const auto& a = args[i];
        const bool dotted = a.rfind("--", 0) == 0 && a.find('.') != std::string::npos &&
                            a.find('.') < a.find('=');
        if (!dotted) {
            rest.push_back(a);
            continue;
        }
        const auto eq = a.find('=');
        if (eq != std::string::npos) {
            overrides.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
        } else {
            if (i + 1 >= args.size()) throw stressnet::Error("usage", "missing value for " + a);
            overrides.emplace_back(a.substr(2), args[++i]);
        }
    }
    args = std::move(rest);
    return overrides;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EDA stress classification with a 1D convolutional network"};
    app.require_subcommand(1);
    app.set_version_flag("--version", stressnet::kToolVersion);
    Flags f;

    auto* synth = app.add_subcommand("synth", "Write synthetic subject CSVs");
    add_common(synth, f);
    synth->add_option("--n-subjects", f.n_subjects, "Number of subjects");
    synth->add_option("--shifted", f.shifted, "Subject tags generated with the shifted profile")->delimiter(',');

    auto* train = app.add_subcommand("train", "Train on a stratified split and evaluate");
    add_common(train, f);

    auto* eval = app.add_subcommand("eval", "Evaluate a saved model");
    add_common(eval, f);
    eval->add_option("--model", f.model, "Model file");
    eval->add_option("--subset", f.subset, "all, train or test")->check(CLI::IsMember({"all", "train", "test"}));

    auto* cv = app.add_subcommand("cv", "Stratified k-fold cross-validation");
    add_common(cv, f);
    cv->add_option("--folds", f.folds, "Number of folds");

    auto* loso = app.add_subcommand("loso", "Leave-one-subject-out evaluation");
    add_common(loso, f);

    auto* pers = app.add_subcommand("personalize", "LOSO followed by incremental fine-tuning");
    add_common(pers, f);
    pers->add_option("--subjects", f.subjects, "Subjects to personalize (default: all below training accuracy)")
        ->delimiter(',');

    auto* plot = app.add_subcommand("plot-data", "Extract plot-ready CSV from a report");
    add_common(plot, f);
    plot->add_option("--report", f.report, "Report JSON")->required();
    plot->add_option("--kind", f.kind, "loso_accuracy, loso_f1 or history")->required();
    plot->add_option("--out", f.plot_out, "Output CSV (default: next to the report)");

    std::vector<std::string> args(argv + 1, argv + argc);
    std::vector<std::pair<std::string, std::string>> overrides;
    try {
        overrides = take_overrides(args);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error[usage]: " << e.what() << "\n\n" << app.help();
        return 2;
    } catch (const stressnet::Error& e) {
        std::cerr << "error[" << e.code() << "]: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        const CLI::App* cmd = app.get_subcommands().front();
        stressnet::Json doc = stressnet::default_config_json();
        if (!f.config.empty()) stressnet::merge_config(doc, stressnet::load_config_document(f.config));
        doc["command"] = cmd->get_name();
        if (!f.data_dir.empty()) doc["data_dir"] = f.data_dir;
        if (!f.out_dir.empty()) doc["output_dir"] = f.out_dir;
        if (!f.task.empty()) {
            doc["task"] = f.task;
            doc["model"]["num_classes"] = nullptr;
        }
        if (f.seed) doc["seed"] = *f.seed;
        if (f.jobs) doc["jobs"] = *f.jobs;
        if (f.n_subjects) doc["synth"]["n_subjects"] = *f.n_subjects;
        if (!f.shifted.empty()) doc["synth"]["shifted_subjects"] = f.shifted;
        if (!f.model.empty()) doc["eval"]["model_path"] = f.model;
        if (!f.subset.empty()) doc["eval"]["subset"] = f.subset;
        if (f.folds) doc["cv"]["folds"] = *f.folds;
        if (!f.subjects.empty()) doc["personalize"]["subjects"] = f.subjects;
        if (!f.report.empty()) doc["plot"]["report"] = f.report;
        if (!f.kind.empty()) doc["plot"]["kind"] = f.kind;
        if (!f.plot_out.empty()) doc["plot"]["out"] = f.plot_out;
        for (const auto& [key, value] : overrides) stressnet::apply_override(doc, key, value);

        const auto cfg = stressnet::run_config_from_json(doc);
        const auto where = stressnet::run_command(cfg);
        std::cout << where.string() << "\n";
        return 0;
    } catch (const stressnet::Error& e) {
        std::cerr << "error[" << e.code() << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error[internal]: " << e.what() << "\n";
        return 1;
    }
}
