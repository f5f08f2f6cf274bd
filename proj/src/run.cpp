#include "stressnet/run.hpp"

#include <chrono>
#include <ctime>
#include <iomanip>
#include <sstream>

namespace stressnet {

namespace fs = std::filesystem;

// --- configuration document -------------------------------------------------

Json default_config_json() {
    RunConfig d;
    Json model = to_json(d.model);
    model["num_classes"] = nullptr;  // derived from task
    model["input_len"] = nullptr;    // derived from the window length
    Json train = to_json(d.train);
    train.erase("seed");  // the run seed drives training
    return {
        {"data_dir", d.data_dir.string()},
        {"output_dir", d.output_dir.string()},
        {"task", to_string(d.task)},
        {"seed", d.seed},
        {"jobs", d.jobs},
        {"pipeline", to_json(d.pipeline)},
        {"model", model},
        {"train", train},
        {"split", {{"train_fraction", d.train_fraction}}},
        {"cv", {{"folds", d.folds}}},
        {"personalize",
         {{"epochs", d.personalize.epochs},
          {"stride", d.personalize.stride},
          {"from_scratch", d.personalize.from_scratch},
          {"subjects", Json::array()}}},
        {"eval", {{"model_path", ""}, {"subset", d.eval_subset}}},
        {"synth",
         {{"n_subjects", d.synth.n_subjects},
          {"shifted_subjects", Json::array()},
          {"profile", d.synth.profile.to_map()}}},
        {"plot", {{"report", ""}, {"kind", d.plot_kind}, {"out", ""}}},
    };
}

namespace {

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> items;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) items.push_back(item);
    return items;
}

Json parse_scalar_like(const Json& existing, const std::string& key, const std::string& value) {
    auto fail = [&] { return Error("config_error", "invalid value '" + value + "' for " + key); };
    try {
        std::size_t used = 0;
        switch (existing.type()) {
            case Json::value_t::boolean:
                if (value == "true" || value == "1") return true;
                if (value == "false" || value == "0") return false;
                throw fail();
            case Json::value_t::number_unsigned: {
                if (!value.empty() && value[0] == '-') throw fail();
                const auto v = std::stoull(value, &used);
                if (used != value.size()) throw fail();
                return v;
            }
            case Json::value_t::number_integer: {
                const auto v = std::stoll(value, &used);
                if (used != value.size()) throw fail();
                return v;
            }
            case Json::value_t::number_float: {
                const double v = std::stod(value, &used);
                if (used != value.size()) throw fail();
                return v;
            }
            case Json::value_t::array: return split_list(value);
            case Json::value_t::null: {
                const auto v = std::stoll(value, &used);
                if (used != value.size()) throw fail();
                return v;
            }
            default: return value;
        }
    } catch (const std::logic_error&) {
        throw fail();
    }
}

}  // namespace

void apply_override(Json& doc, const std::string& dotted_key, const std::string& value) {
    Json* node = &doc;
    std::stringstream ss(dotted_key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw Error("config_error", "empty override key");
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (!node->is_object() || !node->contains(parts[i]))
            throw Error("config_error", "unknown config key '" + dotted_key + "'");
        node = &(*node)[parts[i]];
    }
    if (node->is_object()) throw Error("config_error", "'" + dotted_key + "' is a section, not a value");
    *node = parse_scalar_like(*node, dotted_key, value);
}

void merge_config(Json& base, const Json& patch) {
    if (!patch.is_object()) throw Error("config_error", "config document must be an object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object())
            merge_config(base[it.key()], it.value());
        else
            base[it.key()] = it.value();
    }
}

Json load_config_document(const fs::path& path) {
    Json doc = read_json(path);
    if (doc.is_object() && doc.contains("tool") && doc.contains("config")) return doc.at("config");
    return doc;
}

namespace {

template <typename T>
T get(const Json& doc, const std::string& section, const std::string& key) {
    const Json* node = &doc;
    if (!section.empty()) {
        if (!doc.contains(section)) throw Error("config_error", "missing config section '" + section + "'");
        node = &doc.at(section);
    }
    const std::string name = section.empty() ? key : section + "." + key;
    if (!node->contains(key)) throw Error("config_error", "missing config key '" + name + "'");
    try {
        return node->at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error("config_error", "config key '" + name + "' has the wrong type");
    }
}

}  // namespace

RunConfig run_config_from_json(const Json& doc) {
    if (!doc.is_object()) throw Error("config_error", "config document must be an object");
    RunConfig c;
    if (doc.contains("command")) c.command = get<std::string>(doc, "", "command");
    c.data_dir = get<std::string>(doc, "", "data_dir");
    c.output_dir = get<std::string>(doc, "", "output_dir");
    c.task = parse_task(get<std::string>(doc, "", "task"));
    c.seed = get<std::uint64_t>(doc, "", "seed");
    c.jobs = get<std::size_t>(doc, "", "jobs");
    try {
        c.pipeline = pipeline_config_from_json(doc.at("pipeline"));
    } catch (const nlohmann::json::exception&) {
        throw Error("config_error", "missing config section 'pipeline'");
    } catch (const Error& e) {
        throw Error("config_error", e.what());
    }

    Json model = doc.contains("model") ? doc.at("model") : Json::object();
    const int derived_classes = num_classes(c.task);
    const int derived_len = c.pipeline.window_len();
    if (!model.contains("num_classes") || model["num_classes"].is_null()) model["num_classes"] = derived_classes;
    if (!model.contains("input_len") || model["input_len"].is_null()) model["input_len"] = derived_len;
    try {
        c.model = model_config_from_json(model);
        c.train = train_config_from_json(doc.at("train"));
    } catch (const nlohmann::json::exception&) {
        throw Error("config_error", "missing config section 'train'");
    } catch (const Error& e) {
        throw Error("config_error", e.what());
    }
    if (c.model.num_classes != derived_classes)
        throw Error("config_error", "model.num_classes " + std::to_string(c.model.num_classes) +
                                        " inconsistent with task '" + to_string(c.task) + "'");
    if (c.model.input_len != derived_len)
        throw Error("config_error", "model.input_len " + std::to_string(c.model.input_len) +
                                        " differs from the pipeline window length " + std::to_string(derived_len));
    c.train.seed = c.seed;

    c.train_fraction = get<double>(doc, "split", "train_fraction");
    c.folds = get<int>(doc, "cv", "folds");
    c.personalize.epochs = get<int>(doc, "personalize", "epochs");
    c.personalize.stride = get<int>(doc, "personalize", "stride");
    c.personalize.from_scratch = get<bool>(doc, "personalize", "from_scratch");
    c.personalize_subjects = get<std::vector<std::string>>(doc, "personalize", "subjects");
    c.model_path = get<std::string>(doc, "eval", "model_path");
    c.eval_subset = get<std::string>(doc, "eval", "subset");
    c.synth.n_subjects = get<int>(doc, "synth", "n_subjects");
    c.synth.shifted_subjects = get<std::vector<std::string>>(doc, "synth", "shifted_subjects");
    c.synth.profile = SynthProfile::from_map(doc.at("synth").at("profile").get<std::map<std::string, double>>());
    c.report_path = get<std::string>(doc, "plot", "report");
    c.plot_kind = get<std::string>(doc, "plot", "kind");
    c.plot_out = get<std::string>(doc, "plot", "out");
    c.validate();
    return c;
}

void RunConfig::validate() const {
    pipeline.validate();
    model.validate();
    train.validate();
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw Error("config_error", "split.train_fraction must lie in (0, 1)");
    if (folds < 2) throw Error("config_error", "cv.folds must be >= 2");
    if (personalize.epochs < 1 || personalize.stride < 1)
        throw Error("config_error", "personalize.epochs and personalize.stride must be >= 1");
    if (eval_subset != "all" && eval_subset != "train" && eval_subset != "test")
        throw Error("config_error", "eval.subset must be all, train or test");
    if (synth.n_subjects < 1) throw Error("config_error", "synth.n_subjects must be >= 1");
    if (jobs < 1) throw Error("config_error", "jobs must be >= 1");
}

Json to_json(const RunConfig& c) {
    Json train = to_json(c.train);
    train.erase("seed");
    return {
        {"command", c.command},
        {"data_dir", c.data_dir.string()},
        {"output_dir", c.output_dir.string()},
        {"task", to_string(c.task)},
        {"seed", c.seed},
        {"jobs", c.jobs},
        {"pipeline", to_json(c.pipeline)},
        {"model", to_json(c.model)},
        {"train", train},
        {"split", {{"train_fraction", c.train_fraction}}},
        {"cv", {{"folds", c.folds}}},
        {"personalize",
         {{"epochs", c.personalize.epochs},
          {"stride", c.personalize.stride},
          {"from_scratch", c.personalize.from_scratch},
          {"subjects", c.personalize_subjects}}},
        {"eval", {{"model_path", c.model_path.string()}, {"subset", c.eval_subset}}},
        {"synth",
         {{"n_subjects", c.synth.n_subjects},
          {"shifted_subjects", c.synth.shifted_subjects},
          {"profile", c.synth.profile.to_map()}}},
        {"plot", {{"report", c.report_path.string()}, {"kind", c.plot_kind}, {"out", c.plot_out.string()}}},
    };
}

Json corpus_summary(const WindowedDataset& ds) {
    Json subjects = Json::object();
    for (const auto& tag : ds.subjects()) {
        const auto counts = ds.for_subject(tag).class_counts();
        subjects[tag] = counts;
    }
    return {{"num_classes", ds.num_classes},
            {"total_windows", ds.size()},
            {"class_counts", ds.class_counts()},
            {"subjects", subjects}};
}

// --- commands ---------------------------------------------------------------

namespace {

std::string utc_stamp(std::chrono::system_clock::time_point t, const char* format) {
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, format);
    return os.str();
}

class Run {
public:
    explicit Run(const RunConfig& cfg) : cfg_(cfg), started_(std::chrono::system_clock::now()) {}

    /// Creates <output_dir>/<command>-<UTC timestamp>[-n].
    const fs::path& make_dir() {
        fs::create_directories(cfg_.output_dir);
        const std::string base = cfg_.command + "-" + utc_stamp(started_, "%Y%m%dT%H%M%SZ");
        fs::path dir = cfg_.output_dir / base;
        for (int n = 2; fs::exists(dir); ++n) dir = cfg_.output_dir / (base + "-" + std::to_string(n));
        fs::create_directories(dir);
        dir_ = dir;
        return dir_;
    }

    void write_json(const std::string& name, const Json& doc) {
        stressnet::write_json(dir_ / name, doc);
        outputs_.push_back(name);
    }
    void write_text(const std::string& name, const std::string& text) {
        stressnet::write_text(dir_ / name, text);
        outputs_.push_back(name);
    }

    void finish(const Json& corpus) {
        const double wall = std::chrono::duration<double>(std::chrono::system_clock::now() - started_).count();
        Json manifest = {{"tool", "stressnet"},
                         {"version", kToolVersion},
                         {"command", cfg_.command},
                         {"config", to_json(cfg_)},
                         {"corpus", corpus},
                         {"outputs", outputs_},
                         {"started_at", utc_stamp(started_, "%Y-%m-%dT%H:%M:%SZ")},
                         {"wall_seconds", wall}};
        stressnet::write_json(dir_ / "manifest.json", manifest);
    }

    const fs::path& dir() const { return dir_; }

private:
    const RunConfig& cfg_;
    std::chrono::system_clock::time_point started_;
    fs::path dir_;
    std::vector<std::string> outputs_;
};

WindowedDataset load_task_corpus(const RunConfig& cfg) {
    return assemble_task(build_corpus(load_corpus(cfg.data_dir), cfg.pipeline), cfg.task);
}

std::string metrics_csv(const std::vector<std::pair<std::string, const Metrics*>>& rows) {
    std::ostringstream os;
    os << "set,count,accuracy,precision,recall,f1,macro_precision,macro_recall,macro_f1\n";
    for (const auto& [name, m] : rows)
        os << name << ',' << m->count << ',' << format_number(m->accuracy) << ',' << format_number(m->precision)
           << ',' << format_number(m->recall) << ',' << format_number(m->f1) << ','
           << format_number(m->macro_precision) << ',' << format_number(m->macro_recall) << ','
           << format_number(m->macro_f1) << '\n';
    return os.str();
}

fs::path run_synth(const RunConfig& cfg) {
    fs::create_directories(cfg.output_dir);
    const auto tags = default_subject_tags(static_cast<std::size_t>(cfg.synth.n_subjects));
    for (const auto& shifted : cfg.synth.shifted_subjects)
        if (std::find(tags.begin(), tags.end(), shifted) == tags.end())
            throw Error("unknown_subject", "shifted subject '" + shifted + "' is not among the generated tags");
    Json files = Json::array();
    for (std::size_t i = 0; i < tags.size(); ++i) {
        const bool shifted = std::find(cfg.synth.shifted_subjects.begin(), cfg.synth.shifted_subjects.end(),
                                       tags[i]) != cfg.synth.shifted_subjects.end();
        const auto profile = shifted ? shifted_profile(cfg.synth.profile) : cfg.synth.profile;
        const auto rec = synth_subject(cfg.seed * 1000003ULL + i, profile, tags[i]);
        save_recording(rec, cfg.output_dir / (tags[i] + ".csv"));
        files.push_back(tags[i] + ".csv");
    }
    Json manifest = {{"tool", "stressnet"},
                     {"version", kToolVersion},
                     {"command", "synth"},
                     {"config", to_json(cfg)},
                     {"outputs", files},
                     {"started_at", utc_stamp(std::chrono::system_clock::now(), "%Y-%m-%dT%H:%M:%SZ")}};
    write_json(cfg.output_dir / "synth_manifest.json", manifest);
    return cfg.output_dir;
}

fs::path run_train(const RunConfig& cfg) {
    Run run(cfg);
    const auto corpus = load_task_corpus(cfg);
    const auto split = make_split(corpus, cfg.train_fraction, cfg.seed);
    auto report = train(split.train, cfg.train, cfg.model);
    report.test = evaluate(cfg.model, report.params, split.test);

    run.make_dir();
    Json doc = to_json(report);
    doc["task"] = to_string(cfg.task);
    doc["train_size"] = split.train.size();
    doc["test_size"] = split.test.size();
    run.write_json("report.json", doc);
    run.write_text("history.csv", history_csv(report));
    run.write_text("metrics.csv", metrics_csv({{"train", &report.train}, {"test", &*report.test}}));
    save_model(run.dir() / "model.json", cfg.model, report.params, cfg.seed);
    run.finish(corpus_summary(corpus));
    return run.dir();
}

fs::path run_eval(const RunConfig& cfg) {
    if (cfg.model_path.empty()) throw Error("config_error", "eval needs a model path (--model)");
    Run run(cfg);
    const auto stored = load_model(cfg.model_path);
    if (stored.config.num_classes != cfg.model.num_classes)
        throw Error("config_error", "model has " + std::to_string(stored.config.num_classes) +
                                        " classes, task '" + to_string(cfg.task) + "' needs " +
                                        std::to_string(cfg.model.num_classes));
    const auto corpus = load_task_corpus(cfg);
    WindowedDataset target = corpus;
    if (cfg.eval_subset != "all") {
        auto split = make_split(corpus, cfg.train_fraction, cfg.seed);
        target = cfg.eval_subset == "train" ? std::move(split.train) : std::move(split.test);
    }
    const auto metrics = evaluate(stored.config, stored.params, target);

    run.make_dir();
    run.write_json("report.json", {{"kind", "eval"},
                                   {"task", to_string(cfg.task)},
                                   {"subset", cfg.eval_subset},
                                   {"metrics", to_json(metrics)}});
    run.write_text("metrics.csv", metrics_csv({{cfg.eval_subset, &metrics}}));
    run.finish(corpus_summary(corpus));
    return run.dir();
}

fs::path run_cv(const RunConfig& cfg) {
    Run run(cfg);
    const auto corpus = load_task_corpus(cfg);
    const auto report = cross_validate(corpus, cfg.folds, cfg.train, cfg.model, cfg.jobs);
    run.make_dir();
    Json doc = to_json(report);
    doc["task"] = to_string(cfg.task);
    run.write_json("report.json", doc);
    run.write_text("folds.csv", cv_folds_csv(report));
    run.finish(corpus_summary(corpus));
    return run.dir();
}

fs::path run_loso(const RunConfig& cfg) {
    Run run(cfg);
    const auto corpus = load_task_corpus(cfg);
    const auto report = loso_all(corpus, cfg.train, cfg.model, cfg.jobs);
    run.make_dir();
    Json doc = to_json(report);
    doc["task"] = to_string(cfg.task);
    run.write_json("report.json", doc);
    run.write_text("loso.csv", loso_csv(report));
    run.finish(corpus_summary(corpus));
    return run.dir();
}

fs::path run_personalize(const RunConfig& cfg) {
    Run run(cfg);
    const auto corpus = load_task_corpus(cfg);
    const auto loso = loso_all(corpus, cfg.train, cfg.model, cfg.jobs);

    std::vector<const LosoFoldReport*> chosen;
    for (const auto& fold : loso.folds) {
        const bool listed = std::find(cfg.personalize_subjects.begin(), cfg.personalize_subjects.end(),
                                      fold.left_out_subject) != cfg.personalize_subjects.end();
        if (cfg.personalize_subjects.empty() ? fold.test.accuracy < fold.train.accuracy : listed)
            chosen.push_back(&fold);
    }
    for (const auto& s : cfg.personalize_subjects) {
        const bool known = std::any_of(loso.folds.begin(), loso.folds.end(),
                                       [&](const LosoFoldReport& f) { return f.left_out_subject == s; });
        if (!known) throw Error("unknown_subject", "subject '" + s + "' not in corpus");
    }

    std::vector<PersonalizationReport> results(chosen.size());
    parallel_for(chosen.size(), cfg.jobs, [&](std::size_t i) {
        const auto& fold = *chosen[i];
        results[i] = personalize(cfg.model, fold.params, corpus.for_subject(fold.left_out_subject),
                                 fold.train.accuracy, cfg.train, cfg.personalize);
    });

    run.make_dir();
    Json subjects = Json::array();
    for (const auto& r : results) subjects.push_back(to_json(r));
    Json loso_doc = to_json(loso);
    loso_doc["task"] = to_string(cfg.task);
    run.write_json("report.json", {{"kind", "personalize"},
                                   {"task", to_string(cfg.task)},
                                   {"loso", loso_doc},
                                   {"subjects", subjects}});
    run.write_text("loso.csv", loso_csv(loso));
    run.write_text("personalization.csv", personalization_csv(results));
    run.write_text("personalization_trace.csv", personalization_trace_csv(results));
    run.finish(corpus_summary(corpus));
    return run.dir();
}

fs::path run_plot_data(const RunConfig& cfg) {
    if (cfg.report_path.empty()) throw Error("config_error", "plot-data needs a report path (--report)");
    const auto kind = parse_plot_kind(cfg.plot_kind);
    const auto report = read_json(cfg.report_path);
    fs::path out = cfg.plot_out;
    if (out.empty()) out = cfg.report_path.parent_path() / (cfg.plot_kind + ".csv");
    emit_plot_data(report, kind, out);
    return out;
}

}  // namespace

fs::path run_command(const RunConfig& cfg) {
    if (cfg.command == "synth") return run_synth(cfg);
    if (cfg.command == "train") return run_train(cfg);
    if (cfg.command == "eval") return run_eval(cfg);
    if (cfg.command == "cv") return run_cv(cfg);
    if (cfg.command == "loso") return run_loso(cfg);
    if (cfg.command == "personalize") return run_personalize(cfg);
    if (cfg.command == "plot-data") return run_plot_data(cfg);
    throw Error("config_error", "unknown command '" + cfg.command + "'");
}

}  // namespace stressnet
