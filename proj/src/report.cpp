#include "stressnet/report.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace stressnet {

namespace fs = std::filesystem;

// --- configs ----------------------------------------------------------------

Json to_json(const PipelineConfig& c) {
    return {{"window_seconds", c.window_seconds},
            {"overlap_fraction", c.overlap_fraction},
            {"sampling_rate_hz", c.sampling_rate_hz}};
}

Json to_json(const nn::ModelConfig& c) {
    return {{"conv1_filters", c.conv1_filters}, {"conv1_kernel", c.conv1_kernel},
            {"conv2_filters", c.conv2_filters}, {"conv2_kernel", c.conv2_kernel},
            {"dense1_units", c.dense1_units},   {"dense2_units", c.dense2_units},
            {"dropout1", c.dropout1},           {"dropout2", c.dropout2},
            {"num_classes", c.num_classes},     {"input_len", c.input_len},
            {"in_channels", c.in_channels}};
}

Json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"lr", c.lr},
            {"seed", c.seed},
            {"shuffle_each_epoch", c.shuffle_each_epoch},
            {"optimizer", to_string(c.optimizer)}};
}

namespace {

template <typename T>
T required(const Json& j, const char* key, const std::string& context) {
    if (!j.is_object() || !j.contains(key)) throw Error("schema_error", context + "." + key + ": missing");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error("schema_error", context + "." + key + ": wrong type");
    }
}

}  // namespace

PipelineConfig pipeline_config_from_json(const Json& j) {
    PipelineConfig c;
    c.window_seconds = required<int>(j, "window_seconds", "pipeline");
    c.overlap_fraction = required<double>(j, "overlap_fraction", "pipeline");
    c.sampling_rate_hz = required<int>(j, "sampling_rate_hz", "pipeline");
    return c;
}

nn::ModelConfig model_config_from_json(const Json& j) {
    nn::ModelConfig c;
    c.conv1_filters = required<int>(j, "conv1_filters", "model");
    c.conv1_kernel = required<int>(j, "conv1_kernel", "model");
    c.conv2_filters = required<int>(j, "conv2_filters", "model");
    c.conv2_kernel = required<int>(j, "conv2_kernel", "model");
    c.dense1_units = required<int>(j, "dense1_units", "model");
    c.dense2_units = required<int>(j, "dense2_units", "model");
    c.dropout1 = required<double>(j, "dropout1", "model");
    c.dropout2 = required<double>(j, "dropout2", "model");
    c.num_classes = required<int>(j, "num_classes", "model");
    c.input_len = required<int>(j, "input_len", "model");
    c.in_channels = required<int>(j, "in_channels", "model");
    return c;
}

TrainConfig train_config_from_json(const Json& j) {
    TrainConfig c;
    c.epochs = required<int>(j, "epochs", "train");
    c.batch_size = required<int>(j, "batch_size", "train");
    c.lr = required<double>(j, "lr", "train");
    if (j.contains("seed")) c.seed = required<std::uint64_t>(j, "seed", "train");
    c.shuffle_each_epoch = required<bool>(j, "shuffle_each_epoch", "train");
    c.optimizer = parse_optimizer(required<std::string>(j, "optimizer", "train"));
    return c;
}

// --- reports ----------------------------------------------------------------

Json to_json(const Metrics& m) {
    Json per_class = Json::array();
    for (const auto& s : m.per_class)
        per_class.push_back({{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}});
    Json confusion = Json::array();
    for (Eigen::Index i = 0; i < m.confusion.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index k = 0; k < m.confusion.cols(); ++k) row.push_back(m.confusion(i, k));
        confusion.push_back(std::move(row));
    }
    return {{"count", m.count},
            {"accuracy", m.accuracy},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
            {"averaging", m.averaging},
            {"macro_precision", m.macro_precision},
            {"macro_recall", m.macro_recall},
            {"macro_f1", m.macro_f1},
            {"per_class", per_class},
            {"confusion", confusion}};
}

Json to_json(const TrainReport& r) {
    Json history = Json::array();
    for (const auto& h : r.history)
        history.push_back({{"epoch", h.epoch}, {"loss", h.loss}, {"train_accuracy", h.train_accuracy}});
    Json j = {{"kind", "train"}, {"history", history}, {"train", to_json(r.train)}, {"warnings", r.warnings}};
    j["test"] = r.test ? to_json(*r.test) : Json(nullptr);
    return j;
}

Json to_json(const CvReport& r) {
    Json folds = Json::array();
    for (const auto& f : r.folds)
        folds.push_back({{"fold", f.fold},
                         {"train_size", f.train_size},
                         {"validation_size", f.validation_size},
                         {"final_loss", f.final_loss},
                         {"train", to_json(f.train)},
                         {"validation", to_json(f.validation)}});
    auto ms = [](const MeanStd& v) { return Json{{"mean", v.mean}, {"stdev", v.stdev}}; };
    return {{"kind", "cv"},
            {"k", r.k},
            {"folds", folds},
            {"summary",
             {{"train_accuracy", ms(r.train_accuracy)},
              {"train_f1", ms(r.train_f1)},
              {"validation_accuracy", ms(r.validation_accuracy)},
              {"validation_f1", ms(r.validation_f1)}}}};
}

Json to_json(const LosoReport& r) {
    Json folds = Json::array();
    for (const auto& f : r.folds)
        folds.push_back({{"subject", f.left_out_subject},
                         {"train_subjects", f.train_subjects},
                         {"train_windows", f.train_windows},
                         {"test_windows", f.test_windows},
                         {"train", to_json(f.train)},
                         {"test", to_json(f.test)}});
    return {{"kind", "loso"},
            {"folds", folds},
            {"mean_train_accuracy", r.mean_train_accuracy},
            {"mean_train_f1", r.mean_train_f1},
            {"mean_test_accuracy", r.mean_test_accuracy},
            {"mean_test_f1", r.mean_test_f1}};
}

namespace {

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json to_json(const PersonalizationReport& r) {
    Json trace = Json::array();
    for (const auto& s : r.trace)
        trace.push_back(
            {{"k", s.k}, {"full_accuracy", s.full_accuracy}, {"remainder_accuracy", optional_number(s.remainder_accuracy)}});
    return {{"subject", r.subject},
            {"target", r.target},
            {"original_test_accuracy", r.original_test_accuracy},
            {"total_samples", r.total_samples},
            {"retrain_sample_size", r.retrain_sample_size},
            {"final_test_accuracy", r.final_test_accuracy},
            {"final_remainder_accuracy", optional_number(r.final_remainder_accuracy)},
            {"target_reached", r.target_reached},
            {"trace", trace},
            {"sample_order", r.sample_order}};
}

// --- model files ------------------------------------------------------------

Json model_to_json(const nn::ModelConfig& cfg, const nn::Params& params, std::uint64_t seed) {
    if (!params.matches(cfg)) throw Error("shape_error", "parameters do not match the model config");
    const auto layout = nn::tensor_layout(cfg);
    const auto views = params.flat();
    Json tensors = Json::array();
    for (std::size_t i = 0; i < layout.size(); ++i) {
        std::vector<double> data(static_cast<std::size_t>(views[i].size()));
        for (Eigen::Index k = 0; k < views[i].size(); ++k)
            data[static_cast<std::size_t>(k)] = static_cast<double>(static_cast<float>(views[i](k)));
        tensors.push_back({{"name", layout[i].name}, {"shape", layout[i].shape}, {"data", std::move(data)}});
    }
    return {{"format", kModelFormat},
            {"schema_version", kModelSchemaVersion},
            {"seed", seed},
            {"config", to_json(cfg)},
            {"tensors", tensors}};
}

void save_model(const fs::path& path, const nn::ModelConfig& cfg, const nn::Params& params, std::uint64_t seed) {
    write_json(path, model_to_json(cfg, params, seed));
}

StoredModel model_from_json(const Json& doc) {
    if (!doc.is_object()) throw Error("schema_error", "model document is not an object");
    if (required<std::string>(doc, "format", "model_file") != kModelFormat)
        throw Error("schema_error", "model_file.format: not a stressnet model");
    const int version = required<int>(doc, "schema_version", "model_file");
    if (version != kModelSchemaVersion)
        throw Error("schema_error", "model_file.schema_version: unsupported version " + std::to_string(version));

    StoredModel m;
    m.seed = required<std::uint64_t>(doc, "seed", "model_file");
    if (!doc.contains("config")) throw Error("schema_error", "model_file.config: missing");
    m.config = model_config_from_json(doc.at("config"));
    m.config.validate();
    m.params = nn::Params::zeros(m.config);

    const auto layout = nn::tensor_layout(m.config);
    if (!doc.contains("tensors") || !doc.at("tensors").is_array())
        throw Error("schema_error", "model_file.tensors: missing or not an array");
    const auto& tensors = doc.at("tensors");
    auto views = m.params.flat();
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& info = layout[i];
        const auto it = std::find_if(tensors.begin(), tensors.end(), [&](const Json& t) {
            return t.is_object() && t.contains("name") && t.at("name") == info.name;
        });
        if (it == tensors.end()) throw Error("schema_error", "tensor " + info.name + ": missing");
        const auto shape = required<std::vector<int>>(*it, "shape", "tensor " + info.name);
        if (shape != info.shape) throw Error("schema_error", "tensor " + info.name + ": shape does not match config");
        if (!it->contains("data") || !it->at("data").is_array())
            throw Error("schema_error", "tensor " + info.name + ": data missing");
        const auto& data = it->at("data");
        if (data.size() != info.size())
            throw Error("schema_error", "tensor " + info.name + ": expected " + std::to_string(info.size()) +
                                            " values, found " + std::to_string(data.size()));
        for (std::size_t k = 0; k < data.size(); ++k) {
            if (!data[k].is_number()) throw Error("schema_error", "tensor " + info.name + ": non-numeric value");
            const double v = data[k].get<double>();
            if (!std::isfinite(v)) throw Error("schema_error", "tensor " + info.name + ": non-finite value");
            views[i](static_cast<Eigen::Index>(k)) = v;
        }
    }
    if (tensors.size() != layout.size())
        throw Error("schema_error", "model_file.tensors: expected " + std::to_string(layout.size()) + " tensors");
    return m;
}

StoredModel load_model(const fs::path& path) {
    return model_from_json(read_json(path));
}

// --- files ------------------------------------------------------------------

std::string format_number(double v) { return Json(v).dump(); }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io_error", "cannot write " + path.string());
    out << text;
    if (!out) throw Error("io_error", "write failed for " + path.string());
}

void write_json(const fs::path& path, const Json& doc) { write_text(path, doc.dump(2) + "\n"); }

Json read_json(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io_error", "cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("parse_error", path.string() + ": " + e.what());
    }
}

// --- CSV --------------------------------------------------------------------

std::string history_csv(const TrainReport& r) {
    std::ostringstream os;
    os << "epoch,loss,train_acc\n";
    for (const auto& h : r.history)
        os << h.epoch << ',' << format_number(h.loss) << ',' << format_number(h.train_accuracy) << '\n';
    return os.str();
}

std::string cv_folds_csv(const CvReport& r) {
    std::ostringstream os;
    os << "fold,train_size,validation_size,train_acc,train_f1,validation_acc,validation_f1\n";
    for (const auto& f : r.folds)
        os << f.fold << ',' << f.train_size << ',' << f.validation_size << ',' << format_number(f.train.accuracy)
           << ',' << format_number(f.train.f1) << ',' << format_number(f.validation.accuracy) << ','
           << format_number(f.validation.f1) << '\n';
    return os.str();
}

std::string loso_csv(const LosoReport& r) {
    std::ostringstream os;
    os << "subject,train_windows,test_windows,train_acc,train_f1,test_acc,test_f1\n";
    for (const auto& f : r.folds)
        os << f.left_out_subject << ',' << f.train_windows << ',' << f.test_windows << ','
           << format_number(f.train.accuracy) << ',' << format_number(f.train.f1) << ','
           << format_number(f.test.accuracy) << ',' << format_number(f.test.f1) << '\n';
    return os.str();
}

std::string personalization_csv(std::span<const PersonalizationReport> rs) {
    std::ostringstream os;
    os << "subject,original_acc,total_samples,retrain_size,final_acc\n";
    for (const auto& r : rs)
        os << r.subject << ',' << format_number(r.original_test_accuracy) << ',' << r.total_samples << ','
           << r.retrain_sample_size << ',' << format_number(r.final_test_accuracy) << '\n';
    return os.str();
}

std::string personalization_trace_csv(std::span<const PersonalizationReport> rs) {
    std::ostringstream os;
    os << "subject,k,full_acc,remainder_acc\n";
    for (const auto& r : rs)
        for (const auto& s : r.trace)
            os << r.subject << ',' << s.k << ',' << format_number(s.full_accuracy) << ','
               << (s.remainder_accuracy ? format_number(*s.remainder_accuracy) : std::string()) << '\n';
    return os.str();
}

// --- plot data --------------------------------------------------------------

PlotKind parse_plot_kind(const std::string& text) {
    if (text == "loso_accuracy") return PlotKind::LosoAccuracy;
    if (text == "loso_f1") return PlotKind::LosoF1;
    if (text == "history") return PlotKind::History;
    throw Error("config_error", "plot kind must be loso_accuracy, loso_f1 or history, got '" + text + "'");
}

std::string plot_data_csv(const Json& report, PlotKind kind) {
    const std::string report_kind = report.is_object() && report.contains("kind") && report["kind"].is_string()
                                        ? report["kind"].get<std::string>()
                                        : std::string();
    std::ostringstream os;
    if (kind == PlotKind::History) {
        if (report_kind != "train") throw Error("kind_mismatch", "history plot needs a train report, got '" + report_kind + "'");
        os << "epoch,loss,train_acc\n";
        for (const auto& h : report.at("history"))
            os << h.at("epoch").dump() << ',' << h.at("loss").dump() << ',' << h.at("train_accuracy").dump() << '\n';
        return os.str();
    }

    // personalize reports embed their LOSO report
    const Json* loso = nullptr;
    if (report_kind == "loso") loso = &report;
    else if (report_kind == "personalize" && report.contains("loso")) loso = &report.at("loso");
    if (!loso) throw Error("kind_mismatch", "LOSO plot needs a loso report, got '" + report_kind + "'");

    const char* metric = kind == PlotKind::LosoAccuracy ? "accuracy" : "f1";
    std::vector<const Json*> folds;
    for (const auto& f : loso->at("folds")) folds.push_back(&f);
    std::stable_sort(folds.begin(), folds.end(), [](const Json* a, const Json* b) {
        return subject_less(a->at("subject").get<std::string>(), b->at("subject").get<std::string>());
    });
    os << "subject,train,test\n";
    for (const Json* f : folds)
        os << f->at("subject").get<std::string>() << ',' << f->at("train").at(metric).dump() << ','
           << f->at("test").at(metric).dump() << '\n';
    return os.str();
}

void emit_plot_data(const Json& report, PlotKind kind, const fs::path& path) {
    write_text(path, plot_data_csv(report, kind));
}

}  // namespace stressnet
