#include "stressnet/signal.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace stressnet {

namespace fs = std::filesystem;

// --- config / dataset -------------------------------------------------------

int PipelineConfig::hop() const {
    return static_cast<int>(std::floor(window_len() * (1.0 - overlap_fraction)));
}

void PipelineConfig::validate() const {
    if (sampling_rate_hz != kSamplingRateHz)
        throw Error("config_error", "sampling rate must be 4 Hz, got " + std::to_string(sampling_rate_hz));
    if (window_seconds < 1) throw Error("config_error", "window_seconds must be >= 1");
    if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0))
        throw Error("config_error", "overlap_fraction must lie in [0, 1)");
    if (hop() < 1) throw Error("config_error", "derived hop is smaller than one sample");
}

std::vector<std::size_t> WindowedDataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
    for (const auto& w : windows) ++counts.at(static_cast<std::size_t>(w.class_label));
    return counts;
}

std::vector<std::string> WindowedDataset::subjects() const {
    std::vector<std::string> tags;
    for (const auto& w : windows)
        if (std::find(tags.begin(), tags.end(), w.subject_id) == tags.end()) tags.push_back(w.subject_id);
    std::sort(tags.begin(), tags.end(), subject_less);
    return tags;
}

WindowedDataset WindowedDataset::subset(const std::vector<std::size_t>& indices) const {
    WindowedDataset out;
    out.num_classes = num_classes;
    out.windows.reserve(indices.size());
    for (std::size_t i : indices) out.windows.push_back(windows.at(i));
    return out;
}

WindowedDataset WindowedDataset::for_subject(const std::string& subject) const {
    WindowedDataset out;
    out.num_classes = num_classes;
    for (const auto& w : windows)
        if (w.subject_id == subject) out.windows.push_back(w);
    return out;
}

WindowedDataset WindowedDataset::excluding_subject(const std::string& subject) const {
    WindowedDataset out;
    out.num_classes = num_classes;
    for (const auto& w : windows)
        if (w.subject_id != subject) out.windows.push_back(w);
    return out;
}

void WindowedDataset::append(const WindowedDataset& other) {
    windows.insert(windows.end(), other.windows.begin(), other.windows.end());
}

bool subject_less(const std::string& a, const std::string& b) {
    std::size_t i = 0, j = 0;
    auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
    while (i < a.size() && j < b.size()) {
        if (is_digit(a[i]) && is_digit(b[j])) {
            std::size_t i_end = i, j_end = j;
            while (i_end < a.size() && is_digit(a[i_end])) ++i_end;
            while (j_end < b.size() && is_digit(b[j_end])) ++j_end;
            // strip leading zeros then compare by length, then lexically
            std::size_t i0 = i, j0 = j;
            while (i0 + 1 < i_end && a[i0] == '0') ++i0;
            while (j0 + 1 < j_end && b[j0] == '0') ++j0;
            const auto da = a.substr(i0, i_end - i0), db = b.substr(j0, j_end - j0);
            if (da.size() != db.size()) return da.size() < db.size();
            if (da != db) return da < db;
            i = i_end;
            j = j_end;
        } else {
            if (a[i] != b[j]) return a[i] < b[j];
            ++i;
            ++j;
        }
    }
    if ((a.size() - i) != (b.size() - j)) return (a.size() - i) < (b.size() - j);
    return a < b;
}

// --- CSV I/O ----------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

[[noreturn]] void parse_fail(const fs::path& path, std::size_t line, const std::string& what) {
    throw Error("parse_error", path.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

EdaRecording load_recording(const fs::path& path, const std::string& subject_id) {
    std::ifstream in(path);
    if (!in) throw Error("io_error", "cannot open " + path.string());

    EdaRecording rec;
    rec.subject_id = subject_id;

    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto row = trim(line);
        if (row.empty()) continue;
        if (!header_seen) {
            if (row != "eda_uS,label") parse_fail(path, line_no, "expected header 'eda_uS,label'");
            header_seen = true;
            continue;
        }
        const auto comma = row.find(',');
        if (comma == std::string_view::npos) parse_fail(path, line_no, "expected two columns");
        const auto eda_text = trim(row.substr(0, comma));
        const auto label_text = trim(row.substr(comma + 1));

        double eda = 0.0;
        auto [p1, ec1] = std::from_chars(eda_text.data(), eda_text.data() + eda_text.size(), eda);
        if (ec1 != std::errc() || p1 != eda_text.data() + eda_text.size() || eda_text.empty())
            parse_fail(path, line_no, "malformed eda value '" + std::string(eda_text) + "'");
        if (!std::isfinite(eda)) parse_fail(path, line_no, "non-finite eda value");

        int label = 0;
        auto [p2, ec2] = std::from_chars(label_text.data(), label_text.data() + label_text.size(), label);
        if (ec2 != std::errc() || p2 != label_text.data() + label_text.size() || label_text.empty())
            parse_fail(path, line_no, "malformed label '" + std::string(label_text) + "'");
        if (label < 0 || label > 7) parse_fail(path, line_no, "label outside 0-7");

        rec.samples.push_back(eda);
        rec.condition_codes.push_back(label);
    }
    if (!header_seen) throw Error("parse_error", path.string() + ": empty file");
    if (rec.samples.empty()) throw Error("parse_error", path.string() + ": no data rows");
    return rec;
}

void save_recording(const EdaRecording& rec, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io_error", "cannot write " + path.string());
    out << "eda_uS,label\n";
    char buf[64];
    for (std::size_t i = 0; i < rec.size(); ++i) {
        const int n = std::snprintf(buf, sizeof buf, "%.6f,%d\n", rec.samples[i], rec.condition_codes[i]);
        out.write(buf, n);
    }
    if (!out) throw Error("io_error", "write failed for " + path.string());
}

std::vector<EdaRecording> load_corpus(const fs::path& data_dir) {
    if (!fs::is_directory(data_dir)) throw Error("missing_data", "data directory not found: " + data_dir.string());
    std::vector<std::pair<std::string, fs::path>> files;
    for (const auto& entry : fs::directory_iterator(data_dir)) {
        if (!entry.is_regular_file()) continue;
        const auto name = entry.path().filename().string();
        if (name.size() > 5 && name[0] == 'S' && entry.path().extension() == ".csv")
            files.emplace_back(entry.path().stem().string(), entry.path());
    }
    if (files.empty()) throw Error("missing_data", "no S<id>.csv files in " + data_dir.string());
    std::sort(files.begin(), files.end(), [](const auto& a, const auto& b) { return subject_less(a.first, b.first); });

    std::vector<EdaRecording> out;
    out.reserve(files.size());
    for (const auto& [tag, path] : files) out.push_back(load_recording(path, tag));
    return out;
}

// --- normalization and segmentation -----------------------------------------

EdaRecording min_max_normalize(const EdaRecording& rec) {
    if (rec.samples.empty()) throw Error("degenerate_signal", rec.subject_id + ": empty recording");
    const auto [lo_it, hi_it] = std::minmax_element(rec.samples.begin(), rec.samples.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) throw Error("degenerate_signal", rec.subject_id + ": constant signal cannot be normalized");

    EdaRecording out = rec;
    const double range = hi - lo;
    for (double& x : out.samples) x = (x - lo) / range;
    return out;
}

int class_for_condition(int code) {
    switch (code) {
        case kBaseline: return kClassBaseline;
        case kStress: return kClassStress;
        case kAmusement: return kClassAmusement;
        default: return -1;
    }
}

std::size_t windows_in_run(std::size_t run_length, const PipelineConfig& cfg) {
    const auto len = static_cast<std::size_t>(cfg.window_len());
    const auto hop = static_cast<std::size_t>(cfg.hop());
    if (run_length < len) return 0;
    return (run_length - len) / hop + 1;
}

WindowedDataset segment(const EdaRecording& rec, const PipelineConfig& cfg) {
    cfg.validate();
    if (rec.samples.size() != rec.condition_codes.size())
        throw Error("shape_error", rec.subject_id + ": samples and condition codes differ in length");

    WindowedDataset ds;
    ds.num_classes = 3;
    const auto len = static_cast<std::size_t>(cfg.window_len());
    const auto hop = static_cast<std::size_t>(cfg.hop());

    std::size_t run_start = 0;
    const std::size_t n = rec.size();
    while (run_start < n) {
        std::size_t run_end = run_start;
        const int code = rec.condition_codes[run_start];
        while (run_end < n && rec.condition_codes[run_end] == code) ++run_end;

        const int label = class_for_condition(code);
        if (label >= 0) {
            const std::size_t count = windows_in_run(run_end - run_start, cfg);
            for (std::size_t w = 0; w < count; ++w) {
                EdaWindow win;
                win.values = Eigen::Map<const VecD>(rec.samples.data() + run_start + w * hop,
                                                    static_cast<Eigen::Index>(len));
                win.class_label = label;
                win.subject_id = rec.subject_id;
                ds.windows.push_back(std::move(win));
            }
        }
        run_start = run_end;
    }
    return ds;
}

WindowedDataset build_corpus(const std::vector<EdaRecording>& recordings, const PipelineConfig& cfg) {
    WindowedDataset all;
    all.num_classes = 3;
    for (const auto& rec : recordings) all.append(segment(min_max_normalize(rec), cfg));
    return all;
}

// --- splits -----------------------------------------------------------------

namespace {

std::vector<std::vector<std::size_t>> shuffled_by_class(const std::vector<int>& labels, int num_classes,
                                                        Rng& rng) {
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes)
            throw Error("shape_error", "label " + std::to_string(labels[i]) + " outside class range");
        by_class[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    for (auto& idx : by_class) rng.shuffle(idx);
    return by_class;
}

std::vector<int> labels_of(const WindowedDataset& ds) {
    std::vector<int> labels;
    labels.reserve(ds.size());
    for (const auto& w : ds.windows) labels.push_back(w.class_label);
    return labels;
}

}  // namespace

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(const std::vector<int>& labels,
                                                                            int num_classes,
                                                                            double train_fraction,
                                                                            std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw Error("config_error", "train_fraction must lie in (0, 1)");
    Rng rng(seed);
    auto by_class = shuffled_by_class(labels, num_classes, rng);

    const auto total_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(labels.size())));

    // largest-remainder allocation of the train quota across classes
    std::vector<std::size_t> quota(by_class.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const double exact = train_fraction * static_cast<double>(by_class[c].size());
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        assigned += quota[c];
        remainders.emplace_back(exact - std::floor(exact), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < total_train && r < remainders.size(); ++r) {
        const std::size_t c = remainders[r].second;
        if (quota[c] < by_class[c].size()) {
            ++quota[c];
            ++assigned;
        }
    }

    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const std::size_t n = by_class[c].size();
        if (n == 0) continue;
        if (quota[c] == 0 || quota[c] == n)
            throw Error("stratification_error", "class " + std::to_string(c) + " has " + std::to_string(n) +
                                                    " windows, too few to appear in both train and test");
    }

    std::vector<std::size_t> train, test;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        for (std::size_t i = 0; i < by_class[c].size(); ++i)
            (i < quota[c] ? train : test).push_back(by_class[c][i]);
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {std::move(train), std::move(test)};
}

Split make_split(const WindowedDataset& ds, double train_fraction, std::uint64_t seed) {
    auto [train_idx, test_idx] = split_indices(labels_of(ds), ds.num_classes, train_fraction, seed);
    return {ds.subset(train_idx), ds.subset(test_idx)};
}

std::vector<int> kfold_assignment(const std::vector<int>& labels, int num_classes, int k, std::uint64_t seed) {
    if (k < 2) throw Error("config_error", "k must be >= 2");
    Rng rng(seed);
    auto by_class = shuffled_by_class(labels, num_classes, rng);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const std::size_t n = by_class[c].size();
        if (n > 0 && n < static_cast<std::size_t>(k))
            throw Error("stratification_error", "class " + std::to_string(c) + " has " + std::to_string(n) +
                                                    " windows, fewer than k=" + std::to_string(k));
    }
    // deal classes in sequence so both per-class and total fold sizes differ by at most one
    std::vector<int> fold(labels.size(), -1);
    std::size_t position = 0;
    for (const auto& idx : by_class)
        for (std::size_t i : idx) fold[i] = static_cast<int>(position++ % static_cast<std::size_t>(k));
    return fold;
}

std::vector<Fold> kfold(const WindowedDataset& ds, int k, std::uint64_t seed) {
    const auto assignment = kfold_assignment(labels_of(ds), ds.num_classes, k, seed);
    std::vector<Fold> folds(static_cast<std::size_t>(k));
    for (int f = 0; f < k; ++f) {
        std::vector<std::size_t> train, val;
        for (std::size_t i = 0; i < assignment.size(); ++i) (assignment[i] == f ? val : train).push_back(i);
        folds[static_cast<std::size_t>(f)] = {ds.subset(train), ds.subset(val)};
    }
    return folds;
}

// --- synthetic subjects -----------------------------------------------------

namespace {

struct ProfileField {
    const char* key;
    double SynthProfile::*member;
};

constexpr ProfileField kProfileFields[] = {
    {"baseline_seconds", &SynthProfile::baseline_seconds},
    {"stress_seconds", &SynthProfile::stress_seconds},
    {"amusement_seconds", &SynthProfile::amusement_seconds},
    {"tonic_base_min", &SynthProfile::tonic_base_min},
    {"tonic_base_max", &SynthProfile::tonic_base_max},
    {"baseline_level", &SynthProfile::baseline_level},
    {"stress_level", &SynthProfile::stress_level},
    {"amusement_level", &SynthProfile::amusement_level},
    {"baseline_peak_rate", &SynthProfile::baseline_peak_rate},
    {"stress_peak_rate", &SynthProfile::stress_peak_rate},
    {"amusement_peak_rate", &SynthProfile::amusement_peak_rate},
    {"peak_amplitude", &SynthProfile::peak_amplitude},
    {"peak_rise_seconds", &SynthProfile::peak_rise_seconds},
    {"peak_decay_seconds", &SynthProfile::peak_decay_seconds},
    {"drift_sigma", &SynthProfile::drift_sigma},
    {"reversion_seconds", &SynthProfile::reversion_seconds},
    {"noise_sigma", &SynthProfile::noise_sigma},
};

}  // namespace

SynthProfile SynthProfile::from_map(const std::map<std::string, double>& kv) {
    SynthProfile p;
    for (const auto& [key, value] : kv) {
        bool found = false;
        for (const auto& field : kProfileFields) {
            if (key == field.key) {
                p.*(field.member) = value;
                found = true;
                break;
            }
        }
        if (!found) throw Error("config_error", "unknown generator profile key '" + key + "'");
    }
    p.validate();
    return p;
}

std::map<std::string, double> SynthProfile::to_map() const {
    std::map<std::string, double> kv;
    for (const auto& field : kProfileFields) kv[field.key] = this->*(field.member);
    return kv;
}

void SynthProfile::validate() const {
    if (!(baseline_seconds > 0 && stress_seconds > 0 && amusement_seconds > 0))
        throw Error("config_error", "generator durations must be positive");
    if (!(tonic_base_max >= tonic_base_min)) throw Error("config_error", "tonic_base_max < tonic_base_min");
    if (baseline_peak_rate < 0 || stress_peak_rate < 0 || amusement_peak_rate < 0)
        throw Error("config_error", "peak rates must be non-negative");
    if (!(peak_rise_seconds > 0 && peak_decay_seconds > 0 && reversion_seconds > 0))
        throw Error("config_error", "generator time constants must be positive");
    if (drift_sigma < 0 || noise_sigma < 0) throw Error("config_error", "noise levels must be non-negative");
}

SynthProfile shifted_profile(SynthProfile base) {
    base.stress_level = base.baseline_level - 0.4;
    base.amusement_level = base.baseline_level - 0.2;
    return base;
}

EdaRecording synth_subject(std::uint64_t seed, const SynthProfile& profile, const std::string& subject_id) {
    profile.validate();
    Rng rng(seed);
    const double dt = 1.0 / kSamplingRateHz;
    const double tonic_base = rng.uniform(profile.tonic_base_min, profile.tonic_base_max);
    const double gain = rng.uniform(0.7, 1.3);

    struct Phase {
        int code;
        double seconds, level, rate;
    };
    const Phase phases[] = {
        {kBaseline, profile.baseline_seconds, profile.baseline_level, profile.baseline_peak_rate},
        {kStress, profile.stress_seconds, profile.stress_level, profile.stress_peak_rate},
        {kAmusement, profile.amusement_seconds, profile.amusement_level, profile.amusement_peak_rate},
    };

    std::size_t total = 0;
    for (const auto& ph : phases) total += static_cast<std::size_t>(std::llround(ph.seconds * kSamplingRateHz));

    // phasic response kernel, peak-normalized
    const auto kernel_len = static_cast<std::size_t>(std::ceil(8.0 * profile.peak_decay_seconds * kSamplingRateHz));
    std::vector<double> kernel(kernel_len);
    double kernel_max = 0.0;
    for (std::size_t i = 0; i < kernel_len; ++i) {
        const double s = static_cast<double>(i) * dt;
        kernel[i] = (1.0 - std::exp(-s / profile.peak_rise_seconds)) * std::exp(-s / profile.peak_decay_seconds);
        kernel_max = std::max(kernel_max, kernel[i]);
    }
    for (double& k : kernel) k /= kernel_max;

    EdaRecording rec;
    rec.subject_id = subject_id;
    rec.samples.assign(total, 0.0);
    rec.condition_codes.reserve(total);

    std::vector<double> phasic(total + kernel_len, 0.0);
    double tonic = tonic_base + gain * profile.baseline_level;
    std::size_t t = 0;
    for (const auto& ph : phases) {
        const auto n = static_cast<std::size_t>(std::llround(ph.seconds * kSamplingRateHz));
        const double target = tonic_base + gain * ph.level;
        const double peak_prob = ph.rate / 60.0 * dt;
        for (std::size_t i = 0; i < n; ++i, ++t) {
            tonic += (target - tonic) * dt / profile.reversion_seconds + profile.drift_sigma * std::sqrt(dt) * rng.normal();
            if (rng.uniform() < peak_prob) {
                const double amp = profile.peak_amplitude * gain * rng.uniform(0.5, 1.5);
                for (std::size_t j = 0; j < kernel_len; ++j) phasic[t + j] += amp * kernel[j];
            }
            rec.samples[t] = tonic + phasic[t] + profile.noise_sigma * rng.normal();
            rec.condition_codes.push_back(ph.code);
        }
    }
    return rec;
}

std::vector<std::string> default_subject_tags(std::size_t n) {
    static constexpr int kWesad[] = {2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 13, 14, 15, 16, 17};
    std::vector<std::string> tags;
    for (std::size_t i = 0; i < n; ++i) {
        const int id = i < std::size(kWesad) ? kWesad[i] : 18 + static_cast<int>(i - std::size(kWesad));
        tags.push_back("S" + std::to_string(id));
    }
    return tags;
}

}  // namespace stressnet
