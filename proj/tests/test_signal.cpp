#include "doctest.h"

#include "helpers.hpp"
#include "stressnet/signal.hpp"

#include <algorithm>
#include <numeric>
#include <set>

using namespace stressnet;

namespace {

// Reference enumerator: every start s with s + len <= N that lies on the hop grid.
std::size_t brute_force_windows(std::size_t run, std::size_t len, std::size_t hop) {
    std::size_t count = 0;
    for (std::size_t s = 0; s + len <= run; ++s)
        if (s % hop == 0) ++count;
    return count;
}

EdaRecording ramp_recording(const std::vector<std::pair<int, std::size_t>>& runs) {
    EdaRecording rec;
    rec.subject_id = "S2";
    double x = 0.0;
    for (const auto& [code, n] : runs)
        for (std::size_t i = 0; i < n; ++i) {
            rec.samples.push_back(x);
            x += 1.0;
            rec.condition_codes.push_back(code);
        }
    return rec;
}

std::multiset<double> tags_of(const WindowedDataset& ds) {
    std::multiset<double> out;
    for (const auto& w : ds.windows) out.insert(w.values(0));
    return out;
}

}  // namespace

TEST_CASE("load_recording parses rows in order") {
    const auto dir = testutil::scratch_dir("load");
    testutil::write_file(dir / "S2.csv", "eda_uS,label\n0.41,1\n0.42,1\n0.40,2\n");
    const auto rec = load_recording(dir / "S2.csv", "S2");
    CHECK(rec.subject_id == "S2");
    CHECK(rec.sampling_rate_hz == 4);
    REQUIRE(rec.size() == 3);
    CHECK(rec.samples == std::vector<double>{0.41, 0.42, 0.40});
    CHECK(rec.condition_codes == std::vector<int>{1, 1, 2});
}

TEST_CASE("load_recording rejects malformed input") {
    const auto dir = testutil::scratch_dir("load_bad");

    testutil::write_file(dir / "a.csv", "eda_uS,label\n0.41,1\nabc,1\n");
    try {
        load_recording(dir / "a.csv", "S2");
        FAIL("expected a parse error");
    } catch (const Error& e) {
        CHECK(e.code() == "parse_error");
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }

    testutil::write_file(dir / "empty.csv", "");
    CHECK_THROWS_AS(load_recording(dir / "empty.csv", "S2"), Error);

    testutil::write_file(dir / "nan.csv", "eda_uS,label\nnan,1\n");
    CHECK_THROWS_AS(load_recording(dir / "nan.csv", "S2"), Error);

    testutil::write_file(dir / "inf.csv", "eda_uS,label\n1e400,1\n");
    CHECK_THROWS_AS(load_recording(dir / "inf.csv", "S2"), Error);

    testutil::write_file(dir / "hdr.csv", "eda,label\n0.4,1\n");
    CHECK_THROWS_AS(load_recording(dir / "hdr.csv", "S2"), Error);

    testutil::write_file(dir / "lbl.csv", "eda_uS,label\n0.4,9\n");
    CHECK_THROWS_AS(load_recording(dir / "lbl.csv", "S2"), Error);

    CHECK_THROWS_AS(load_recording(dir / "missing.csv", "S2"), Error);
}

TEST_CASE("37 minutes at 4 Hz round-trips as 8880 samples") {
    const auto dir = testutil::scratch_dir("minutes");
    EdaRecording rec;
    rec.subject_id = "S5";
    for (int i = 0; i < 37 * 60 * 4; ++i) {
        rec.samples.push_back(1.0 + 0.001 * (i % 97));
        rec.condition_codes.push_back(1 + i % 3);
    }
    save_recording(rec, dir / "S5.csv");
    const auto back = load_recording(dir / "S5.csv", "S5");
    CHECK(back.size() == 8880);
    CHECK(back.condition_codes == rec.condition_codes);
}

TEST_CASE("load_corpus uses natural subject order") {
    const auto dir = testutil::scratch_dir("corpus");
    for (const char* tag : {"S10", "S2", "S3"}) testutil::write_file(dir / (std::string(tag) + ".csv"), "eda_uS,label\n1,1\n");
    testutil::write_file(dir / "notes.txt", "ignored");
    const auto recs = load_corpus(dir);
    REQUIRE(recs.size() == 3);
    CHECK(recs[0].subject_id == "S2");
    CHECK(recs[1].subject_id == "S3");
    CHECK(recs[2].subject_id == "S10");
    CHECK_THROWS_AS(load_corpus(dir / "nope"), Error);
}

TEST_CASE("min_max_normalize") {
    EdaRecording rec;
    rec.samples = {2, 4, 6};
    rec.condition_codes = {1, 1, 1};
    const auto n = min_max_normalize(rec);
    CHECK(n.samples == std::vector<double>{0.0, 0.5, 1.0});

    rec.samples = {5, 5, 5};
    try {
        min_max_normalize(rec);
        FAIL("expected degenerate signal");
    } catch (const Error& e) {
        CHECK(e.code() == "degenerate_signal");
    }
}

TEST_CASE("normalization is idempotent and spans exactly [0,1]") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        EdaRecording rec;
        const std::size_t n = 2 + rng.below(500);
        for (std::size_t i = 0; i < n; ++i) {
            rec.samples.push_back(rng.uniform(-50.0, 50.0) * std::pow(10.0, rng.uniform(-3, 3)));
            rec.condition_codes.push_back(1);
        }
        if (*std::max_element(rec.samples.begin(), rec.samples.end()) ==
            *std::min_element(rec.samples.begin(), rec.samples.end()))
            continue;
        const auto once = min_max_normalize(rec);
        const auto twice = min_max_normalize(once);
        CHECK(*std::min_element(once.samples.begin(), once.samples.end()) == 0.0);
        CHECK(*std::max_element(once.samples.begin(), once.samples.end()) == 1.0);
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(once.samples[i] - twice.samples[i]) <= 1e-12);
    }
}

TEST_CASE("window count per run matches enumeration for lengths 0..2000") {
    const PipelineConfig cfg;
    REQUIRE(cfg.window_len() == 240);
    REQUIRE(cfg.hop() == 120);
    for (std::size_t n = 0; n <= 2000; ++n) {
        const std::size_t expected = brute_force_windows(n, 240, 120);
        REQUIRE(windows_in_run(n, cfg) == expected);
        if (n % 97 == 0 || n == 240 || n == 480) {
            const auto ds = segment(ramp_recording({{1, n}}), cfg);
            REQUIRE(ds.size() == expected);
        }
    }
}

TEST_CASE("segment: exact fits and start positions") {
    const PipelineConfig cfg;
    CHECK(segment(ramp_recording({{2, 240}}), cfg).size() == 1);
    CHECK(segment(ramp_recording({{2, 239}}), cfg).size() == 0);

    const auto ds = segment(ramp_recording({{1, 480}}), cfg);
    REQUIRE(ds.size() == 3);
    CHECK(ds.windows[0].values(0) == 0.0);
    CHECK(ds.windows[1].values(0) == 120.0);
    CHECK(ds.windows[2].values(0) == 240.0);
    for (const auto& w : ds.windows) CHECK(w.values.size() == 240);
}

TEST_CASE("segment never crosses a condition boundary and drops other codes") {
    const PipelineConfig cfg;
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::pair<int, std::size_t>> runs;
        for (int r = 0; r < 8; ++r) runs.push_back({static_cast<int>(rng.below(8)), rng.below(900)});
        const auto rec = ramp_recording(runs);
        const auto ds = segment(rec, cfg);

        // adjacent runs with the same code form one run
        std::size_t expected = 0;
        std::vector<std::pair<int, std::size_t>> merged;
        for (const auto& run : runs) {
            if (!merged.empty() && merged.back().first == run.first) merged.back().second += run.second;
            else merged.push_back(run);
        }
        for (const auto& [code, n] : merged)
            if (code >= 1 && code <= 3) expected += brute_force_windows(n, 240, 120);
        REQUIRE(ds.size() == expected);

        for (const auto& w : ds.windows) {
            const auto start = static_cast<std::size_t>(w.values(0));
            const int code = rec.condition_codes[start];
            CHECK(code >= 1);
            CHECK(code <= 3);
            CHECK(w.class_label == code - 1);
            for (std::size_t j = 0; j < 240; ++j) REQUIRE(rec.condition_codes[start + j] == code);
        }
    }
}

TEST_CASE("class mapping") {
    CHECK(class_for_condition(1) == 0);
    CHECK(class_for_condition(2) == 1);
    CHECK(class_for_condition(3) == 2);
    for (int code : {0, 4, 5, 6, 7}) CHECK(class_for_condition(code) == -1);
}

TEST_CASE("pipeline config validation") {
    PipelineConfig cfg;
    cfg.overlap_fraction = 1.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    cfg.sampling_rate_hz = 8;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = {};
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("built corpus windows lie in [0,1]") {
    std::vector<EdaRecording> recs;
    for (int i = 0; i < 3; ++i) recs.push_back(synth_subject(100 + i, {}, "S" + std::to_string(2 + i)));
    const auto ds = build_corpus(recs, {});
    REQUIRE(!ds.empty());
    for (const auto& w : ds.windows) {
        REQUIRE(w.values.size() == 240);
        CHECK(w.values.minCoeff() >= 0.0);
        CHECK(w.values.maxCoeff() <= 1.0);
    }
    const auto subjects = ds.subjects();
    CHECK(subjects == std::vector<std::string>{"S2", "S3", "S4"});
}

TEST_CASE("stratified split: 876 windows give 657/219") {
    const auto ds = testutil::labelled_dataset({564, 312});
    const auto split = make_split(ds, 0.75, 1);
    CHECK(split.train.size() == 657);
    CHECK(split.test.size() == 219);
}

TEST_CASE("stratified split arithmetic: 60/40 at 0.75 gives 45/30") {
    const auto ds = testutil::labelled_dataset({60, 40});
    const auto split = make_split(ds, 0.75, 9);
    const auto counts = split.train.class_counts();
    CHECK(counts[0] == 45);
    CHECK(counts[1] == 30);
}

TEST_CASE("split is a deterministic exact partition") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const std::vector<std::size_t> counts{5 + rng.below(200), 5 + rng.below(200), 5 + rng.below(100)};
        const auto ds = testutil::labelled_dataset(counts);
        const double f = rng.uniform(0.2, 0.8);
        const auto a = make_split(ds, f, static_cast<std::uint64_t>(trial));
        const auto b = make_split(ds, f, static_cast<std::uint64_t>(trial));
        CHECK(tags_of(a.train) == tags_of(b.train));
        CHECK(a.train.size() == static_cast<std::size_t>(std::llround(f * static_cast<double>(ds.size()))));

        auto all = tags_of(a.train);
        const auto test = tags_of(a.test);
        all.insert(test.begin(), test.end());
        CHECK(all == tags_of(ds));
        CHECK(all.size() == ds.size());
    }
    CHECK_THROWS_AS(make_split(testutil::labelled_dataset({1, 10}), 0.75, 0), Error);
    CHECK_THROWS_AS(make_split(testutil::labelled_dataset({10, 10}), 1.0, 0), Error);
}

TEST_CASE("kfold: 876 windows at k=10 give folds of 87 or 88") {
    const auto ds = testutil::labelled_dataset({564, 312});
    const auto folds = kfold(ds, 10, 4);
    REQUIRE(folds.size() == 10);
    std::size_t total = 0;
    std::multiset<double> seen;
    for (const auto& f : folds) {
        CHECK((f.validation.size() == 87 || f.validation.size() == 88));
        CHECK(f.train.size() + f.validation.size() == 876);
        total += f.validation.size();
        const auto tags = tags_of(f.validation);
        seen.insert(tags.begin(), tags.end());
    }
    CHECK(total == 876);
    CHECK(seen == tags_of(ds));
}

TEST_CASE("kfold minimal stratified case") {
    const auto ds = testutil::labelled_dataset({2, 2});
    const auto folds = kfold(ds, 2, 0);
    REQUIRE(folds.size() == 2);
    for (const auto& f : folds) {
        REQUIRE(f.validation.size() == 2);
        const auto counts = f.validation.class_counts();
        CHECK(counts[0] == 1);
        CHECK(counts[1] == 1);
    }
    CHECK_THROWS_AS(kfold(testutil::labelled_dataset({1, 5}), 2, 0), Error);
    CHECK_THROWS_AS(kfold(ds, 1, 0), Error);
}

TEST_CASE("kfold assignment is deterministic and balanced per class") {
    std::vector<int> labels;
    for (int i = 0; i < 300; ++i) labels.push_back(i % 7 == 0 ? 2 : i % 2);
    const auto a = kfold_assignment(labels, 3, 5, 77);
    const auto b = kfold_assignment(labels, 3, 5, 77);
    CHECK(a == b);
    for (int c = 0; c < 3; ++c) {
        std::vector<int> per_fold(5, 0);
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) ++per_fold[static_cast<std::size_t>(a[i])];
        CHECK(*std::max_element(per_fold.begin(), per_fold.end()) -
                  *std::min_element(per_fold.begin(), per_fold.end()) <=
              1);
    }
}

TEST_CASE("dataset helpers") {
    auto ds = testutil::random_dataset(9, 3, 1, 8);
    CHECK(ds.subjects() == std::vector<std::string>{"S2", "S3", "S4"});
    CHECK(ds.for_subject("S3").size() == 3);
    CHECK(ds.excluding_subject("S3").size() == 6);
    CHECK(subject_less("S2", "S10"));
    CHECK(!subject_less("S10", "S2"));
    CHECK(subject_less("A", "B"));
}

TEST_CASE("synthetic subject") {
    const auto a = synth_subject(7, {}, "S2");
    CHECK(a.size() == 8760);
    CHECK(a.sampling_rate_hz == 4);
    CHECK(a.samples == synth_subject(7, {}, "S2").samples);
    CHECK(a.samples != synth_subject(8, {}, "S2").samples);
    for (int code : a.condition_codes) CHECK((code >= 1 && code <= 3));
    for (double x : a.samples) REQUIRE(std::isfinite(x));

    double base = 0, stress = 0;
    std::size_t nb = 0, ns = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.condition_codes[i] == kBaseline) base += a.samples[i], ++nb;
        if (a.condition_codes[i] == kStress) stress += a.samples[i], ++ns;
    }
    CHECK(nb == 4800);
    CHECK(ns == 2400);
    CHECK(stress / ns > base / nb);
}

TEST_CASE("synthetic profile key/value block") {
    auto kv = SynthProfile{}.to_map();
    kv["stress_seconds"] = 300;
    const auto p = SynthProfile::from_map(kv);
    CHECK(p.stress_seconds == 300);
    CHECK(synth_subject(1, p).size() == (1200 + 300 + 390) * 4);
    CHECK_THROWS_AS(SynthProfile::from_map({{"bogus", 1.0}}), Error);
    kv["baseline_seconds"] = 0;
    CHECK_THROWS_AS(SynthProfile::from_map(kv).validate(), Error);
}

TEST_CASE("default subject tags skip S1 and S12") {
    const auto tags = default_subject_tags(16);
    REQUIRE(tags.size() == 16);
    CHECK(tags.front() == "S2");
    CHECK(std::find(tags.begin(), tags.end(), "S12") == tags.end());
    CHECK(tags[14] == "S17");
    CHECK(tags[15] == "S18");
}
