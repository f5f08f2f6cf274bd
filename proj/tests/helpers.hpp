#pragma once

#include "stressnet/signal.hpp"

#include <filesystem>
#include <fstream>
#include <string>

namespace testutil {

namespace fs = std::filesystem;

/// Fresh empty directory under the system temp dir.
inline fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("stressnet_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

inline void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Dataset of `n` windows with the given labels cycling, values random in [0,1].
inline stressnet::WindowedDataset random_dataset(std::size_t n, int num_classes, std::uint64_t seed,
                                                 int len = 240) {
    stressnet::Rng rng(seed);
    stressnet::WindowedDataset ds;
    ds.num_classes = num_classes;
    for (std::size_t i = 0; i < n; ++i) {
        stressnet::EdaWindow w;
        w.values.resize(len);
        for (int j = 0; j < len; ++j) w.values(j) = rng.uniform();
        w.class_label = static_cast<int>(i % static_cast<std::size_t>(num_classes));
        w.subject_id = "S" + std::to_string(2 + i % 3);
        ds.windows.push_back(std::move(w));
    }
    return ds;
}

/// Dataset whose labels follow `counts` (class c repeated counts[c] times).
inline stressnet::WindowedDataset labelled_dataset(const std::vector<std::size_t>& counts, int len = 4) {
    stressnet::WindowedDataset ds;
    ds.num_classes = static_cast<int>(counts.size());
    double tag = 0.0;
    for (std::size_t c = 0; c < counts.size(); ++c)
        for (std::size_t i = 0; i < counts[c]; ++i) {
            stressnet::EdaWindow w;
            w.values = stressnet::VecD::Constant(len, tag);
            tag += 1.0;
            w.class_label = static_cast<int>(c);
            w.subject_id = "S2";
            ds.windows.push_back(std::move(w));
        }
    return ds;
}

}  // namespace testutil
