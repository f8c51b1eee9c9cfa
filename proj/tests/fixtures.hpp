#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

namespace fixture {

// Small blob experiment that finishes in well under a second.
inline nlohmann::json tiny_config() {
    return nlohmann::json::parse(R"({
  "schema_version": 1,
  "seed": 5,
  "dataset": {"kind": "blobs", "classes": 4, "image": [1, 4, 4], "spread": 0.2,
              "train_per_class": 40, "test_per_class": 10, "holdout_per_class": 5},
  "model": {"kind": "mlp", "hidden": 8},
  "federation": {"clients": 6, "sampled": 4, "mcr": 0.2, "rounds": 3,
                 "training": {"lr": 0.1, "batch_size": 8, "epochs": 1}},
  "attack": {"victim": 0, "target": 1, "dpr": 0.1, "patch_size": 2},
  "defense": {"name": "fedavg"},
  "metrics": {"lambda": 0.8, "tau": 0.85}
})");
}

inline std::filesystem::path temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("fedlab_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(2) << "\n"; }

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fixture
