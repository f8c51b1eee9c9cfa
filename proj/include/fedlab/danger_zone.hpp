#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "fedlab/analysis.hpp"
#include "fedlab/config.hpp"

namespace fedlab::analysis {

/// Cartesian product of learning configurations, enumerated lr-major.
struct GridSpec {
    std::vector<double> learning_rates;
    std::vector<std::size_t> batch_sizes;
    std::vector<std::size_t> epochs;

    std::vector<nn::TrainingConfig> cells() const;
    static GridSpec from_json(const nlohmann::json& j, const std::string& source = {});
};

struct ScanOptions {
    /// When set, each cell persists to <cell_dir>/<id>/cell.json and finished
    /// cells are reused on the next scan.
    std::optional<std::filesystem::path> cell_dir;
    std::size_t jobs = 1;
};

struct ScanStats {
    std::size_t computed = 0;
    std::size_t reused = 0;
    std::size_t failed = 0;
};

/// Runs the undefended federation of `base` once per learning configuration
/// and flags cells with final MTA >= lambda and final ASR >= tau.
DangerZoneReport danger_zone_scan(const std::vector<nn::TrainingConfig>& grid, const exp::ExperimentConfig& base,
                                  double lambda, double tau, const ScanOptions& options = {}, ScanStats* stats = nullptr);

std::string danger_zone_csv(const DangerZoneReport& report);

}  // namespace fedlab::analysis
