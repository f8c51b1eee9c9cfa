#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedlab/analysis.hpp"
#include "fedlab/config.hpp"
#include "fedlab/federation.hpp"

namespace fedlab::exp {

struct ExperimentData {
    LabeledDataset train;
    LabeledDataset holdout;
    LabeledDataset test;
};

/// Blobs: one draw per class of train + test + holdout rows from shared
/// centroids. IDX: train file minus a per-class holdout tail, test file as is.
ExperimentData load_data(const ExperimentConfig& cfg);

nn::Architecture make_architecture(const ExperimentConfig& cfg);

/// The seeded round-0 global model. Identical for configs that share
/// dataset, model and seed, so defense comparisons start from one point.
nn::Classifier initial_global(const ExperimentConfig& cfg);

std::unique_ptr<fl::Defense> make_defense(const ExperimentConfig& cfg, const LabeledDataset& clean_seed);

struct Experiment {
    std::unique_ptr<fl::Federation> federation;
    std::unique_ptr<fl::Defense> defense;
    data::PoisonSpec poison;
    std::vector<ClientId> malicious;
};

Experiment build_experiment(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Record output

std::string rounds_csv_header();
std::string rounds_csv_row(const fl::RoundRecord& r);

/// Appends complete CSV rows, flushing after each one.
class RoundsCsvWriter {
public:
    explicit RoundsCsvWriter(const std::filesystem::path& path);
    void write(const fl::RoundRecord& r);

private:
    std::unique_ptr<std::ofstream> out_;
};

struct RunSummary {
    double final_mta = 0;
    double final_asr = 0;
    analysis::ConsistencyStat consistency;
    std::size_t rounds = 0;
};

RunSummary summarize(std::span<const fl::RoundRecord> records, double lambda);
nlohmann::json summary_json(const ExperimentConfig& cfg, const RunSummary& s, const std::string& defense_name);

std::string version_string();
std::string git_hash();

/// Runs `cfg` into `out_dir`: rounds.csv (streamed), timings.csv,
/// summary.json and finally manifest.json. A stale manifest is removed first,
/// so an interrupted run never looks complete.
std::vector<fl::RoundRecord> run_to_directory(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace fedlab::exp
