#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedlab/datasets.hpp"
#include "fedlab/drop.hpp"
#include "fedlab/federation.hpp"
#include "fedlab/nn.hpp"

namespace fedlab::exp {

inline constexpr int kSchemaVersion = 1;

/// Validation failure naming the offending field. `line` is 1-based and 0
/// when the source text is unknown.
class ConfigError : public InvalidInput {
public:
    ConfigError(std::string field, std::string message, std::size_t line = 0);
    const std::string& field() const noexcept { return field_; }
    std::size_t line() const noexcept { return line_; }

private:
    std::string field_;
    std::size_t line_;
};

struct DatasetConfig {
    std::string kind = "blobs";  // "blobs" | "idx"
    std::size_t classes = 10;
    nn::ImageShape image{1, 8, 8};
    double spread = 0.2;
    std::size_t train_per_class = 300;
    std::size_t test_per_class = 100;
    /// Server-side clean pool the distillation seed set is drawn from.
    std::size_t holdout_per_class = 20;
    std::string train_images, train_labels, test_images, test_labels;

    std::size_t dim() const noexcept { return image.numel(); }
};

struct ModelConfig {
    std::string kind = "cnn";  // "cnn" | "mlp"
    std::size_t hidden = 128;
    std::size_t channels1 = 8;
    std::size_t channels2 = 16;
};

struct AttackConfig {
    int victim = 0;
    int target = 1;
    double dpr = 0.05;
    /// Explicit trigger; empty means the 3x3 top-left patch of +1.
    std::vector<data::TriggerEntry> trigger;
    std::size_t patch_size = 3;
};

struct DefenseConfig {
    std::string name = "fedavg";  // fedavg | median | multikrum | droplet | drop
    drop::LedgerConfig ledger;
    std::size_t period = 5;
    std::size_t query_budget = 50000;
    std::size_t clean_seed_size = 100;
    std::size_t distill_batch = 64;
    std::size_t generator_steps = 1;
    std::size_t clone_steps = 5;
    double clone_lr = 0.01;
    double generator_lr = 0.05;
    std::size_t latent_dim = 64;
    std::size_t generator_hidden = 128;
    std::optional<std::size_t> krum_f;
    std::optional<std::size_t> krum_m;
};

struct ExperimentConfig {
    int schema_version = kSchemaVersion;
    std::uint64_t seed = 0;
    DatasetConfig dataset;
    ModelConfig model;
    fl::FederationConfig federation;
    double alpha = data::kIid;
    AttackConfig attack;
    DefenseConfig defense;
    double lambda = 0.8;
    double tau = 0.85;

    /// Full echo including defaults; from_json(to_json()) reproduces *this.
    nlohmann::json to_json() const;
    /// `source` is the raw file text, used only to anchor errors to a line.
    static ExperimentConfig from_json(const nlohmann::json& j, const std::string& source = {});

    void validate(const std::string& source = {}) const;
    data::PoisonSpec poison_spec() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);
/// Parses text, mapping JSON syntax errors to ConfigError with line numbers.
nlohmann::json parse_json_text(const std::string& text, const std::string& origin);
std::string read_text(const std::filesystem::path& path);

/// 1-based line where the dotted field path first appears in `source`, or 0.
std::size_t locate_field(const std::string& source, const std::string& dotted_path);

/// to_json() minus the defense block; equal keys mean two runs are comparable.
nlohmann::json comparable_part(const ExperimentConfig& cfg);

}  // namespace fedlab::exp
