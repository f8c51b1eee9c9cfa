#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fedlab/dataset.hpp"

namespace fedlab::data {

/// Gaussian blobs around uniformly drawn class centroids in [0,1]^dim,
/// clipped to [0,1]. Rows are grouped by class: per_class rows of class 0, then 1, ...
LabeledDataset synth_blobs(std::size_t classes, std::size_t dim, std::size_t per_class, double spread,
                           std::uint64_t seed);

/// Centroids used by synth_blobs for the same (classes, dim, seed).
Matrix blob_centroids(std::size_t classes, std::size_t dim, std::uint64_t seed);

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixels are scaled from [0,255] to [0,1].
LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        std::optional<std::size_t> num_classes = std::nullopt);

/// Writes `data` as IDX files with the given image height and width.
/// Values are quantized to bytes with round(v * 255).
void write_idx(const LabeledDataset& data, std::size_t height, std::size_t width,
               const std::filesystem::path& images, const std::filesystem::path& labels);

/// Stable CSV export: label,x0,x1,...
void write_csv(const LabeledDataset& data, std::ostream& out);

/// Splits each class into its first `first_per_class` rows and the rest.
std::pair<LabeledDataset, LabeledDataset> split_per_class(const LabeledDataset& data, std::size_t first_per_class);

inline constexpr double kIid = std::numeric_limits<double>::infinity();

struct PartitionPlan {
    std::vector<std::vector<std::size_t>> assignments;
    double alpha = kIid;

    std::size_t clients() const noexcept { return assignments.size(); }
};

/// Per-class Dirichlet(alpha) allocation of sample indices to clients with
/// largest-remainder rounding. alpha = kIid gives equal proportions.
PartitionPlan partition(const LabeledDataset& data, std::size_t clients, double alpha, std::uint64_t seed);

/// Draws one Dirichlet(alpha, ..., alpha) vector; exposed for testing.
std::vector<double> sample_dirichlet(std::size_t k, double alpha, Rng& rng);

struct TriggerEntry {
    std::size_t index = 0;
    Real delta = 0;
    bool operator==(const TriggerEntry&) const = default;
};

struct PoisonSpec {
    std::vector<TriggerEntry> trigger;
    int victim = 0;
    int target = 1;
    double dpr = 0.0;

    /// Throws InvalidInput on victim == target, dpr outside [0,1] or a trigger index outside the input.
    void validate(std::size_t dim, std::size_t num_classes) const;
    bool operator==(const PoisonSpec&) const = default;

    /// {coords: [[i, delta], ...], victim, target, dpr}
    static PoisonSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// size x size square of +delta at the top-left corner of a (channels, height, width) image.
std::vector<TriggerEntry> corner_patch_trigger(std::size_t channels, std::size_t height, std::size_t width,
                                               std::size_t size = 3, Real delta = 1.0);

/// Adds the trigger to one row, clipping to [0,1].
void apply_trigger(Eigen::Ref<RowVector> row, const std::vector<TriggerEntry>& trigger);

/// round-half-up(dpr * n)
std::size_t poison_count(double dpr, std::size_t n);

/// Replaces round(dpr * |data|) randomly chosen victim-class rows with
/// triggered copies labeled as the target class.
LabeledDataset poison(const LabeledDataset& data, const PoisonSpec& spec, std::uint64_t seed);

/// Every victim-class row with the trigger applied; labels stay the victim class.
LabeledDataset triggered_testset(const LabeledDataset& test, const PoisonSpec& spec);

}  // namespace fedlab::data
