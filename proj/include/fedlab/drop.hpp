#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "fedlab/dataset.hpp"
#include "fedlab/federation.hpp"
#include "fedlab/nn.hpp"

namespace fedlab::drop {

// ---------------------------------------------------------------------------
// Agglomerative clustering

/// Ward merge cost: |A||B| / (|A|+|B|) * ||mean(A) - mean(B)||^2.
double ward_distance(std::span<const FlatParams> a, std::span<const FlatParams> b);

struct ClusterSplit {
    std::vector<ClientId> benign;
    std::vector<ClientId> suspect;
};

/// Ward-linkage agglomeration from singletons down to exactly two clusters.
///
/// Updates are put in client-id order first, so the result does not depend
/// on input order. Among equal merge costs the pair whose members have the
/// smallest ids wins (compared lexicographically by each cluster's lowest id).
/// The larger final cluster is benign. Equal sizes fall back to the lower
/// within-cluster sum of squares, then to the cluster holding the lowest id.
ClusterSplit cluster_updates(std::span<const fl::ClientUpdate> updates);

// ---------------------------------------------------------------------------
// Activity monitoring

struct LedgerConfig {
    double penalty = 1.0;
    double reward = 1.0;
    double ban_threshold = 5.0;
    bool ban_enabled = false;

    void validate() const;
};

class PenaltyLedger {
public:
    PenaltyLedger() = default;
    explicit PenaltyLedger(LedgerConfig cfg);

    const LedgerConfig& config() const noexcept { return cfg_; }
    /// Unknown clients have score 0.
    double score(ClientId id) const;
    const std::map<ClientId, double>& scores() const noexcept { return scores_; }
    const std::set<ClientId>& banned() const noexcept { return banned_; }
    bool is_banned(ClientId id) const { return banned_.contains(id); }

    /// Suspects gain the penalty, benign clients lose the reward (floored at
    /// zero), everyone else is untouched. Scores at or above the ban
    /// threshold move the client to the banned set when banning is enabled.
    PenaltyLedger updated(const ClusterSplit& split) const;

private:
    LedgerConfig cfg_;
    std::map<ClientId, double> scores_;
    std::set<ClientId> banned_;
};

inline PenaltyLedger update_ledger(const PenaltyLedger& ledger, const ClusterSplit& split) {
    return ledger.updated(split);
}

/// Benign-cluster clients with a clean record (score 0). When none are left
/// the single benign-cluster client with the lowest score is kept.
std::vector<ClientId> filter_by_ledger(const ClusterSplit& split, const PenaltyLedger& ledger);

// ---------------------------------------------------------------------------
// Knowledge distillation

struct DistillConfig {
    /// Distill on rounds t with t % period == 0.
    std::size_t period = 5;
    /// Synthetic queries per distillation.
    std::size_t query_budget = 50000;
    std::size_t batch_size = 64;
    /// Generator updates per outer iteration.
    std::size_t generator_steps = 1;
    /// Clone updates per outer iteration.
    std::size_t clone_steps = 5;
    double clone_lr = 0.01;
    double generator_lr = 0.05;
    std::size_t latent_dim = 64;
    std::size_t generator_hidden = 128;
    /// Trusted clean seed set held by the server.
    LabeledDataset clean;

    void validate() const;
};

/// Mean of the per-model logits.
Matrix ensemble_logits(std::span<const nn::Classifier> models, const Matrix& batch);

struct DistillResult {
    nn::Classifier model;
    nn::Generator generator;
    std::size_t queries = 0;
    bool skipped = false;
};

/// Trains a clone (warm-started from `global`) to match the benign ensemble's
/// logits under l1 loss on generated queries mixed 1:1 with clean-seed
/// batches. The generator is trained in alternation to maximise the same
/// clone-vs-ensemble disagreement, using exact gradients through both.
DistillResult distill(const nn::Classifier& global, std::span<const nn::Classifier> benign,
                      const nn::Generator& generator, const DistillConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Pipelines

struct PipelineResult {
    FlatParams global;
    PenaltyLedger ledger;
    ClusterSplit split;
    std::vector<ClientId> survivors;
    bool distilled = false;
    std::optional<nn::Generator> generator;
};

/// Clustering, ledger update, filtering and FedAvg over the survivors.
PipelineResult droplet_pipeline(std::span<const fl::ClientUpdate> updates, const PenaltyLedger& ledger,
                                std::size_t round);

/// droplet_pipeline followed by distillation on every period-th round.
PipelineResult drop_pipeline(std::span<const fl::ClientUpdate> updates, const PenaltyLedger& ledger,
                             const nn::Classifier& global, const nn::Generator& generator, const DistillConfig& cfg,
                             std::size_t round, std::uint64_t seed);

class DropletDefense : public fl::Defense {
public:
    explicit DropletDefense(LedgerConfig cfg) : ledger_(cfg) {}
    std::string name() const override { return "droplet"; }
    fl::DefenseResult aggregate(const fl::DefenseContext& ctx) override;
    std::set<ClientId> banned() const override { return ledger_.banned(); }
    const PenaltyLedger& ledger() const noexcept { return ledger_; }

protected:
    PenaltyLedger ledger_;
};

class DropDefense final : public DropletDefense {
public:
    DropDefense(LedgerConfig ledger, DistillConfig distill, std::size_t input_dim, std::uint64_t seed);
    std::string name() const override { return "drop"; }
    fl::DefenseResult aggregate(const fl::DefenseContext& ctx) override;

private:
    DistillConfig distill_;
    nn::Generator generator_;
    std::uint64_t seed_;
};

}  // namespace fedlab::drop
