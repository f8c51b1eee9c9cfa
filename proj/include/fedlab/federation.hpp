#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fedlab/datasets.hpp"
#include "fedlab/flat_params.hpp"
#include "fedlab/nn.hpp"

namespace fedlab::fl {

struct ClientUpdate {
    ClientId id = 0;
    FlatParams params;
};

/// Unweighted element-wise mean.
FlatParams fedavg(std::span<const FlatParams> updates);
FlatParams fedavg(std::span<const ClientUpdate> updates);

struct FederationConfig {
    std::size_t clients = 10;
    std::size_t sampled = 5;
    double mcr = 0.0;
    std::size_t rounds = 1;
    nn::TrainingConfig training;
    std::uint64_t seed = 0;
    /// Malicious updates are sent as global + scale * (local - global).
    double update_scale = 1.0;
    /// Worker threads for local training; results do not depend on it.
    std::size_t jobs = 1;

    void validate() const;
    /// round(mcr * clients)
    std::size_t malicious_count() const;
};

/// The fixed malicious subset for a run, sorted ascending.
std::vector<ClientId> choose_malicious(const FederationConfig& cfg);

/// Uniform sample without replacement of cfg.sampled ids among the
/// non-banned clients, seeded by (cfg.seed, round). Sorted ascending. If
/// fewer than cfg.sampled clients remain, all of them are returned.
std::vector<ClientId> sample_clients(const FederationConfig& cfg, std::size_t round,
                                     const std::set<ClientId>& banned = {});

struct ClientState {
    ClientId id = 0;
    LabeledDataset data;
    bool malicious = false;
    std::optional<data::PoisonSpec> poison;
};

struct RoundRecord {
    std::size_t round = 0;
    std::vector<ClientId> sampled;
    std::size_t malicious_sampled = 0;
    double mta = 0;
    double asr = 0;
    std::vector<ClientId> aggregated;
    std::vector<ClientId> excluded;
    std::vector<ClientId> benign_cluster;
    std::vector<ClientId> suspect_cluster;
    bool distilled = false;
    std::string status = "ok";
    double elapsed_ms = 0;
};

struct DefenseContext {
    std::size_t round = 0;
    const nn::Classifier& global;
    std::span<const ClientUpdate> updates;
};

struct DefenseResult {
    std::optional<FlatParams> global;
    std::vector<ClientId> aggregated;
    std::vector<ClientId> excluded;
    std::vector<ClientId> benign_cluster;
    std::vector<ClientId> suspect_cluster;
    bool distilled = false;
};

/// Server-side aggregation pipeline. Receives an immutable snapshot of the
/// round's updates and may keep state across rounds.
class Defense {
public:
    virtual ~Defense() = default;
    virtual std::string name() const = 0;
    virtual DefenseResult aggregate(const DefenseContext& ctx) = 0;
    /// Clients that must not be sampled again.
    virtual std::set<ClientId> banned() const { return {}; }
};

class FedAvgDefense final : public Defense {
public:
    std::string name() const override { return "fedavg"; }
    DefenseResult aggregate(const DefenseContext& ctx) override;
};

using RecordSink = std::function<void(const RoundRecord&)>;

class Federation {
public:
    Federation(FederationConfig cfg, std::vector<ClientState> clients, nn::Classifier initial_global,
               LabeledDataset test, LabeledDataset triggered_test, int target_class);

    const FederationConfig& config() const noexcept { return cfg_; }
    const nn::Classifier& global() const noexcept { return global_; }
    const std::vector<ClientState>& clients() const noexcept { return clients_; }
    std::size_t rounds_done() const noexcept { return round_; }

    /// Trains the sampled clients from the current global model.
    std::vector<ClientUpdate> train_clients(std::size_t round, std::span<const ClientId> ids) const;

    /// One full round: sample, train, defend, install, evaluate.
    RoundRecord run_round(Defense& defense);

private:
    FederationConfig cfg_;
    std::vector<ClientState> clients_;
    nn::Classifier global_;
    LabeledDataset test_;
    LabeledDataset triggered_;
    int target_ = 0;
    std::size_t round_ = 0;
};

/// Runs cfg.rounds rounds, handing each record to `sink` as soon as it exists.
std::vector<RoundRecord> run_experiment(Federation& federation, Defense& defense, const RecordSink& sink = {});

}  // namespace fedlab::fl
