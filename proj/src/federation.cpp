#include "fedlab/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "fedlab/analysis.hpp"

namespace fedlab::fl {

FlatParams fedavg(std::span<const FlatParams> updates) {
    if (updates.empty()) throw InvalidInput("fedavg: no updates");
    const std::size_t n = updates.front().size();
    std::vector<Real> sum(n, Real(0));
    for (const auto& u : updates) {
        if (u.size() != n) throw ShapeError("fedavg: update length mismatch");
        for (std::size_t i = 0; i < n; ++i) sum[i] += u[i];
    }
    const Real inv = Real(1) / static_cast<Real>(updates.size());
    for (auto& v : sum) v *= inv;
    return FlatParams(std::move(sum), updates.front().layout());
}

FlatParams fedavg(std::span<const ClientUpdate> updates) {
    std::vector<FlatParams> params;
    params.reserve(updates.size());
    for (const auto& u : updates) params.push_back(u.params);
    return fedavg(params);
}

void FederationConfig::validate() const {
    if (clients == 0) throw InvalidInput("federation.clients must be positive");
    if (sampled == 0) throw InvalidInput("federation.sampled must be positive");
    if (sampled > clients) throw InvalidInput("federation.sampled must not exceed federation.clients");
    if (!(mcr >= 0.0 && mcr < 1.0)) throw InvalidInput("federation.mcr must be in [0, 1)");
    if (!(update_scale > 0.0) || !std::isfinite(update_scale)) {
        throw InvalidInput("federation.update_scale must be positive");
    }
    training.validate();
}

std::size_t FederationConfig::malicious_count() const {
    return static_cast<std::size_t>(std::floor(mcr * static_cast<double>(clients) + 0.5 + 1e-9));
}

std::vector<ClientId> choose_malicious(const FederationConfig& cfg) {
    std::vector<ClientId> ids(cfg.clients);
    std::iota(ids.begin(), ids.end(), ClientId{0});
    Rng rng(derive_seed(cfg.seed, stream::kMalicious));
    std::shuffle(ids.begin(), ids.end(), rng);
    ids.resize(std::min(cfg.malicious_count(), ids.size()));
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<ClientId> sample_clients(const FederationConfig& cfg, std::size_t round, const std::set<ClientId>& banned) {
    std::vector<ClientId> pool;
    pool.reserve(cfg.clients);
    for (ClientId id = 0; id < static_cast<ClientId>(cfg.clients); ++id) {
        if (!banned.contains(id)) pool.push_back(id);
    }
    if (pool.size() < cfg.sampled) {
        spdlog::warn("round {}: only {} non-banned clients left, sampling all of them", round, pool.size());
        return pool;
    }
    Rng rng(derive_seed(cfg.seed, stream::kSample, round));
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < cfg.sampled; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(cfg.sampled);
    std::sort(pool.begin(), pool.end());
    return pool;
}

DefenseResult FedAvgDefense::aggregate(const DefenseContext& ctx) {
    DefenseResult r;
    r.global = fedavg(ctx.updates);
    for (const auto& u : ctx.updates) r.aggregated.push_back(u.id);
    return r;
}

Federation::Federation(FederationConfig cfg, std::vector<ClientState> clients, nn::Classifier initial_global,
                       LabeledDataset test, LabeledDataset triggered_test, int target_class)
    : cfg_(std::move(cfg)),
      clients_(std::move(clients)),
      global_(std::move(initial_global)),
      test_(std::move(test)),
      triggered_(std::move(triggered_test)),
      target_(target_class) {
    cfg_.validate();
    if (clients_.size() != cfg_.clients) throw InvalidInput("federation: client list size != federation.clients");
    for (std::size_t i = 0; i < clients_.size(); ++i) {
        if (clients_[i].id != static_cast<ClientId>(i)) throw InvalidInput("federation: client ids must be 0..N-1 in order");
        if (clients_[i].malicious != clients_[i].poison.has_value()) {
            throw InvalidInput("federation: poison spec must be present exactly for malicious clients");
        }
    }
}

std::vector<ClientUpdate> Federation::train_clients(std::size_t round, std::span<const ClientId> ids) const {
    std::vector<ClientUpdate> updates(ids.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;

    auto worker = [&] {
        for (std::size_t i = next++; i < ids.size(); i = next++) {
            try {
                const ClientState& client = clients_.at(static_cast<std::size_t>(ids[i]));
                const auto seed = derive_seed(cfg_.seed, stream::kTrain, round, static_cast<std::uint64_t>(client.id));
                nn::Classifier local = nn::train_local(global_, client.data, cfg_.training, seed);
                FlatParams params = local.params();
                if (client.malicious && cfg_.update_scale != 1.0) {
                    const auto scale = static_cast<Real>(cfg_.update_scale);
                    for (std::size_t k = 0; k < params.size(); ++k) {
                        params[k] = global_.params()[k] + scale * (params[k] - global_.params()[k]);
                    }
                }
                updates[i] = ClientUpdate{client.id, std::move(params)};
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };

    const std::size_t jobs = std::clamp<std::size_t>(cfg_.jobs, 1, std::max<std::size_t>(ids.size(), 1));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);
    return updates;
}

RoundRecord Federation::run_round(Defense& defense) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t round = ++round_;

    RoundRecord rec;
    rec.round = round;
    rec.sampled = sample_clients(cfg_, round, defense.banned());
    for (ClientId id : rec.sampled) {
        if (clients_[static_cast<std::size_t>(id)].malicious) ++rec.malicious_sampled;
    }

    const std::vector<ClientUpdate> updates = train_clients(round, rec.sampled);
    DefenseResult result = defense.aggregate(DefenseContext{round, global_, updates});
    if (result.global) {
        global_ = global_.with_params(std::move(*result.global));
    } else {
        rec.status = "aborted";
        spdlog::error("round {}: defense '{}' returned no model; keeping previous global", round, defense.name());
    }
    rec.aggregated = std::move(result.aggregated);
    rec.excluded = std::move(result.excluded);
    rec.benign_cluster = std::move(result.benign_cluster);
    rec.suspect_cluster = std::move(result.suspect_cluster);
    rec.distilled = result.distilled;

    rec.mta = analysis::mta(global_, test_);
    rec.asr = analysis::asr(global_, triggered_, target_);
    rec.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    spdlog::debug("round {} [{}]: mta={:.4f} asr={:.4f} malicious={}/{}", round, defense.name(), rec.mta, rec.asr,
                  rec.malicious_sampled, rec.sampled.size());
    return rec;
}

std::vector<RoundRecord> run_experiment(Federation& federation, Defense& defense, const RecordSink& sink) {
    std::vector<RoundRecord> records;
    records.reserve(federation.config().rounds);
    for (std::size_t t = 0; t < federation.config().rounds; ++t) {
        records.push_back(federation.run_round(defense));
        if (sink) sink(records.back());
    }
    return records;
}

}  // namespace fedlab::fl
