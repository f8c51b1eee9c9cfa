#include <algorithm>
#include <set>

#include "fedlab/drop.hpp"

namespace fedlab::drop {

PipelineResult droplet_pipeline(std::span<const fl::ClientUpdate> updates, const PenaltyLedger& ledger,
                                std::size_t /*round*/) {
    PipelineResult out;
    out.split = cluster_updates(updates);
    out.ledger = update_ledger(ledger, out.split);
    out.survivors = filter_by_ledger(out.split, out.ledger);

    std::vector<FlatParams> kept;
    for (const auto& u : updates) {
        if (std::binary_search(out.survivors.begin(), out.survivors.end(), u.id)) kept.push_back(u.params);
    }
    out.global = fl::fedavg(kept);
    return out;
}

PipelineResult drop_pipeline(std::span<const fl::ClientUpdate> updates, const PenaltyLedger& ledger,
                             const nn::Classifier& global, const nn::Generator& generator, const DistillConfig& cfg,
                             std::size_t round, std::uint64_t seed) {
    PipelineResult out = droplet_pipeline(updates, ledger, round);
    if (cfg.period == 0 || round % cfg.period != 0) return out;

    std::vector<nn::Classifier> benign;
    for (const auto& u : updates) {
        if (std::binary_search(out.survivors.begin(), out.survivors.end(), u.id)) benign.push_back(global.with_params(u.params));
    }
    const nn::Classifier aggregate = global.with_params(out.global);
    DistillResult d = distill(aggregate, benign, generator, cfg, seed);
    out.global = d.model.params();
    out.distilled = !d.skipped;
    out.generator = std::move(d.generator);
    return out;
}

namespace {

fl::DefenseResult to_defense_result(PipelineResult& p, std::span<const fl::ClientUpdate> updates) {
    fl::DefenseResult r;
    r.aggregated = p.survivors;
    for (const auto& u : updates) {
        if (!std::binary_search(p.survivors.begin(), p.survivors.end(), u.id)) r.excluded.push_back(u.id);
    }
    std::sort(r.excluded.begin(), r.excluded.end());
    r.benign_cluster = p.split.benign;
    r.suspect_cluster = p.split.suspect;
    r.distilled = p.distilled;
    r.global = std::move(p.global);
    return r;
}

}  // namespace

fl::DefenseResult DropletDefense::aggregate(const fl::DefenseContext& ctx) {
    PipelineResult p = droplet_pipeline(ctx.updates, ledger_, ctx.round);
    ledger_ = p.ledger;
    return to_defense_result(p, ctx.updates);
}

DropDefense::DropDefense(LedgerConfig ledger, DistillConfig distill, std::size_t input_dim, std::uint64_t seed)
    : DropletDefense(ledger),
      distill_(std::move(distill)),
      generator_(nn::Generator::initialize(distill_.latent_dim, distill_.generator_hidden, input_dim,
                                           derive_seed(seed, stream::kGenerator))),
      seed_(seed) {
    distill_.validate();
}

fl::DefenseResult DropDefense::aggregate(const fl::DefenseContext& ctx) {
    PipelineResult p = drop_pipeline(ctx.updates, ledger_, ctx.global, generator_, distill_, ctx.round,
                                     derive_seed(seed_, stream::kDistill, ctx.round));
    ledger_ = p.ledger;
    if (p.generator) generator_ = std::move(*p.generator);
    return to_defense_result(p, ctx.updates);
}

}  // namespace fedlab::drop
