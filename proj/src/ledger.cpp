#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "fedlab/drop.hpp"

namespace fedlab::drop {

void LedgerConfig::validate() const {
    if (!(penalty > 0.0) || !std::isfinite(penalty)) throw InvalidInput("defense.p must be positive");
    if (!(reward > 0.0) || !std::isfinite(reward)) throw InvalidInput("defense.r must be positive");
    if (ban_enabled && !(ban_threshold > 0.0)) throw InvalidInput("defense.tau_b must be positive when banning is enabled");
}

PenaltyLedger::PenaltyLedger(LedgerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

double PenaltyLedger::score(ClientId id) const {
    const auto it = scores_.find(id);
    return it == scores_.end() ? 0.0 : it->second;
}

PenaltyLedger PenaltyLedger::updated(const ClusterSplit& split) const {
    PenaltyLedger next = *this;
    for (ClientId id : split.suspect) next.scores_[id] = score(id) + cfg_.penalty;
    for (ClientId id : split.benign) next.scores_[id] = std::max(0.0, score(id) - cfg_.reward);
    if (cfg_.ban_enabled) {
        for (const auto& [id, s] : next.scores_) {
            if (s >= cfg_.ban_threshold && next.banned_.insert(id).second) {
                spdlog::info("client {} banned (penalty score {})", id, s);
            }
        }
    }
    return next;
}

std::vector<ClientId> filter_by_ledger(const ClusterSplit& split, const PenaltyLedger& ledger) {
    std::vector<ClientId> kept;
    for (ClientId id : split.benign) {
        if (ledger.score(id) <= 0.0 && !ledger.is_banned(id)) kept.push_back(id);
    }
    if (!kept.empty() || split.benign.empty()) return kept;

    ClientId best = split.benign.front();
    for (ClientId id : split.benign) {
        const double s = ledger.score(id), b = ledger.score(best);
        if (s < b || (s == b && id < best)) best = id;
    }
    spdlog::info("filter_by_ledger: every benign-cluster client carries a penalty; keeping client {}", best);
    return {best};
}

}  // namespace fedlab::drop
