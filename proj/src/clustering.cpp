#include <algorithm>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "fedlab/drop.hpp"

namespace fedlab::drop {

namespace {

std::vector<double> centroid(std::span<const FlatParams> points) {
    std::vector<double> mu(points.front().size(), 0.0);
    for (const auto& p : points) {
        if (p.size() != mu.size()) throw ShapeError("ward: update length mismatch");
        for (std::size_t k = 0; k < mu.size(); ++k) mu[k] += static_cast<double>(p[k]);
    }
    for (auto& v : mu) v /= static_cast<double>(points.size());
    return mu;
}

double sum_of_squares(const std::vector<const FlatParams*>& members) {
    const std::size_t dim = members.front()->size();
    std::vector<double> mu(dim, 0.0);
    for (const auto* p : members) {
        for (std::size_t k = 0; k < dim; ++k) mu[k] += static_cast<double>((*p)[k]);
    }
    for (auto& v : mu) v /= static_cast<double>(members.size());
    double sse = 0;
    for (const auto* p : members) {
        for (std::size_t k = 0; k < dim; ++k) {
            const double d = static_cast<double>((*p)[k]) - mu[k];
            sse += d * d;
        }
    }
    return sse;
}

}  // namespace

double ward_distance(std::span<const FlatParams> a, std::span<const FlatParams> b) {
    if (a.empty() || b.empty()) throw InvalidInput("ward_distance: empty cluster");
    const auto mu_a = centroid(a);
    const auto mu_b = centroid(b);
    if (mu_a.size() != mu_b.size()) throw ShapeError("ward_distance: dimension mismatch");
    double sq = 0;
    for (std::size_t k = 0; k < mu_a.size(); ++k) sq += (mu_a[k] - mu_b[k]) * (mu_a[k] - mu_b[k]);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    return na * nb / (na + nb) * sq;
}

ClusterSplit cluster_updates(std::span<const fl::ClientUpdate> updates) {
    if (updates.empty()) throw InvalidInput("cluster_updates: no updates");
    std::vector<const fl::ClientUpdate*> sorted;
    for (const auto& u : updates) sorted.push_back(&u);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->id < b->id; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i]->id == sorted[i - 1]->id) throw InvalidInput("cluster_updates: duplicate client id");
    }

    const std::size_t n = sorted.size();
    if (n == 1) {
        spdlog::info("cluster_updates: single update, treating it as benign");
        return {{sorted.front()->id}, {}};
    }
    const std::size_t dim = sorted.front()->params.size();

    // Pairwise merge costs between singletons: 1*1/2 * ||x_i - x_j||^2.
    std::vector<double> cost(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (sorted[i]->params.size() != dim) throw ShapeError("cluster_updates: update length mismatch");
        for (std::size_t j = i + 1; j < n; ++j) {
            double sq = 0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double d = static_cast<double>(sorted[i]->params[k]) - static_cast<double>(sorted[j]->params[k]);
                sq += d * d;
            }
            cost[i * n + j] = cost[j * n + i] = 0.5 * sq;
        }
    }

    // Each active cluster lives in the slot of its lowest member; `active`
    // stays sorted by that slot.
    std::vector<std::vector<std::size_t>> members(n);
    for (std::size_t i = 0; i < n; ++i) members[i] = {i};
    std::vector<std::size_t> active(n);
    std::iota(active.begin(), active.end(), std::size_t{0});

    while (active.size() > 2) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_a = 0, best_b = 0;
        for (std::size_t x = 0; x < active.size(); ++x) {
            for (std::size_t y = x + 1; y < active.size(); ++y) {
                const double c = cost[active[x] * n + active[y]];
                if (c < best) {
                    best = c;
                    best_a = x;
                    best_b = y;
                }
            }
        }
        const std::size_t a = active[best_a], b = active[best_b];
        const double na = static_cast<double>(members[a].size()), nb = static_cast<double>(members[b].size());
        const double cab = cost[a * n + b];
        // Lance-Williams update for Ward linkage.
        for (std::size_t k : active) {
            if (k == a || k == b) continue;
            const double nk = static_cast<double>(members[k].size());
            const double updated =
                ((nk + na) * cost[k * n + a] + (nk + nb) * cost[k * n + b] - nk * cab) / (nk + na + nb);
            cost[k * n + a] = cost[a * n + k] = updated;
        }
        members[a].insert(members[a].end(), members[b].begin(), members[b].end());
        std::sort(members[a].begin(), members[a].end());
        members[b].clear();
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_b));
    }

    auto collect = [&](std::size_t slot) {
        std::vector<const FlatParams*> pts;
        for (std::size_t i : members[slot]) pts.push_back(&sorted[i]->params);
        return pts;
    };
    std::size_t first = active[0], second = active[1];  // first holds the lowest id
    std::size_t benign = first;
    if (members[second].size() > members[first].size()) {
        benign = second;
    } else if (members[second].size() == members[first].size()) {
        const double s1 = sum_of_squares(collect(first)), s2 = sum_of_squares(collect(second));
        if (s2 < s1) benign = second;
    }
    const std::size_t suspect = benign == first ? second : first;

    ClusterSplit split;
    for (std::size_t i : members[benign]) split.benign.push_back(sorted[i]->id);
    for (std::size_t i : members[suspect]) split.suspect.push_back(sorted[i]->id);
    return split;
}

}  // namespace fedlab::drop
