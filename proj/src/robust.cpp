#include "fedlab/robust.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace fedlab::robust {

FlatParams median_agg(std::span<const FlatParams> updates) {
    if (updates.empty()) throw InvalidInput("median: no updates");
    const std::size_t n = updates.size();
    const std::size_t dim = updates.front().size();
    for (const auto& u : updates) {
        if (u.size() != dim) throw ShapeError("median: update length mismatch");
    }
    std::vector<Real> column(n);
    std::vector<Real> out(dim);
    for (std::size_t k = 0; k < dim; ++k) {
        for (std::size_t i = 0; i < n; ++i) column[i] = updates[i][k];
        auto mid = column.begin() + static_cast<std::ptrdiff_t>(n / 2);
        std::nth_element(column.begin(), mid, column.end());
        if (n % 2 == 1) {
            out[k] = *mid;
        } else {
            const Real upper = *mid;
            const Real lower = *std::max_element(column.begin(), mid);
            out[k] = (lower + upper) / Real(2);
        }
    }
    return FlatParams(std::move(out), updates.front().layout());
}

KrumResult multi_krum(std::span<const fl::ClientUpdate> updates, const KrumParams& p) {
    const std::size_t n = updates.size();
    if (n < p.f + 3) {
        throw InvalidInput("multi-krum: need n >= f + 3 (n=" + std::to_string(n) + ", f=" + std::to_string(p.f) + ")");
    }
    if (p.m == 0 || p.m > n) throw InvalidInput("multi-krum: m must be in [1, n]");
    const std::size_t dim = updates.front().params.size();
    for (const auto& u : updates) {
        if (u.params.size() != dim) throw ShapeError("multi-krum: update length mismatch");
    }

    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = 0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double diff = static_cast<double>(updates[i].params[k]) - static_cast<double>(updates[j].params[k]);
                d += diff * diff;
            }
            dist[i][j] = dist[j][i] = d;
        }
    }

    const std::size_t neighbours = n - p.f - 2;
    KrumResult out;
    out.scores.resize(n);
    std::vector<double> row;
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) row.push_back(dist[i][j]);
        }
        std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(neighbours), row.end());
        out.scores[i] = std::accumulate(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(neighbours), 0.0);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (out.scores[a] != out.scores[b]) return out.scores[a] < out.scores[b];
        return updates[a].id < updates[b].id;
    });
    order.resize(p.m);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return updates[a].id < updates[b].id; });

    std::vector<FlatParams> chosen;
    for (std::size_t i : order) {
        out.selected.push_back(updates[i].id);
        chosen.push_back(updates[i].params);
    }
    out.aggregate = fl::fedavg(chosen);
    return out;
}

fl::DefenseResult MedianDefense::aggregate(const fl::DefenseContext& ctx) {
    std::vector<FlatParams> params;
    fl::DefenseResult r;
    for (const auto& u : ctx.updates) {
        params.push_back(u.params);
        r.aggregated.push_back(u.id);
    }
    r.global = median_agg(params);
    return r;
}

fl::DefenseResult MultiKrumDefense::aggregate(const fl::DefenseContext& ctx) {
    const std::size_t n = ctx.updates.size();
    const std::size_t m = m_ == 0 ? (n > f_ ? n - f_ : 1) : std::min(m_, n);
    KrumResult k = multi_krum(ctx.updates, KrumParams{f_, m});
    fl::DefenseResult r;
    r.global = std::move(k.aggregate);
    r.aggregated = k.selected;
    for (const auto& u : ctx.updates) {
        if (!std::binary_search(k.selected.begin(), k.selected.end(), u.id)) r.excluded.push_back(u.id);
    }
    return r;
}

}  // namespace fedlab::robust
