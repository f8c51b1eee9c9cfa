#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "fedlab/federation.hpp"

namespace fedlab::robust {

/// Coordinate-wise median; even counts average the two middle values.
FlatParams median_agg(std::span<const FlatParams> updates);

struct KrumParams {
    /// Assumed number of Byzantine updates.
    std::size_t f = 0;
    /// Number of updates kept.
    std::size_t m = 1;
};

struct KrumResult {
    std::vector<ClientId> selected;
    std::vector<double> scores;  // aligned with the input order
    FlatParams aggregate;
};

/// score(i) = sum of squared distances to the n - f - 2 nearest other
/// updates; the m lowest scores are averaged. Ties go to the lower client id.
KrumResult multi_krum(std::span<const fl::ClientUpdate> updates, const KrumParams& p);

class MedianDefense final : public fl::Defense {
public:
    std::string name() const override { return "median"; }
    fl::DefenseResult aggregate(const fl::DefenseContext& ctx) override;
};

class MultiKrumDefense final : public fl::Defense {
public:
    /// m = 0 means "n - f" for whatever n the round delivers.
    MultiKrumDefense(std::size_t f, std::size_t m) : f_(f), m_(m) {}
    std::string name() const override { return "multikrum"; }
    fl::DefenseResult aggregate(const fl::DefenseContext& ctx) override;

private:
    std::size_t f_;
    std::size_t m_;
};

}  // namespace fedlab::robust
