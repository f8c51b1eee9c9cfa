#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fedlab/common.hpp"

namespace fedlab {

struct LayoutEntry {
    std::string name;
    std::vector<std::size_t> shape;

    std::size_t numel() const;
    bool operator==(const LayoutEntry&) const = default;
};

/// One named tensor produced by FlatParams::unflatten.
struct NamedTensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<Real> values;
};

/// A model's parameters as one contiguous vector plus the layout that folds
/// it back into per-layer tensors. This is the unit every aggregation rule
/// and defense operates on.
class FlatParams {
public:
    FlatParams() = default;
    FlatParams(std::vector<Real> values, std::vector<LayoutEntry> layout);
    /// Anonymous single-tensor layout; handy for aggregation tests.
    explicit FlatParams(std::vector<Real> values);

    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    std::span<const Real> values() const noexcept { return values_; }
    std::span<Real> values() noexcept { return values_; }
    Real operator[](std::size_t i) const { return values_[i]; }
    Real& operator[](std::size_t i) { return values_[i]; }

    const std::vector<LayoutEntry>& layout() const noexcept { return layout_; }

    std::vector<NamedTensor> unflatten() const;
    static FlatParams flatten(const std::vector<NamedTensor>& tensors);

    /// Checkpoint format: one JSON header line describing the layout,
    /// followed by the raw little-endian float64 stream.
    void write(std::ostream& out) const;
    static FlatParams read(std::istream& in);

    bool operator==(const FlatParams&) const = default;

private:
    std::vector<Real> values_;
    std::vector<LayoutEntry> layout_;
};

std::size_t layout_numel(const std::vector<LayoutEntry>& layout);

}  // namespace fedlab
