#pragma once

#include <cstddef>
#include <vector>

#include "fedlab/common.hpp"

namespace fedlab {

/// Rows of `inputs` are samples with features in [0, 1]; `labels[i]` is the
/// class of row i.
struct LabeledDataset {
    Matrix inputs;
    std::vector<int> labels;
    std::size_t num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return static_cast<std::size_t>(inputs.cols()); }
    bool empty() const noexcept { return labels.empty(); }

    /// Throws InvalidInput when rows and labels disagree or a label is out of range.
    void validate() const;

    LabeledDataset subset(const std::vector<std::size_t>& indices) const;
    std::vector<std::size_t> class_counts() const;
    std::vector<std::size_t> indices_of_class(int label) const;

    bool operator==(const LabeledDataset& other) const;
};

LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b);

}  // namespace fedlab
