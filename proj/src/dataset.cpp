#include "fedlab/dataset.hpp"

#include <string>

namespace fedlab {

void LabeledDataset::validate() const {
    if (static_cast<std::size_t>(inputs.rows()) != labels.size()) {
        throw InvalidInput("dataset: " + std::to_string(inputs.rows()) + " rows but " +
                           std::to_string(labels.size()) + " labels");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw InvalidInput("dataset: label " + std::to_string(y) + " outside [0, " +
                               std::to_string(num_classes) + ")");
        }
    }
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
    LabeledDataset out;
    out.num_classes = num_classes;
    out.inputs.resize(static_cast<Eigen::Index>(indices.size()), inputs.cols());
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= size()) throw InvalidInput("dataset subset: index out of range");
        out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(static_cast<Eigen::Index>(indices[i]));
        out.labels.push_back(labels[indices[i]]);
    }
    return out;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
    std::vector<std::size_t> counts(num_classes, 0);
    for (int y : labels) ++counts.at(static_cast<std::size_t>(y));
    return counts;
}

std::vector<std::size_t> LabeledDataset::indices_of_class(int label) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == label) out.push_back(i);
    }
    return out;
}

bool LabeledDataset::operator==(const LabeledDataset& other) const {
    return num_classes == other.num_classes && labels == other.labels && inputs.rows() == other.inputs.rows() &&
           inputs.cols() == other.inputs.cols() && inputs == other.inputs;
}

LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    if (a.inputs.cols() != b.inputs.cols()) throw ShapeError("concat: feature dimension mismatch");
    LabeledDataset out;
    out.num_classes = std::max(a.num_classes, b.num_classes);
    out.inputs.resize(a.inputs.rows() + b.inputs.rows(), a.inputs.cols());
    out.inputs.topRows(a.inputs.rows()) = a.inputs;
    out.inputs.bottomRows(b.inputs.rows()) = b.inputs;
    out.labels = a.labels;
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    return out;
}

}  // namespace fedlab
