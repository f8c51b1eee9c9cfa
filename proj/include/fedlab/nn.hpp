#pragma once

#include <cstddef>
#include <cstdint>
#include <variant>
#include <vector>

#include "fedlab/common.hpp"
#include "fedlab/dataset.hpp"
#include "fedlab/flat_params.hpp"

namespace fedlab::nn {

// Layer specifications. Activations travel as row-major matrices with one
// sample per row; convolutional layers read a row as (channels, height, width).

struct Dense {
    std::size_t in = 0;
    std::size_t out = 0;
    bool operator==(const Dense&) const = default;
};

/// Stride 1, zero "same" padding, odd square kernel.
struct Conv2d {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t kernel = 3;
    bool operator==(const Conv2d&) const = default;
};

/// 2x2 average pooling, stride 2. Height and width must be even.
struct AvgPool2 {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    bool operator==(const AvgPool2&) const = default;
};

struct Relu {
    bool operator==(const Relu&) const = default;
};

struct Sigmoid {
    bool operator==(const Sigmoid&) const = default;
};

using Layer = std::variant<Dense, Conv2d, AvgPool2, Relu, Sigmoid>;

struct ImageShape {
    std::size_t channels = 1;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t numel() const noexcept { return channels * height * width; }
    bool operator==(const ImageShape&) const = default;
};

class Architecture {
public:
    Architecture() = default;
    /// Validates that consecutive layer dimensions chain.
    Architecture(std::size_t input_dim, std::vector<Layer> layers);

    /// input -> hidden -> classes with a ReLU in between.
    static Architecture mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes);
    /// Two conv(3x3)+ReLU+avgpool stages followed by a dense classifier head.
    static Architecture tiny_cnn(ImageShape image, std::size_t classes, std::size_t channels1 = 8,
                                 std::size_t channels2 = 16);
    /// latent -> hidden (ReLU) -> output (sigmoid), so samples land in [0, 1].
    static Architecture generator(std::size_t latent_dim, std::size_t hidden, std::size_t output_dim);

    std::size_t input_dim() const noexcept { return input_dim_; }
    std::size_t output_dim() const noexcept { return output_dim_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    const std::vector<LayoutEntry>& param_layout() const noexcept { return layout_; }
    std::size_t param_count() const noexcept { return param_count_; }
    /// Offset of layer i's parameters in the flat vector.
    std::size_t param_offset(std::size_t layer) const { return offsets_.at(layer); }

    bool operator==(const Architecture& other) const {
        return input_dim_ == other.input_dim_ && layers_ == other.layers_;
    }

private:
    std::size_t input_dim_ = 0;
    std::size_t output_dim_ = 0;
    std::vector<Layer> layers_;
    std::vector<LayoutEntry> layout_;
    std::vector<std::size_t> offsets_;
    std::size_t param_count_ = 0;
};

/// Saved activations of one forward pass. activations[0] is the input and
/// activations[i + 1] the output of layer i.
struct ForwardTape {
    std::vector<Matrix> activations;
    const Matrix& output() const { return activations.back(); }
};

struct Gradients {
    std::vector<Real> params;
    Matrix input;
};

/// Immutable (architecture, parameters) pair with forward and reverse passes.
class Network {
public:
    Network() = default;
    Network(Architecture arch, FlatParams params);

    /// Weights and biases drawn from uniform(-s, s), s = 1/sqrt(fan_in).
    static Network initialize(Architecture arch, std::uint64_t seed);

    const Architecture& architecture() const noexcept { return arch_; }
    const FlatParams& params() const noexcept { return params_; }
    Network with_params(FlatParams params) const { return Network(arch_, std::move(params)); }

    Matrix forward(const Matrix& batch) const;
    ForwardTape forward_tape(const Matrix& batch) const;
    /// Back-propagates `grad_output` (d loss / d output) through the tape.
    Gradients backward(const ForwardTape& tape, const Matrix& grad_output, bool want_input_grad = true) const;

private:
    Architecture arch_;
    FlatParams params_;
};

class Classifier {
public:
    Classifier() = default;
    explicit Classifier(Network net);

    static Classifier initialize(Architecture arch, std::uint64_t seed) {
        return Classifier(Network::initialize(std::move(arch), seed));
    }

    std::size_t num_classes() const noexcept { return net_.architecture().output_dim(); }
    std::size_t input_dim() const noexcept { return net_.architecture().input_dim(); }
    const Network& network() const noexcept { return net_; }
    const Architecture& architecture() const noexcept { return net_.architecture(); }
    const FlatParams& params() const noexcept { return net_.params(); }
    Classifier with_params(FlatParams params) const { return Classifier(net_.with_params(std::move(params))); }

    /// One logit row per input row.
    Matrix forward(const Matrix& batch) const { return net_.forward(batch); }
    /// Top-1 class per row; ties go to the lowest class index.
    std::vector<int> predict(const Matrix& batch) const;

private:
    Network net_;
};

class Generator {
public:
    Generator() = default;
    Generator(Network net, std::size_t latent_dim);

    static Generator initialize(std::size_t latent_dim, std::size_t hidden, std::size_t output_dim,
                                std::uint64_t seed);

    std::size_t latent_dim() const noexcept { return latent_dim_; }
    std::size_t output_dim() const noexcept { return net_.architecture().output_dim(); }
    const Network& network() const noexcept { return net_; }
    const FlatParams& params() const noexcept { return net_.params(); }
    Generator with_params(FlatParams params) const { return Generator(net_.with_params(std::move(params)), latent_dim_); }

    /// Standard normal latent codes, one per row.
    Matrix sample_latent(std::size_t count, Rng& rng) const;
    Matrix generate(const Matrix& latent) const { return net_.forward(latent); }

private:
    Network net_;
    std::size_t latent_dim_ = 0;
};

struct TrainingConfig {
    double learning_rate = 0.05;
    std::size_t batch_size = 16;
    std::size_t epochs = 1;

    void validate() const;
    bool operator==(const TrainingConfig&) const = default;
};

struct LossAndGrad {
    Real loss = 0;
    Matrix grad;
};

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. the logits.
LossAndGrad softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels);

/// Mean over rows of the l1 distance between logit rows.
Real l1_logit_loss(const Matrix& student, const Matrix& teacher);
/// l1_logit_loss and its (sub)gradient w.r.t. `student`.
LossAndGrad l1_logit_loss_grad(const Matrix& student, const Matrix& teacher);

Matrix softmax(const Matrix& logits);

/// Mini-batch SGD on softmax cross-entropy. Deterministic for a fixed seed.
Classifier train_local(const Classifier& model, const LabeledDataset& data, const TrainingConfig& cfg,
                       std::uint64_t seed);

/// In-place SGD step: params -= lr * grad.
void sgd_step(std::vector<Real>& params, std::span<const Real> grad, double lr);

}  // namespace fedlab::nn
