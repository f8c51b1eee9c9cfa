#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedlab/nn.hpp"

namespace fedlab::nn {

void TrainingConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw InvalidInput("training.lr must be a finite non-negative number");
    }
    if (batch_size == 0) throw InvalidInput("training.batch_size must be positive");
    if (epochs == 0) throw InvalidInput("training.epochs must be positive");
}

Matrix softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const Real m = logits.row(r).maxCoeff();
        auto e = (logits.row(r).array() - m).exp();
        out.row(r) = e / e.sum();
    }
    return out;
}

LossAndGrad softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
    if (static_cast<std::size_t>(logits.rows()) != labels.size()) {
        throw ShapeError("cross entropy: logits rows != label count");
    }
    LossAndGrad out;
    out.grad = softmax(logits);
    const Real inv_b = Real(1) / static_cast<Real>(std::max<Eigen::Index>(logits.rows(), 1));
    Real loss = 0;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const int y = labels[static_cast<std::size_t>(r)];
        if (y < 0 || y >= logits.cols()) throw InvalidInput("cross entropy: label out of range");
        loss -= std::log(std::max(out.grad(r, y), std::numeric_limits<Real>::min()));
        out.grad(r, y) -= Real(1);
    }
    out.grad *= inv_b;
    out.loss = loss * inv_b;
    return out;
}

Real l1_logit_loss(const Matrix& student, const Matrix& teacher) {
    if (student.rows() != teacher.rows() || student.cols() != teacher.cols()) {
        throw ShapeError("l1 logit loss: shape mismatch");
    }
    if (student.rows() == 0) return Real(0);
    return (student - teacher).cwiseAbs().sum() / static_cast<Real>(student.rows());
}

LossAndGrad l1_logit_loss_grad(const Matrix& student, const Matrix& teacher) {
    LossAndGrad out;
    out.loss = l1_logit_loss(student, teacher);
    const Real inv_b = Real(1) / static_cast<Real>(std::max<Eigen::Index>(student.rows(), 1));
    out.grad = (student - teacher).unaryExpr([inv_b](Real d) {
        return d > 0 ? inv_b : (d < 0 ? -inv_b : Real(0));
    });
    return out;
}

void sgd_step(std::vector<Real>& params, std::span<const Real> grad, double lr) {
    if (params.size() != grad.size()) throw ShapeError("sgd: gradient size mismatch");
    const auto step = static_cast<Real>(lr);
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= step * grad[i];
}

Classifier train_local(const Classifier& model, const LabeledDataset& data, const TrainingConfig& cfg,
                       std::uint64_t seed) {
    if (data.empty()) throw InvalidInput("train_local: empty dataset");
    cfg.validate();
    data.validate();
    if (data.dim() != model.input_dim()) throw ShapeError("train_local: data dimension does not match model input");
    for (int y : data.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= model.num_classes()) {
            throw InvalidInput("train_local: label outside the model's class range");
        }
    }

    Rng rng(seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<Real> params(model.params().values().begin(), model.params().values().end());
    Network net = model.network();
    const auto layout = net.architecture().param_layout();

    Matrix batch;
    std::vector<int> labels;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            batch.resize(static_cast<Eigen::Index>(end - start), data.inputs.cols());
            labels.resize(end - start);
            for (std::size_t i = start; i < end; ++i) {
                batch.row(static_cast<Eigen::Index>(i - start)) = data.inputs.row(static_cast<Eigen::Index>(order[i]));
                labels[i - start] = data.labels[order[i]];
            }
            const ForwardTape tape = net.forward_tape(batch);
            const LossAndGrad lg = softmax_cross_entropy(tape.output(), labels);
            const Gradients g = net.backward(tape, lg.grad, false);
            sgd_step(params, g.params, cfg.learning_rate);
            net = net.with_params(FlatParams(params, layout));
        }
    }
    return Classifier(std::move(net));
}

}  // namespace fedlab::nn
