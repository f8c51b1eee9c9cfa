#include <cmath>

#include <spdlog/spdlog.h>

#include "fedlab/drop.hpp"

namespace fedlab::drop {

void DistillConfig::validate() const {
    if (period == 0) throw InvalidInput("defense.K must be positive");
    if (batch_size == 0) throw InvalidInput("distillation batch size must be positive");
    if (generator_steps == 0 && clone_steps == 0) throw InvalidInput("distillation needs generator or clone steps");
    if (!(clone_lr >= 0.0) || !(generator_lr >= 0.0)) throw InvalidInput("distillation learning rates must be non-negative");
    if (latent_dim == 0 || generator_hidden == 0) throw InvalidInput("generator dimensions must be positive");
}

Matrix ensemble_logits(std::span<const nn::Classifier> models, const Matrix& batch) {
    if (models.empty()) throw InvalidInput("ensemble_logits: no models");
    Matrix sum = models.front().forward(batch);
    for (std::size_t i = 1; i < models.size(); ++i) {
        const Matrix z = models[i].forward(batch);
        if (z.rows() != sum.rows() || z.cols() != sum.cols()) throw ShapeError("ensemble_logits: model output shapes differ");
        sum += z;
    }
    return sum / static_cast<Real>(models.size());
}

DistillResult distill(const nn::Classifier& global, std::span<const nn::Classifier> benign,
                      const nn::Generator& generator, const DistillConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    if (benign.empty()) throw InvalidInput("distill: no benign models");
    if (cfg.query_budget == 0) {
        spdlog::info("distill: query budget is 0, skipping distillation");
        return {global, generator, 0, true};
    }
    if (cfg.clean.empty()) throw InvalidInput("distill: clean seed set is empty");
    if (generator.output_dim() != global.input_dim()) throw ShapeError("distill: generator output != model input");
    if (cfg.clean.dim() != global.input_dim()) throw ShapeError("distill: clean seed dimension != model input");

    Rng rng(seed);
    const std::size_t B = cfg.batch_size;
    const auto K = static_cast<Real>(benign.size());
    std::uniform_int_distribution<std::size_t> pick_clean(0, cfg.clean.size() - 1);

    std::vector<Real> clone_params(global.params().values().begin(), global.params().values().end());
    std::vector<Real> gen_params(generator.params().values().begin(), generator.params().values().end());
    const auto clone_layout = global.architecture().param_layout();
    const auto gen_layout = generator.network().architecture().param_layout();
    nn::Network clone = global.network();
    nn::Network gen = generator.network();

    std::size_t queries = 0;
    while (queries < cfg.query_budget) {
        // Generator: ascend the clone-vs-ensemble l1 disagreement.
        for (std::size_t s = 0; s < cfg.generator_steps && queries < cfg.query_budget; ++s, queries += B) {
            const Matrix z = generator.sample_latent(B, rng);
            const nn::ForwardTape gen_tape = gen.forward_tape(z);
            const Matrix& x = gen_tape.output();
            const nn::ForwardTape clone_tape = clone.forward_tape(x);
            std::vector<nn::ForwardTape> teacher_tapes;
            teacher_tapes.reserve(benign.size());
            Matrix ens = Matrix::Zero(clone_tape.output().rows(), clone_tape.output().cols());
            for (const auto& m : benign) {
                teacher_tapes.push_back(m.network().forward_tape(x));
                ens += teacher_tapes.back().output();
            }
            ens /= K;
            const nn::LossAndGrad lg = nn::l1_logit_loss_grad(clone_tape.output(), ens);
            Matrix dx = clone.backward(clone_tape, lg.grad).input;
            const Matrix teacher_grad = -lg.grad / K;
            for (std::size_t k = 0; k < benign.size(); ++k) {
                dx += benign[k].network().backward(teacher_tapes[k], teacher_grad).input;
            }
            const nn::Gradients g = gen.backward(gen_tape, dx, false);
            nn::sgd_step(gen_params, g.params, -cfg.generator_lr);
            gen = gen.with_params(FlatParams(gen_params, gen_layout));
        }
        // Clone: descend the l1 loss on generated + clean queries.
        for (std::size_t s = 0; s < cfg.clone_steps && queries < cfg.query_budget; ++s, queries += B) {
            const Matrix synthetic = gen.forward(generator.sample_latent(B, rng));
            Matrix x(static_cast<Eigen::Index>(2 * B), synthetic.cols());
            x.topRows(static_cast<Eigen::Index>(B)) = synthetic;
            for (std::size_t i = 0; i < B; ++i) {
                x.row(static_cast<Eigen::Index>(B + i)) = cfg.clean.inputs.row(static_cast<Eigen::Index>(pick_clean(rng)));
            }
            const Matrix ens = ensemble_logits(benign, x);
            const nn::ForwardTape tape = clone.forward_tape(x);
            const nn::LossAndGrad lg = nn::l1_logit_loss_grad(tape.output(), ens);
            const nn::Gradients g = clone.backward(tape, lg.grad, false);
            nn::sgd_step(clone_params, g.params, cfg.clone_lr);
            clone = clone.with_params(FlatParams(clone_params, clone_layout));
        }
    }

    return {nn::Classifier(std::move(clone)), nn::Generator(std::move(gen), generator.latent_dim()), queries, false};
}

}  // namespace fedlab::drop
