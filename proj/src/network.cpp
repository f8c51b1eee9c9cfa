#include <cmath>
#include <string>

#include "fedlab/nn.hpp"

namespace fedlab::nn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;
using ConstVecMap = Eigen::Map<const RowVector>;

std::size_t conv_patch(const Conv2d& c) { return c.in_channels * c.kernel * c.kernel; }

// Unfolds one (C, H, W) sample into a (C*k*k, H*W) patch matrix.
void im2col(const Real* image, const Conv2d& c, Matrix& cols) {
    const auto H = static_cast<std::ptrdiff_t>(c.height);
    const auto W = static_cast<std::ptrdiff_t>(c.width);
    const auto k = static_cast<std::ptrdiff_t>(c.kernel);
    const std::ptrdiff_t pad = k / 2;
    cols.resize(static_cast<Eigen::Index>(conv_patch(c)), H * W);
    Eigen::Index row = 0;
    for (std::ptrdiff_t ch = 0; ch < static_cast<std::ptrdiff_t>(c.in_channels); ++ch) {
        const Real* plane = image + ch * H * W;
        for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
            for (std::ptrdiff_t kx = 0; kx < k; ++kx, ++row) {
                for (std::ptrdiff_t y = 0; y < H; ++y) {
                    const std::ptrdiff_t sy = y + ky - pad;
                    for (std::ptrdiff_t x = 0; x < W; ++x) {
                        const std::ptrdiff_t sx = x + kx - pad;
                        cols(row, y * W + x) =
                            (sy < 0 || sy >= H || sx < 0 || sx >= W) ? Real(0) : plane[sy * W + sx];
                    }
                }
            }
        }
    }
}

void col2im_add(const Matrix& cols, const Conv2d& c, Real* image) {
    const auto H = static_cast<std::ptrdiff_t>(c.height);
    const auto W = static_cast<std::ptrdiff_t>(c.width);
    const auto k = static_cast<std::ptrdiff_t>(c.kernel);
    const std::ptrdiff_t pad = k / 2;
    Eigen::Index row = 0;
    for (std::ptrdiff_t ch = 0; ch < static_cast<std::ptrdiff_t>(c.in_channels); ++ch) {
        Real* plane = image + ch * H * W;
        for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
            for (std::ptrdiff_t kx = 0; kx < k; ++kx, ++row) {
                for (std::ptrdiff_t y = 0; y < H; ++y) {
                    const std::ptrdiff_t sy = y + ky - pad;
                    if (sy < 0 || sy >= H) continue;
                    for (std::ptrdiff_t x = 0; x < W; ++x) {
                        const std::ptrdiff_t sx = x + kx - pad;
                        if (sx < 0 || sx >= W) continue;
                        plane[sy * W + sx] += cols(row, y * W + x);
                    }
                }
            }
        }
    }
}

std::size_t layer_output_dim(const Layer& layer, std::size_t in) {
    return std::visit(
        overloaded{
            [&](const Dense& d) {
                if (d.in != in) throw ShapeError("dense layer expects " + std::to_string(d.in) + " inputs, got " + std::to_string(in));
                return d.out;
            },
            [&](const Conv2d& c) {
                if (c.in_channels * c.height * c.width != in) throw ShapeError("conv layer input size mismatch");
                if (c.kernel % 2 == 0) throw ShapeError("conv kernel must be odd");
                return c.out_channels * c.height * c.width;
            },
            [&](const AvgPool2& p) {
                if (p.channels * p.height * p.width != in) throw ShapeError("pool layer input size mismatch");
                if (p.height % 2 != 0 || p.width % 2 != 0) throw ShapeError("pool needs even height and width");
                return p.channels * (p.height / 2) * (p.width / 2);
            },
            [&](const Relu&) { return in; },
            [&](const Sigmoid&) { return in; },
        },
        layer);
}

// Parameter tensors (weight, bias) for a layer; empty for parameter-free layers.
std::vector<LayoutEntry> layer_params(const Layer& layer, std::size_t index) {
    const std::string prefix = "layer" + std::to_string(index);
    return std::visit(
        overloaded{
            [&](const Dense& d) {
                return std::vector<LayoutEntry>{{prefix + ".weight", {d.out, d.in}}, {prefix + ".bias", {d.out}}};
            },
            [&](const Conv2d& c) {
                return std::vector<LayoutEntry>{{prefix + ".weight", {c.out_channels, c.in_channels, c.kernel, c.kernel}},
                                                {prefix + ".bias", {c.out_channels}}};
            },
            [](const auto&) { return std::vector<LayoutEntry>{}; },
        },
        layer);
}

std::size_t fan_in(const Layer& layer) {
    return std::visit(overloaded{[](const Dense& d) { return d.in; },
                                 [](const Conv2d& c) { return conv_patch(c); },
                                 [](const auto&) { return std::size_t{0}; }},
                      layer);
}

}  // namespace

Architecture::Architecture(std::size_t input_dim, std::vector<Layer> layers)
    : input_dim_(input_dim), layers_(std::move(layers)) {
    if (input_dim_ == 0) throw ShapeError("architecture: input dimension must be positive");
    std::size_t dim = input_dim_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        dim = layer_output_dim(layers_[i], dim);
        offsets_.push_back(param_count_);
        for (auto& e : layer_params(layers_[i], i)) {
            param_count_ += e.numel();
            layout_.push_back(std::move(e));
        }
    }
    output_dim_ = dim;
}

Architecture Architecture::mlp(std::size_t input_dim, std::size_t hidden, std::size_t classes) {
    return Architecture(input_dim, {Dense{input_dim, hidden}, Relu{}, Dense{hidden, classes}});
}

Architecture Architecture::tiny_cnn(ImageShape image, std::size_t classes, std::size_t channels1,
                                    std::size_t channels2) {
    const std::size_t h1 = image.height / 2, w1 = image.width / 2;
    const std::size_t h2 = h1 / 2, w2 = w1 / 2;
    return Architecture(image.numel(),
                        {Conv2d{image.channels, channels1, image.height, image.width, 3}, Relu{},
                         AvgPool2{channels1, image.height, image.width},
                         Conv2d{channels1, channels2, h1, w1, 3}, Relu{}, AvgPool2{channels2, h1, w1},
                         Dense{channels2 * h2 * w2, classes}});
}

Architecture Architecture::generator(std::size_t latent_dim, std::size_t hidden, std::size_t output_dim) {
    return Architecture(latent_dim, {Dense{latent_dim, hidden}, Relu{}, Dense{hidden, output_dim}, Sigmoid{}});
}

Network::Network(Architecture arch, FlatParams params) : arch_(std::move(arch)), params_(std::move(params)) {
    if (params_.size() != arch_.param_count()) {
        throw ShapeError("network: architecture needs " + std::to_string(arch_.param_count()) +
                         " parameters, got " + std::to_string(params_.size()));
    }
    if (params_.layout() != arch_.param_layout()) {
        params_ = FlatParams(std::vector<Real>(params_.values().begin(), params_.values().end()), arch_.param_layout());
    }
}

Network Network::initialize(Architecture arch, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Real> values(arch.param_count());
    for (std::size_t i = 0; i < arch.layers().size(); ++i) {
        const std::size_t fi = fan_in(arch.layers()[i]);
        if (fi == 0) continue;
        const std::size_t begin = arch.param_offset(i);
        const std::size_t end = i + 1 < arch.layers().size() ? arch.param_offset(i + 1) : arch.param_count();
        std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(double(fi)), 1.0 / std::sqrt(double(fi)));
        for (std::size_t j = begin; j < end; ++j) values[j] = static_cast<Real>(dist(rng));
    }
    auto layout = arch.param_layout();
    return Network(std::move(arch), FlatParams(std::move(values), std::move(layout)));
}

Matrix Network::forward(const Matrix& batch) const {
    return std::move(forward_tape(batch).activations.back());
}

ForwardTape Network::forward_tape(const Matrix& batch) const {
    if (static_cast<std::size_t>(batch.cols()) != arch_.input_dim()) {
        throw ShapeError("forward: batch has " + std::to_string(batch.cols()) + " features, model expects " +
                         std::to_string(arch_.input_dim()));
    }
    ForwardTape tape;
    tape.activations.reserve(arch_.layers().size() + 1);
    tape.activations.push_back(batch);
    const Real* p = params_.values().data();
    const Eigen::Index B = batch.rows();
    for (std::size_t li = 0; li < arch_.layers().size(); ++li) {
        const Matrix& x = tape.activations.back();
        const Real* lp = p + arch_.param_offset(li);
        Matrix y = std::visit(
            overloaded{
                [&](const Dense& d) -> Matrix {
                    ConstMap w(lp, static_cast<Eigen::Index>(d.out), static_cast<Eigen::Index>(d.in));
                    ConstVecMap b(lp + d.out * d.in, static_cast<Eigen::Index>(d.out));
                    Matrix out = x * w.transpose();
                    out.rowwise() += b;
                    return out;
                },
                [&](const Conv2d& c) -> Matrix {
                    const auto patch = static_cast<Eigen::Index>(conv_patch(c));
                    const auto oc = static_cast<Eigen::Index>(c.out_channels);
                    const auto hw = static_cast<Eigen::Index>(c.height * c.width);
                    ConstMap w(lp, oc, patch);
                    const Real* bias = lp + oc * patch;
                    Matrix out(B, oc * hw);
                    Matrix cols;
                    for (Eigen::Index s = 0; s < B; ++s) {
                        im2col(x.row(s).data(), c, cols);
                        MutMap o(out.row(s).data(), oc, hw);
                        o.noalias() = w * cols;
                        for (Eigen::Index ch = 0; ch < oc; ++ch) o.row(ch).array() += bias[ch];
                    }
                    return out;
                },
                [&](const AvgPool2& pl) -> Matrix {
                    const auto H = static_cast<Eigen::Index>(pl.height), W = static_cast<Eigen::Index>(pl.width);
                    const Eigen::Index h2 = H / 2, w2 = W / 2;
                    Matrix out(B, static_cast<Eigen::Index>(pl.channels) * h2 * w2);
                    for (Eigen::Index s = 0; s < B; ++s) {
                        const Real* in = x.row(s).data();
                        Real* o = out.row(s).data();
                        for (Eigen::Index ch = 0; ch < static_cast<Eigen::Index>(pl.channels); ++ch) {
                            const Real* plane = in + ch * H * W;
                            for (Eigen::Index y = 0; y < h2; ++y) {
                                for (Eigen::Index xx = 0; xx < w2; ++xx) {
                                    const Real* t = plane + 2 * y * W + 2 * xx;
                                    o[(ch * h2 + y) * w2 + xx] = Real(0.25) * (t[0] + t[1] + t[W] + t[W + 1]);
                                }
                            }
                        }
                    }
                    return out;
                },
                [&](const Relu&) -> Matrix { return x.cwiseMax(Real(0)); },
                [&](const Sigmoid&) -> Matrix {
                    return x.unaryExpr([](Real v) { return Real(1) / (Real(1) + std::exp(-v)); });
                },
            },
            arch_.layers()[li]);
        tape.activations.push_back(std::move(y));
    }
    return tape;
}

Gradients Network::backward(const ForwardTape& tape, const Matrix& grad_output, bool want_input_grad) const {
    const auto& layers = arch_.layers();
    if (tape.activations.size() != layers.size() + 1) throw ShapeError("backward: tape does not match network");
    if (grad_output.rows() != tape.output().rows() || grad_output.cols() != tape.output().cols()) {
        throw ShapeError("backward: gradient shape does not match output");
    }
    Gradients g;
    g.params.assign(arch_.param_count(), Real(0));
    const Real* p = params_.values().data();
    Matrix grad = grad_output;
    for (std::size_t li = layers.size(); li-- > 0;) {
        const Matrix& x = tape.activations[li];
        const Matrix& y = tape.activations[li + 1];
        const Real* lp = p + arch_.param_offset(li);
        Real* gp = g.params.data() + arch_.param_offset(li);
        const bool need_dx = want_input_grad || li > 0;
        const Eigen::Index B = x.rows();
        std::visit(
            overloaded{
                [&](const Dense& d) {
                    const auto out = static_cast<Eigen::Index>(d.out), in = static_cast<Eigen::Index>(d.in);
                    ConstMap w(lp, out, in);
                    MutMap gw(gp, out, in);
                    Eigen::Map<RowVector> gb(gp + out * in, out);
                    gw.noalias() = grad.transpose() * x;
                    gb = grad.colwise().sum();
                    if (need_dx) grad = grad * w;
                },
                [&](const Conv2d& c) {
                    const auto patch = static_cast<Eigen::Index>(conv_patch(c));
                    const auto oc = static_cast<Eigen::Index>(c.out_channels);
                    const auto hw = static_cast<Eigen::Index>(c.height * c.width);
                    ConstMap w(lp, oc, patch);
                    MutMap gw(gp, oc, patch);
                    Real* gb = gp + oc * patch;
                    Matrix dx = need_dx ? Matrix::Zero(B, x.cols()) : Matrix();
                    Matrix cols, dcols;
                    for (Eigen::Index s = 0; s < B; ++s) {
                        ConstMap go(grad.row(s).data(), oc, hw);
                        im2col(x.row(s).data(), c, cols);
                        gw.noalias() += go * cols.transpose();
                        for (Eigen::Index ch = 0; ch < oc; ++ch) gb[ch] += go.row(ch).sum();
                        if (need_dx) {
                            dcols.noalias() = w.transpose() * go;
                            col2im_add(dcols, c, dx.row(s).data());
                        }
                    }
                    grad = std::move(dx);
                },
                [&](const AvgPool2& pl) {
                    const auto H = static_cast<Eigen::Index>(pl.height), W = static_cast<Eigen::Index>(pl.width);
                    const Eigen::Index h2 = H / 2, w2 = W / 2;
                    Matrix dx(B, x.cols());
                    for (Eigen::Index s = 0; s < B; ++s) {
                        const Real* go = grad.row(s).data();
                        Real* d = dx.row(s).data();
                        for (Eigen::Index ch = 0; ch < static_cast<Eigen::Index>(pl.channels); ++ch) {
                            Real* plane = d + ch * H * W;
                            for (Eigen::Index yy = 0; yy < h2; ++yy) {
                                for (Eigen::Index xx = 0; xx < w2; ++xx) {
                                    const Real v = Real(0.25) * go[(ch * h2 + yy) * w2 + xx];
                                    Real* t = plane + 2 * yy * W + 2 * xx;
                                    t[0] = v;
                                    t[1] = v;
                                    t[W] = v;
                                    t[W + 1] = v;
                                }
                            }
                        }
                    }
                    grad = std::move(dx);
                },
                [&](const Relu&) { grad = (grad.array() * (x.array() > Real(0)).cast<Real>()).matrix(); },
                [&](const Sigmoid&) { grad = grad.cwiseProduct(y.cwiseProduct((Real(1) - y.array()).matrix())); },
            },
            layers[li]);
    }
    if (want_input_grad) g.input = std::move(grad);
    return g;
}

Classifier::Classifier(Network net) : net_(std::move(net)) {}

std::vector<int> Classifier::predict(const Matrix& batch) const {
    const Matrix logits = forward(batch);
    std::vector<int> out(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < logits.cols(); ++c) {
            if (logits(r, c) > logits(r, best)) best = c;
        }
        out[static_cast<std::size_t>(r)] = static_cast<int>(best);
    }
    return out;
}

Generator::Generator(Network net, std::size_t latent_dim) : net_(std::move(net)), latent_dim_(latent_dim) {
    if (net_.architecture().input_dim() != latent_dim_) throw ShapeError("generator: latent dim mismatch");
}

Generator Generator::initialize(std::size_t latent_dim, std::size_t hidden, std::size_t output_dim,
                                std::uint64_t seed) {
    return Generator(Network::initialize(Architecture::generator(latent_dim, hidden, output_dim), seed), latent_dim);
}

Matrix Generator::sample_latent(std::size_t count, Rng& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix z(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(latent_dim_));
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<Real>(normal(rng));
    return z;
}

}  // namespace fedlab::nn
