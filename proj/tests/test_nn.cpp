#include <doctest.h>

#include <random>
#include <sstream>

#include "fedlab/analysis.hpp"
#include "fedlab/datasets.hpp"
#include "fedlab/nn.hpp"
#include "oracles.hpp"

using namespace fedlab;
using namespace fedlab::nn;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Real>(u(rng));
    return m;
}

void check_gradients(const Architecture& arch, std::uint64_t seed, Eigen::Index batch = 3) {
    const auto [ep, ex] = oracle::gradient_errors(arch, seed, batch);
    CHECK(ep <= 1e-4);
    CHECK(ex <= 1e-4);
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("zero-weight dense network gives zero logits") {
    const Architecture arch(4, {Dense{4, 3}});
    const Network net(arch, FlatParams(std::vector<Real>(arch.param_count(), 0), arch.param_layout()));
    Rng rng(1);
    CHECK(net.forward(random_matrix(5, 4, rng)).isZero());
}

TEST_CASE("identity dense layer maps basis vectors to themselves") {
    const Architecture arch(3, {Dense{3, 3}});
    std::vector<Real> p(arch.param_count(), 0);
    for (int i = 0; i < 3; ++i) p[static_cast<std::size_t>(i * 3 + i)] = 1;
    const Network net(arch, FlatParams(p, arch.param_layout()));
    const Matrix eye = Matrix::Identity(3, 3);
    CHECK(net.forward(eye) == eye);
}

TEST_CASE("two-layer forward matches loop oracle") {
    const Architecture arch = Architecture::mlp(6, 5, 4);
    const Network net = Network::initialize(arch, 42);
    Rng rng(42);
    const Matrix x = random_matrix(7, 6, rng);
    const auto v = oracle::to_vec(net.params());
    const std::vector<double> w1(v.begin(), v.begin() + 30), b1(v.begin() + 30, v.begin() + 35);
    const std::vector<double> w2(v.begin() + 35, v.begin() + 55), b2(v.begin() + 55, v.end());
    Matrix h = oracle::dense_loops(x, w1, b1, 6, 5);
    h = h.cwiseMax(Real(0));
    const Matrix expected = oracle::dense_loops(h, w2, b2, 5, 4);
    CHECK((net.forward(x) - expected).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("convolution matches loop oracle") {
    const Architecture arch(2 * 5 * 4, {Conv2d{2, 3, 5, 4, 3}});
    const Network net = Network::initialize(arch, 9);
    Rng rng(9);
    const Matrix x = random_matrix(2, 40, rng);
    const auto v = oracle::to_vec(net.params());
    const std::vector<double> w(v.begin(), v.begin() + 54), b(v.begin() + 54, v.end());
    CHECK((net.forward(x) - oracle::conv_loops(x, w, b, 2, 3, 5, 4, 3)).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("layer gradients match finite differences") {
    SUBCASE("dense") {
        for (std::uint64_t s = 0; s < 50; ++s) check_gradients(Architecture(5, {Dense{5, 4}}), s);
    }
    SUBCASE("conv") {
        for (std::uint64_t s = 0; s < 50; ++s) check_gradients(Architecture(2 * 4 * 4, {Conv2d{2, 2, 4, 4, 3}}), s, 2);
    }
    SUBCASE("avgpool") {
        for (std::uint64_t s = 0; s < 50; ++s) {
            check_gradients(Architecture(2 * 4 * 6, {Conv2d{2, 2, 4, 6, 1}, AvgPool2{2, 4, 6}}), s, 2);
        }
    }
    SUBCASE("relu") {
        for (std::uint64_t s = 0; s < 50; ++s) check_gradients(Architecture(6, {Dense{6, 5}, Relu{}, Dense{5, 3}}), s);
    }
    SUBCASE("sigmoid") {
        for (std::uint64_t s = 0; s < 50; ++s) check_gradients(Architecture(6, {Dense{6, 5}, Sigmoid{}, Dense{5, 3}}), s);
    }
    SUBCASE("tiny cnn and generator") {
        for (std::uint64_t s = 0; s < 5; ++s) {
            check_gradients(Architecture::tiny_cnn({1, 4, 4}, 3, 2, 3), s, 2);
            check_gradients(Architecture::generator(4, 6, 5), s, 2);
        }
    }
}

TEST_CASE("cross-entropy gradient matches finite differences") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix z = random_matrix(1, 5, rng, -3, 3);
        const std::vector<int> y{trial % 5};
        const LossAndGrad lg = softmax_cross_entropy(z, y);
        auto f = [&](const oracle::Vec& v) {
            Matrix zi(1, 5);
            for (int i = 0; i < 5; ++i) zi(0, i) = static_cast<Real>(v[static_cast<std::size_t>(i)]);
            return static_cast<double>(softmax_cross_entropy(zi, y).loss);
        };
        const oracle::Vec num = oracle::numeric_grad(f, oracle::Vec(z.data(), z.data() + 5));
        CHECK(oracle::relative_error(oracle::Vec(lg.grad.data(), lg.grad.data() + 5), num) <= 1e-4);
    }
}

TEST_CASE("l1 logit loss") {
    Matrix a(1, 2), b(1, 2);
    a << 1, 2;
    b << 3, 4;
    CHECK(l1_logit_loss(a, a) == 0.0);
    CHECK(l1_logit_loss(a, b) == doctest::Approx(4.0));

    Rng rng(5);
    const Matrix s = random_matrix(6, 4, rng), t = random_matrix(6, 4, rng);
    double loop = 0;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 4; ++j) loop += std::abs(double(s(i, j)) - double(t(i, j)));
    CHECK(std::abs(l1_logit_loss(s, t) - loop / 6) <= 1e-9);
    CHECK_THROWS_AS(l1_logit_loss(s, Matrix(6, 3)), ShapeError);
}

TEST_CASE("local training") {
    const LabeledDataset blobs = data::synth_blobs(2, 8, 50, 0.1, 11);
    const Classifier init = Classifier::initialize(Architecture::mlp(8, 16, 2), 11);

    SUBCASE("zero learning rate leaves parameters unchanged") {
        const Classifier out = train_local(init, blobs, {0.0, 8, 3}, 1);
        CHECK(out.params() == init.params());
    }
    SUBCASE("separable blobs are learned") {
        const Classifier out = train_local(init, blobs, {0.1, 8, 5}, 1);
        CHECK(analysis::mta(out, blobs) >= 0.95);
    }
    SUBCASE("invalid inputs") {
        CHECK_THROWS_AS(train_local(init, LabeledDataset{Matrix(0, 8), {}, 2}, {0.1, 8, 1}, 1), InvalidInput);
        CHECK_THROWS_AS(train_local(init, blobs, {0.1, 0, 1}, 1), InvalidInput);
        LabeledDataset bad = blobs;
        bad.labels[0] = 7;
        CHECK_THROWS(train_local(init, bad, {0.1, 8, 1}, 1));
    }
    SUBCASE("deterministic for a fixed seed") {
        CHECK(train_local(init, blobs, {0.1, 8, 2}, 5).params() == train_local(init, blobs, {0.1, 8, 2}, 5).params());
    }
}

TEST_CASE("flat params round-trip") {
    const Network net = Network::initialize(Architecture::tiny_cnn({1, 4, 4}, 3, 2, 2), 2);
    std::stringstream buf;
    net.params().write(buf);
    CHECK(FlatParams::read(buf) == net.params());
    CHECK(FlatParams::flatten(net.params().unflatten()) == net.params());
    CHECK(layout_numel(net.params().layout()) == net.params().size());
    CHECK_THROWS_AS(FlatParams(std::vector<Real>(3), {{"w", {2, 2}}}), ShapeError);
}

}  // TEST_SUITE
