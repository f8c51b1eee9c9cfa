#include <doctest.h>

#include <random>

#include "fedlab/analysis.hpp"
#include "fedlab/danger_zone.hpp"
#include "oracles.hpp"

using namespace fedlab;
using namespace fedlab::analysis;

namespace {

MajorityQuery q(double rho, std::size_t c, std::size_t n = 100) { return {rho, c, n}; }

// Dense classifier with zero weights and a bias that makes `cls` the argmax.
nn::Classifier constant_predictor(std::size_t dim, std::size_t classes, int cls) {
    const auto arch = nn::Architecture(dim, {nn::Dense{dim, classes}});
    std::vector<Real> p(arch.param_count(), 0);
    p[dim * classes + static_cast<std::size_t>(cls)] = 1;
    return nn::Classifier(nn::Network(arch, FlatParams(p, arch.param_layout())));
}

fl::RoundRecord rec(double mta, double asr) {
    fl::RoundRecord r;
    r.mta = mta;
    r.asr = asr;
    return r;
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("chernoff bound") {
    CHECK(chernoff_majority_bound(q(0.4, 20)).value == doctest::Approx(0.3351673640084992).epsilon(1e-12));
    CHECK(chernoff_majority_bound(q(0.5, 20)).value == 0.0);
    CHECK(chernoff_majority_bound(q(0.1, 100)).value == doctest::Approx(1.0));
    CHECK(chernoff_majority_bound(q(0.0, 10)).value == 0.0);
    CHECK(chernoff_majority_bound(q(0.0, 10)).degenerate);
    CHECK(chernoff_majority_bound(q(1.0, 10)).value == 1.0);
    CHECK_FALSE(chernoff_majority_bound(q(0.3, 10)).degenerate);
}

TEST_CASE("exact majority probability") {
    CHECK(exact_majority_prob(q(0.4, 20), SamplingModel::Binomial) == doctest::Approx(0.24466279668360685).epsilon(1e-10));
    CHECK(exact_majority_prob(q(0.4, 20), SamplingModel::Hypergeometric) ==
          doctest::Approx(0.22097998866696353).epsilon(1e-10));
    CHECK(exact_majority_prob(q(0.0, 20), SamplingModel::Binomial) == 0.0);
    CHECK(exact_majority_prob(q(0.0, 20), SamplingModel::Hypergeometric) == 0.0);
    CHECK(exact_majority_prob(q(1.0, 20), SamplingModel::Binomial) == 1.0);
    for (double rho : {0.05, 0.2, 0.35, 0.5, 0.7}) {
        for (std::size_t c : {1u, 5u, 10u, 21u, 40u}) {
            CHECK(exact_majority_prob(q(rho, c), SamplingModel::Binomial) ==
                  doctest::Approx(oracle::binomial_tail(rho, c)).epsilon(1e-9));
            const auto k = static_cast<std::size_t>(std::floor(rho * 100 + 0.5));
            CHECK(exact_majority_prob(q(rho, c), SamplingModel::Hypergeometric) ==
                  doctest::Approx(oracle::hypergeometric_tail(100, k, c)).epsilon(1e-9));
        }
    }
    CHECK_THROWS_AS(exact_majority_prob(q(1.2, 20), SamplingModel::Binomial), InvalidInput);
    CHECK_THROWS_AS(exact_majority_prob(q(0.2, 0), SamplingModel::Binomial), InvalidInput);
    CHECK_THROWS_AS(exact_majority_prob(q(0.2, 20, 10), SamplingModel::Hypergeometric), InvalidInput);
}

TEST_CASE("normal approximation") {
    CHECK(normal_majority_approx(q(0.5, 20)) == 0.5);
    CHECK(normal_majority_approx(q(0.4, 20)) == doctest::Approx(0.18554668476134878).epsilon(1e-12));
    CHECK(normal_majority_approx(q(0.6, 1000, 2000)) >= 1 - 1e-6);
    double prev = 0;
    for (double rho = 0.01; rho < 1.0; rho += 0.01) {
        const double v = normal_majority_approx(q(rho, 20));
        CHECK(v >= prev);
        prev = v;
    }
    CHECK(standard_normal_cdf(0) == 0.5);
    CHECK(standard_normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
}

TEST_CASE("main task accuracy") {
    const auto data = data::synth_blobs(10, 4, 10, 0.1, 1);
    CHECK(mta(constant_predictor(4, 10, 3), data) == doctest::Approx(0.1));

    // Memorizer: one-hot inputs mapped by an identity layer.
    LabeledDataset onehot{Matrix::Identity(5, 5), {0, 1, 2, 3, 4}, 5};
    const auto arch = nn::Architecture(5, {nn::Dense{5, 5}});
    std::vector<Real> p(arch.param_count(), 0);
    for (int i = 0; i < 5; ++i) p[static_cast<std::size_t>(i * 6)] = 1;
    const nn::Classifier memo(nn::Network(arch, FlatParams(p, arch.param_layout())));
    CHECK(mta(memo, onehot) == 1.0);

    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto m = nn::Classifier::initialize(nn::Architecture::mlp(4, 5, 10), s);
        const auto pred = m.predict(data.inputs);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < data.size(); ++i) hits += pred[i] == data.labels[i];
        CHECK(mta(m, data) == static_cast<double>(hits) / static_cast<double>(data.size()));
    }
    CHECK_THROWS_AS(mta(memo, LabeledDataset{Matrix(0, 5), {}, 5}), InvalidInput);
}

TEST_CASE("attack success rate") {
    const auto data = data::synth_blobs(3, 4, 10, 0.1, 1);
    CHECK(asr(constant_predictor(4, 3, 2), data, 2) == 1.0);
    CHECK(asr(constant_predictor(4, 3, 1), data, 2) == 0.0);

    // Predicts class 1 iff x0 > x1.
    const auto arch = nn::Architecture(2, {nn::Dense{2, 2}});
    const nn::Classifier rule(nn::Network(arch, FlatParams({0, 0, 1, -1, 0, 0}, arch.param_layout())));
    Matrix x(5, 2);
    x << 1, 0, 0, 1, 2, 1, 0.5, 0.6, 3, -1;
    LabeledDataset five{x, {0, 0, 0, 0, 0}, 2};
    CHECK(asr(rule, five, 1) == doctest::Approx(3.0 / 5.0));
}

TEST_CASE("consistency statistic") {
    std::vector<fl::RoundRecord> low{rec(0.1, 0.9), rec(0.5, 0.9)};
    const auto none = consistency_stat(low, 0.8);
    CHECK_FALSE(none.min_asr.has_value());
    CHECK(none.qualifying_rounds == 0);

    std::vector<fl::RoundRecord> one{rec(0.5, 0.9), rec(0.85, 0.3)};
    const auto s = consistency_stat(one, 0.8);
    CHECK(*s.min_asr == 0.3);
    CHECK(s.qualifying_rounds == 1);

    Rng rng(6);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<fl::RoundRecord> ten;
    for (int i = 0; i < 10; ++i) ten.push_back(rec(u(rng), u(rng)));
    double best = 2;
    std::size_t k = 0;
    for (const auto& r : ten) {
        if (r.mta >= 0.5) {
            ++k;
            best = std::min(best, r.asr);
        }
    }
    const auto got = consistency_stat(ten, 0.5);
    CHECK(got.qualifying_rounds == k);
    CHECK(*got.min_asr == best);
}

TEST_CASE("grid spec") {
    const auto g = GridSpec::from_json(nlohmann::json{{"lr", {0.01, 0.5}}, {"batch_size", {8, 64}}, {"epochs", {1}}});
    const auto cells = g.cells();
    REQUIRE(cells.size() == 4);
    CHECK(cells[0] == nn::TrainingConfig{0.01, 8, 1});
    CHECK(cells[1] == nn::TrainingConfig{0.01, 64, 1});
    CHECK(cells[3] == nn::TrainingConfig{0.5, 64, 1});
    CHECK_THROWS(GridSpec::from_json(nlohmann::json{{"lr", nlohmann::json::array()}, {"batch_size", {8}}, {"epochs", {1}}}));
    CHECK_THROWS(GridSpec::from_json(nlohmann::json{{"lr", {0.1}}, {"batch_size", {0}}, {"epochs", {1}}}));
    CHECK_THROWS(GridSpec::from_json(nlohmann::json{{"lr", {0.1}}, {"batch_size", {8}}, {"epochs", {1}}, {"x", 1}}));
}

}  // TEST_SUITE
