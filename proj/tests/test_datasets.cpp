#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "fedlab/datasets.hpp"

using namespace fedlab;
using namespace fedlab::data;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("fedlab_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t read_be32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
}

double class_proportion_variance(const LabeledDataset& d, const PartitionPlan& plan) {
    std::vector<double> props;
    for (const auto& idx : plan.assignments) {
        if (idx.empty()) continue;
        std::vector<double> counts(d.num_classes, 0);
        for (auto i : idx) counts[static_cast<std::size_t>(d.labels[i])] += 1;
        for (auto c : counts) props.push_back(c / static_cast<double>(idx.size()));
    }
    const double mean = std::accumulate(props.begin(), props.end(), 0.0) / static_cast<double>(props.size());
    double var = 0;
    for (auto p : props) var += (p - mean) * (p - mean);
    return var / static_cast<double>(props.size());
}

}  // namespace

TEST_SUITE("datasets") {

TEST_CASE("synthetic blobs") {
    SUBCASE("counts") {
        const auto d = synth_blobs(2, 4, 10, 0.1, 1);
        CHECK(d.size() == 20);
        CHECK(d.class_counts() == std::vector<std::size_t>{10, 10});
    }
    SUBCASE("zero spread collapses onto centroids") {
        const auto d = synth_blobs(3, 5, 4, 0.0, 2);
        for (int c = 0; c < 3; ++c) {
            const auto idx = d.indices_of_class(c);
            for (auto i : idx) CHECK(d.inputs.row(static_cast<Eigen::Index>(i)) == d.inputs.row(static_cast<Eigen::Index>(idx[0])));
        }
    }
    SUBCASE("nearest-centroid oracle separates classes") {
        const auto d = synth_blobs(10, 16, 100, 0.05, 3);
        Matrix means = Matrix::Zero(10, 16);
        for (std::size_t i = 0; i < d.size(); ++i) means.row(d.labels[i]) += d.inputs.row(static_cast<Eigen::Index>(i));
        means /= 100.0;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            Eigen::Index best;
            (means.rowwise() - d.inputs.row(static_cast<Eigen::Index>(i))).rowwise().squaredNorm().minCoeff(&best);
            correct += best == d.labels[i];
        }
        CHECK(static_cast<double>(correct) / static_cast<double>(d.size()) >= 0.99);
    }
    SUBCASE("values stay in the unit interval and are seed-deterministic") {
        const auto a = synth_blobs(4, 8, 20, 0.5, 4);
        CHECK(a.inputs.minCoeff() >= 0.0);
        CHECK(a.inputs.maxCoeff() <= 1.0);
        CHECK(a == synth_blobs(4, 8, 20, 0.5, 4));
    }
}

TEST_CASE("IDX reader") {
    const fs::path dir = temp_dir("idx");
    SUBCASE("handcrafted single zero image") {
        write_bytes(dir / "img", {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 0});
        write_bytes(dir / "lab", {0, 0, 8, 1, 0, 0, 0, 1, 3});
        const auto d = load_idx(dir / "img", dir / "lab");
        CHECK(d.size() == 1);
        CHECK(d.dim() == 4);
        CHECK(d.inputs.isZero());
        CHECK(d.labels[0] == 3);
    }
    SUBCASE("truncated file") {
        write_bytes(dir / "img", {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0});
        write_bytes(dir / "lab", {0, 0, 8, 1, 0, 0, 0, 2, 3, 4});
        CHECK_THROWS_AS(load_idx(dir / "img", dir / "lab"), FormatError);
    }
    SUBCASE("bad magic and count mismatch") {
        write_bytes(dir / "img", {0, 0, 8, 2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0});
        write_bytes(dir / "lab", {0, 0, 8, 1, 0, 0, 0, 1, 0});
        CHECK_THROWS_AS(load_idx(dir / "img", dir / "lab"), FormatError);
        write_bytes(dir / "img", {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0});
        write_bytes(dir / "lab", {0, 0, 8, 1, 0, 0, 0, 2, 0, 1});
        CHECK_THROWS_AS(load_idx(dir / "img", dir / "lab"), FormatError);
    }
    SUBCASE("written file: sample count equals independently parsed header") {
        const auto d = synth_blobs(3, 36, 7, 0.2, 5);
        write_idx(d, 6, 6, dir / "img", dir / "lab");
        std::ifstream in(dir / "img", std::ios::binary);
        CHECK(read_be32(in) == 0x803);
        const auto count = read_be32(in);
        CHECK(read_be32(in) == 6);
        CHECK(read_be32(in) == 6);
        const auto back = load_idx(dir / "img", dir / "lab", 3);
        CHECK(back.size() == count);
        CHECK(back.labels == d.labels);
        CHECK((back.inputs - d.inputs).cwiseAbs().maxCoeff() <= 0.5 / 255 + 1e-12);
    }
    fs::remove_all(dir);
}

TEST_CASE("partition") {
    const auto d = synth_blobs(10, 4, 100, 0.1, 6);
    auto covers_all = [&](const PartitionPlan& p) {
        std::vector<int> seen(d.size(), 0);
        for (const auto& a : p.assignments)
            for (auto i : a) ++seen[i];
        return std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; });
    };
    SUBCASE("single client takes everything") {
        const auto p = partition(d, 1, 0.5, 1);
        CHECK(p.assignments[0].size() == d.size());
    }
    SUBCASE("iid sentinel gives uniform class histograms") {
        const auto p = partition(d, 10, kIid, 1);
        CHECK(covers_all(p));
        for (const auto& a : p.assignments) {
            const auto counts = d.subset(a).class_counts();
            for (auto c : counts) CHECK((c >= 9 && c <= 11));
        }
    }
    SUBCASE("smaller alpha disperses class proportions more") {
        const auto p1 = partition(d, 10, 1.0, 7);
        const auto p100 = partition(d, 10, 100.0, 7);
        CHECK(covers_all(p1));
        CHECK(covers_all(p100));
        CHECK(class_proportion_variance(d, p1) > class_proportion_variance(d, p100));
    }
    SUBCASE("invalid alpha") {
        CHECK_THROWS_AS(partition(d, 10, 0.0, 1), InvalidInput);
        CHECK_THROWS_AS(partition(d, 0, 1.0, 1), InvalidInput);
    }
}

TEST_CASE("poisoning") {
    const auto d = synth_blobs(10, 64, 100, 0.2, 8);
    PoisonSpec spec;
    spec.trigger = corner_patch_trigger(1, 8, 8, 3, 1.0);
    spec.victim = 2;
    spec.target = 5;

    SUBCASE("zero rate is the identity") {
        spec.dpr = 0;
        CHECK(poison(d, spec, 1) == d);
    }
    SUBCASE("counts and untouched coordinates") {
        spec.dpr = 0.025;
        const auto p = poison(d, spec, 1);
        CHECK(p.size() == d.size());
        std::size_t changed = 0;
        std::vector<bool> on_trigger(64, false);
        for (const auto& t : spec.trigger) on_trigger[t.index] = true;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const bool differs = p.labels[i] != d.labels[i] ||
                                 p.inputs.row(static_cast<Eigen::Index>(i)) != d.inputs.row(static_cast<Eigen::Index>(i));
            if (!differs) continue;
            ++changed;
            CHECK(d.labels[i] == 2);
            CHECK(p.labels[i] == 5);
            for (Eigen::Index k = 0; k < 64; ++k) {
                if (!on_trigger[static_cast<std::size_t>(k)]) CHECK(p.inputs(static_cast<Eigen::Index>(i), k) == d.inputs(static_cast<Eigen::Index>(i), k));
            }
        }
        CHECK(changed == 25);
    }
    SUBCASE("round half up") {
        CHECK(poison_count(0.0125, 1000) == 13);
        CHECK(poison_count(0.025, 1000) == 25);
        CHECK(poison_count(0.0, 1000) == 0);
        CHECK(poison_count(0.05, 200) == 10);
    }
    SUBCASE("not enough victim samples") {
        spec.dpr = 0.5;
        CHECK_THROWS_AS(poison(d, spec, 1), InvalidInput);
    }
    SUBCASE("validation") {
        spec.dpr = 0.1;
        CHECK_NOTHROW(spec.validate(64, 10));
        spec.target = 2;
        CHECK_THROWS_AS(spec.validate(64, 10), InvalidInput);
        spec.target = 5;
        spec.trigger.push_back({64, 1.0});
        CHECK_THROWS_AS(spec.validate(64, 10), InvalidInput);
    }
    SUBCASE("json round trip") {
        spec.dpr = 0.05;
        CHECK(PoisonSpec::from_json(spec.to_json()) == spec);
    }
}

TEST_CASE("triggered test set") {
    const auto d = synth_blobs(5, 16, 40, 0.2, 9);
    PoisonSpec spec;
    spec.victim = 1;
    spec.target = 3;
    SUBCASE("one triggered sample per victim sample") {
        spec.trigger = {{0, 0.5}};
        const auto t = triggered_testset(d, spec);
        CHECK(t.size() == 40);
        for (auto l : t.labels) CHECK(l == 1);
    }
    SUBCASE("zero trigger leaves inputs unchanged") {
        spec.trigger = {{0, 0.0}, {5, 0.0}};
        const auto t = triggered_testset(d, spec);
        CHECK(t.inputs == d.subset(d.indices_of_class(1)).inputs);
    }
    SUBCASE("values clip at one") {
        spec.trigger = {{3, 5.0}};
        const auto t = triggered_testset(d, spec);
        for (Eigen::Index i = 0; i < t.inputs.rows(); ++i) CHECK(t.inputs(i, 3) == 1.0);
    }
    SUBCASE("no victim samples") {
        spec.victim = 9;
        spec.trigger = {{0, 1.0}};
        CHECK_THROWS_AS(triggered_testset(d, spec), InvalidInput);
    }
}

TEST_CASE("csv export") {
    const auto d = synth_blobs(2, 3, 2, 0.1, 1);
    std::ostringstream s;
    write_csv(d, s);
    const std::string text = s.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
}

}  // TEST_SUITE
