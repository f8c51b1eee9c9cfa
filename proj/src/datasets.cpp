#include "fedlab/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>

#include <json.hpp>

namespace fedlab::data {

Matrix blob_centroids(std::size_t classes, std::size_t dim, std::uint64_t seed) {
    Rng rng(derive_seed(seed, stream::kData, 0));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Matrix centroids(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < centroids.size(); ++i) centroids.data()[i] = static_cast<Real>(unit(rng));
    return centroids;
}

LabeledDataset synth_blobs(std::size_t classes, std::size_t dim, std::size_t per_class, double spread,
                           std::uint64_t seed) {
    if (classes < 2) throw InvalidInput("synth_blobs: need at least 2 classes");
    if (per_class < 1) throw InvalidInput("synth_blobs: per_class must be at least 1");
    if (dim < 1) throw InvalidInput("synth_blobs: dim must be at least 1");
    if (!(spread >= 0.0)) throw InvalidInput("synth_blobs: spread must be non-negative");

    const Matrix centroids = blob_centroids(classes, dim, seed);
    Rng rng(derive_seed(seed, stream::kData, 1));
    std::normal_distribution<double> noise(0.0, 1.0);

    LabeledDataset out;
    out.num_classes = classes;
    out.inputs.resize(static_cast<Eigen::Index>(classes * per_class), static_cast<Eigen::Index>(dim));
    out.labels.reserve(classes * per_class);
    Eigen::Index row = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i, ++row) {
            for (Eigen::Index d = 0; d < static_cast<Eigen::Index>(dim); ++d) {
                const double v = centroids(static_cast<Eigen::Index>(c), d) + spread * noise(rng);
                out.inputs(row, d) = static_cast<Real>(std::clamp(v, 0.0, 1.0));
            }
            out.labels.push_back(static_cast<int>(c));
        }
    }
    return out;
}

std::pair<LabeledDataset, LabeledDataset> split_per_class(const LabeledDataset& data, std::size_t first_per_class) {
    std::vector<std::size_t> first, rest;
    std::vector<std::size_t> seen(data.num_classes, 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        auto& n = seen[static_cast<std::size_t>(data.labels[i])];
        (n++ < first_per_class ? first : rest).push_back(i);
    }
    return {data.subset(first), data.subset(rest)};
}

// ---------------------------------------------------------------------------
// IDX

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError(std::string("idx: truncated header in ") + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        std::optional<std::size_t> num_classes) {
    std::ifstream img(images, std::ios::binary);
    if (!img) throw FormatError("idx: cannot open " + images.string());
    std::ifstream lab(labels, std::ios::binary);
    if (!lab) throw FormatError("idx: cannot open " + labels.string());

    if (read_be32(img, "images") != kImageMagic) throw FormatError("idx: bad image magic in " + images.string());
    const std::uint32_t n = read_be32(img, "images");
    const std::uint32_t rows = read_be32(img, "images");
    const std::uint32_t cols = read_be32(img, "images");
    if (read_be32(lab, "labels") != kLabelMagic) throw FormatError("idx: bad label magic in " + labels.string());
    const std::uint32_t n_labels = read_be32(lab, "labels");
    if (n != n_labels) {
        throw FormatError("idx: " + std::to_string(n) + " images but " + std::to_string(n_labels) + " labels");
    }

    const std::size_t dim = std::size_t{rows} * cols;
    std::vector<unsigned char> pixels(std::size_t{n} * dim);
    if (!img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()))) {
        throw FormatError("idx: image data truncated");
    }
    std::vector<unsigned char> raw_labels(n);
    if (!lab.read(reinterpret_cast<char*>(raw_labels.data()), static_cast<std::streamsize>(raw_labels.size()))) {
        throw FormatError("idx: label data truncated");
    }

    LabeledDataset out;
    out.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < pixels.size(); ++i) out.inputs.data()[i] = static_cast<Real>(pixels[i]) / Real(255);
    out.labels.assign(raw_labels.begin(), raw_labels.end());
    const int max_label = out.labels.empty() ? 0 : *std::max_element(out.labels.begin(), out.labels.end());
    out.num_classes = num_classes.value_or(static_cast<std::size_t>(max_label) + 1);
    out.validate();
    return out;
}

void write_idx(const LabeledDataset& data, std::size_t height, std::size_t width,
               const std::filesystem::path& images, const std::filesystem::path& labels) {
    if (height * width != data.dim()) throw ShapeError("write_idx: height*width != feature dimension");
    std::ofstream img(images, std::ios::binary);
    std::ofstream lab(labels, std::ios::binary);
    if (!img || !lab) throw std::runtime_error("write_idx: cannot open output files");
    write_be32(img, kImageMagic);
    write_be32(img, static_cast<std::uint32_t>(data.size()));
    write_be32(img, static_cast<std::uint32_t>(height));
    write_be32(img, static_cast<std::uint32_t>(width));
    for (Eigen::Index i = 0; i < data.inputs.size(); ++i) {
        const double v = std::clamp(static_cast<double>(data.inputs.data()[i]), 0.0, 1.0);
        img.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
    write_be32(lab, kLabelMagic);
    write_be32(lab, static_cast<std::uint32_t>(data.size()));
    for (int y : data.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
}

void write_csv(const LabeledDataset& data, std::ostream& out) {
    out << "label";
    for (std::size_t d = 0; d < data.dim(); ++d) out << ",x" << d;
    out << '\n';
    char buf[32];
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << data.labels[i];
        for (Eigen::Index d = 0; d < data.inputs.cols(); ++d) {
            std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(data.inputs(static_cast<Eigen::Index>(i), d)));
            out << ',' << buf;
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Partitioning

std::vector<double> sample_dirichlet(std::size_t k, double alpha, Rng& rng) {
    std::vector<double> p(k, 1.0 / static_cast<double>(k));
    if (std::isinf(alpha)) return p;
    std::gamma_distribution<double> gamma(alpha, 1.0);
    double total = 0;
    for (auto& v : p) total += (v = gamma(rng));
    if (total > 0 && std::isfinite(total)) {
        for (auto& v : p) v /= total;
        return p;
    }
    // Every draw underflowed (tiny alpha): all mass on one component.
    std::fill(p.begin(), p.end(), 0.0);
    p[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)] = 1.0;
    return p;
}

PartitionPlan partition(const LabeledDataset& data, std::size_t clients, double alpha, std::uint64_t seed) {
    if (clients < 1) throw InvalidInput("partition: need at least one client");
    if (!(alpha > 0.0)) throw InvalidInput("partition: alpha must be positive (or infinite for IID)");

    PartitionPlan plan;
    plan.alpha = alpha;
    plan.assignments.resize(clients);
    Rng rng(derive_seed(seed, stream::kPartition));

    for (std::size_t c = 0; c < data.num_classes; ++c) {
        auto idx = data.indices_of_class(static_cast<int>(c));
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::vector<double> props = sample_dirichlet(clients, alpha, rng);

        // Largest-remainder rounding of props * |class|.
        const double n = static_cast<double>(idx.size());
        std::vector<std::size_t> counts(clients);
        std::vector<double> remainders(clients);
        std::size_t assigned = 0;
        for (std::size_t k = 0; k < clients; ++k) {
            const double quota = props[k] * n;
            counts[k] = static_cast<std::size_t>(std::floor(quota));
            remainders[k] = quota - std::floor(quota);
            assigned += counts[k];
        }
        // Ties rotate with the class so equal shares do not always favour client 0.
        std::vector<std::size_t> order(clients);
        for (std::size_t k = 0; k < clients; ++k) order[k] = (k + c) % clients;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b] + 1e-12; });
        for (std::size_t i = 0; assigned < idx.size(); ++i, ++assigned) ++counts[order[i % clients]];

        std::size_t pos = 0;
        for (std::size_t k = 0; k < clients; ++k) {
            for (std::size_t j = 0; j < counts[k]; ++j) plan.assignments[k].push_back(idx[pos++]);
        }
    }
    for (auto& a : plan.assignments) std::sort(a.begin(), a.end());
    return plan;
}

// ---------------------------------------------------------------------------
// Poisoning

void PoisonSpec::validate(std::size_t dim, std::size_t num_classes) const {
    if (victim == target) throw InvalidInput("poison spec: victim and target classes must differ");
    if (victim < 0 || target < 0 || static_cast<std::size_t>(victim) >= num_classes ||
        static_cast<std::size_t>(target) >= num_classes) {
        throw InvalidInput("poison spec: class index out of range");
    }
    if (!(dpr >= 0.0 && dpr <= 1.0)) throw InvalidInput("poison spec: dpr must be in [0, 1]");
    for (const auto& t : trigger) {
        if (t.index >= dim) throw InvalidInput("poison spec: trigger coordinate " + std::to_string(t.index) + " out of range");
    }
}

PoisonSpec PoisonSpec::from_json(const nlohmann::json& j) {
    PoisonSpec spec;
    for (const auto& c : j.at("coords")) {
        if (!c.is_array() || c.size() != 2) throw InvalidInput("trigger coords must be [index, delta] pairs");
        spec.trigger.push_back({c[0].get<std::size_t>(), c[1].get<Real>()});
    }
    spec.victim = j.at("victim").get<int>();
    spec.target = j.at("target").get<int>();
    spec.dpr = j.at("dpr").get<double>();
    return spec;
}

nlohmann::json PoisonSpec::to_json() const {
    nlohmann::json coords = nlohmann::json::array();
    for (const auto& t : trigger) coords.push_back({t.index, t.delta});
    return {{"coords", coords}, {"victim", victim}, {"target", target}, {"dpr", dpr}};
}

std::vector<TriggerEntry> corner_patch_trigger(std::size_t channels, std::size_t height, std::size_t width,
                                               std::size_t size, Real delta) {
    std::vector<TriggerEntry> out;
    for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t y = 0; y < std::min(size, height); ++y) {
            for (std::size_t x = 0; x < std::min(size, width); ++x) {
                out.push_back({(ch * height + y) * width + x, delta});
            }
        }
    }
    return out;
}

void apply_trigger(Eigen::Ref<RowVector> row, const std::vector<TriggerEntry>& trigger) {
    for (const auto& t : trigger) {
        auto& v = row(static_cast<Eigen::Index>(t.index));
        v = std::clamp(v + t.delta, Real(0), Real(1));
    }
}

std::size_t poison_count(double dpr, std::size_t n) {
    // Tolerance keeps products like 0.0125 * 1000 on the intended half-way point.
    return static_cast<std::size_t>(std::floor(dpr * static_cast<double>(n) + 0.5 + 1e-9));
}

LabeledDataset poison(const LabeledDataset& data, const PoisonSpec& spec, std::uint64_t seed) {
    spec.validate(data.dim(), data.num_classes);
    const std::size_t count = poison_count(spec.dpr, data.size());
    LabeledDataset out = data;
    if (count == 0) return out;

    auto victims = data.indices_of_class(spec.victim);
    if (victims.size() < count) {
        throw InvalidInput("poison: need " + std::to_string(count) + " victim-class samples but only " +
                           std::to_string(victims.size()) + " available (shortfall " +
                           std::to_string(count - victims.size()) + ")");
    }
    Rng rng(derive_seed(seed, stream::kPoison));
    std::shuffle(victims.begin(), victims.end(), rng);
    victims.resize(count);
    std::sort(victims.begin(), victims.end());
    for (std::size_t i : victims) {
        apply_trigger(out.inputs.row(static_cast<Eigen::Index>(i)), spec.trigger);
        out.labels[i] = spec.target;
    }
    return out;
}

LabeledDataset triggered_testset(const LabeledDataset& test, const PoisonSpec& spec) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (test.labels[i] == spec.victim && test.labels[i] != spec.target) idx.push_back(i);
    }
    if (idx.empty()) throw InvalidInput("triggered_testset: test set has no victim-class samples");
    LabeledDataset out = test.subset(idx);
    for (Eigen::Index r = 0; r < out.inputs.rows(); ++r) apply_trigger(out.inputs.row(r), spec.trigger);
    return out;
}

}  // namespace fedlab::data
