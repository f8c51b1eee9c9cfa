#include "fedlab/flat_params.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>

#include <json.hpp>

namespace fedlab {

std::size_t LayoutEntry::numel() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t layout_numel(const std::vector<LayoutEntry>& layout) {
    std::size_t total = 0;
    for (const auto& e : layout) total += e.numel();
    return total;
}

FlatParams::FlatParams(std::vector<Real> values, std::vector<LayoutEntry> layout)
    : values_(std::move(values)), layout_(std::move(layout)) {
    if (layout_numel(layout_) != values_.size()) {
        throw ShapeError("FlatParams: layout describes " + std::to_string(layout_numel(layout_)) +
                         " elements but " + std::to_string(values_.size()) + " values given");
    }
}

FlatParams::FlatParams(std::vector<Real> values)
    : values_(std::move(values)), layout_{{"params", {values_.size()}}} {}

std::vector<NamedTensor> FlatParams::unflatten() const {
    std::vector<NamedTensor> out;
    out.reserve(layout_.size());
    std::size_t offset = 0;
    for (const auto& e : layout_) {
        const std::size_t n = e.numel();
        out.push_back({e.name, e.shape,
                       std::vector<Real>(values_.begin() + static_cast<std::ptrdiff_t>(offset),
                                         values_.begin() + static_cast<std::ptrdiff_t>(offset + n))});
        offset += n;
    }
    return out;
}

FlatParams FlatParams::flatten(const std::vector<NamedTensor>& tensors) {
    std::vector<Real> values;
    std::vector<LayoutEntry> layout;
    for (const auto& t : tensors) {
        LayoutEntry e{t.name, t.shape};
        if (e.numel() != t.values.size()) {
            throw ShapeError("flatten: tensor '" + t.name + "' shape does not match its value count");
        }
        values.insert(values.end(), t.values.begin(), t.values.end());
        layout.push_back(std::move(e));
    }
    return FlatParams(std::move(values), std::move(layout));
}

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_f64_le(std::ostream& out, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), 8);
}

double get_f64_le(std::istream& in) {
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char*>(buf), 8)) throw FormatError("checkpoint: truncated value stream");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

void FlatParams::write(std::ostream& out) const {
    nlohmann::json header;
    header["format"] = "fedlab-flat-params";
    header["dtype"] = "float64-le";
    header["count"] = values_.size();
    auto& layout = header["layout"] = nlohmann::json::array();
    for (const auto& e : layout_) layout.push_back({{"name", e.name}, {"shape", e.shape}});
    out << header.dump() << '\n';
    for (Real v : values_) put_f64_le(out, static_cast<double>(v));
}

FlatParams FlatParams::read(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("checkpoint: missing header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint: bad header: ") + e.what());
    }
    if (header.value("format", "") != "fedlab-flat-params") throw FormatError("checkpoint: unknown format");
    std::vector<LayoutEntry> layout;
    for (const auto& e : header.at("layout")) {
        layout.push_back({e.at("name").get<std::string>(), e.at("shape").get<std::vector<std::size_t>>()});
    }
    const auto count = header.at("count").get<std::size_t>();
    if (count != layout_numel(layout)) throw FormatError("checkpoint: count disagrees with layout");
    std::vector<Real> values(count);
    for (auto& v : values) v = static_cast<Real>(get_f64_le(in));
    return FlatParams(std::move(values), std::move(layout));
}

}  // namespace fedlab
