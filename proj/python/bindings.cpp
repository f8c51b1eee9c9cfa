#include <map>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fedlab/analysis.hpp"
#include "fedlab/config.hpp"
#include "fedlab/drop.hpp"
#include "fedlab/experiment.hpp"
#include "fedlab/robust.hpp"

namespace py = pybind11;
using namespace fedlab;

namespace {

using Update = std::vector<double>;

FlatParams flat(const Update& v) { return FlatParams(std::vector<Real>(v.begin(), v.end())); }
Update unflat(const FlatParams& p) { return Update(p.values().begin(), p.values().end()); }

std::vector<FlatParams> flats(const std::vector<Update>& vs) {
    std::vector<FlatParams> out;
    for (const auto& v : vs) out.push_back(flat(v));
    return out;
}

std::vector<fl::ClientUpdate> client_updates(const std::map<ClientId, Update>& ups) {
    std::vector<fl::ClientUpdate> out;
    for (const auto& [id, v] : ups) out.push_back({id, flat(v)});
    return out;
}

py::dict round_dict(const fl::RoundRecord& r) {
    py::dict d;
    d["round"] = r.round;
    d["sampled"] = r.sampled;
    d["malicious_sampled"] = r.malicious_sampled;
    d["mta"] = r.mta;
    d["asr"] = r.asr;
    d["aggregated"] = r.aggregated;
    d["excluded"] = r.excluded;
    d["benign_cluster"] = r.benign_cluster;
    d["suspect_cluster"] = r.suspect_cluster;
    d["distilled"] = r.distilled;
    d["status"] = r.status;
    return d;
}

}  // namespace

PYBIND11_MODULE(_fedlab, m) {
    m.doc() = "Federated backdoor experiments: bounds, clustering, aggregation and full runs";
    m.attr("__version__") = exp::version_string();

    m.def(
        "bounds",
        [](double rho, std::size_t clients, std::size_t sampled) {
            const analysis::MajorityQuery q{rho, sampled, clients};
            q.validate();
            py::dict d;
            d["chernoff"] = analysis::chernoff_majority_bound(q).value;
            d["exact_binomial"] = analysis::exact_majority_prob(q, analysis::SamplingModel::Binomial);
            d["exact_hypergeometric"] = analysis::exact_majority_prob(q, analysis::SamplingModel::Hypergeometric);
            d["normal_approx"] = rho == 0.0 ? 0.0 : analysis::normal_majority_approx(q);
            return d;
        },
        py::arg("rho"), py::arg("clients"), py::arg("sampled"));
    m.def("standard_normal_cdf", &analysis::standard_normal_cdf);

    m.def(
        "ward_distance",
        [](const std::vector<Update>& a, const std::vector<Update>& b) {
            const auto fa = flats(a), fb = flats(b);
            return drop::ward_distance(fa, fb);
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "cluster_updates",
        [](const std::map<ClientId, Update>& ups) {
            const auto split = drop::cluster_updates(client_updates(ups));
            return std::make_pair(split.benign, split.suspect);
        },
        py::arg("updates"), "Returns (benign, suspect) client ids.");

    m.def("fedavg", [](const std::vector<Update>& ups) { return unflat(fl::fedavg(std::span<const FlatParams>(flats(ups)))); });
    m.def("median", [](const std::vector<Update>& ups) { return unflat(robust::median_agg(flats(ups))); });
    m.def(
        "multi_krum",
        [](const std::map<ClientId, Update>& ups, std::size_t f, std::size_t keep) {
            const auto r = robust::multi_krum(client_updates(ups), {f, keep});
            return py::make_tuple(r.selected, r.scores, unflat(r.aggregate));
        },
        py::arg("updates"), py::arg("f"), py::arg("m") = 1, "Returns (selected ids, scores, aggregate).");

    py::class_<drop::PenaltyLedger>(m, "PenaltyLedger")
        .def(py::init([](double p, double r, double tau_b, bool ban) {
                 return drop::PenaltyLedger({p, r, tau_b, ban});
             }),
             py::arg("p") = 1.0, py::arg("r") = 1.0, py::arg("tau_b") = 5.0, py::arg("ban_enabled") = false)
        .def(
            "updated",
            [](const drop::PenaltyLedger& l, std::vector<ClientId> benign, std::vector<ClientId> suspect) {
                return l.updated({std::move(benign), std::move(suspect)});
            },
            py::arg("benign"), py::arg("suspect"))
        .def(
            "filter",
            [](const drop::PenaltyLedger& l, std::vector<ClientId> benign, std::vector<ClientId> suspect) {
                return drop::filter_by_ledger({std::move(benign), std::move(suspect)}, l);
            },
            py::arg("benign"), py::arg("suspect"))
        .def("score", &drop::PenaltyLedger::score)
        .def_property_readonly("scores", &drop::PenaltyLedger::scores)
        .def_property_readonly("banned", &drop::PenaltyLedger::banned);

    m.def(
        "run",
        [](const std::string& config_json, const std::filesystem::path& out, std::optional<std::uint64_t> seed) {
            exp::ExperimentConfig cfg = exp::ExperimentConfig::from_json(exp::parse_json_text(config_json, "<python>"), config_json);
            if (seed) cfg.seed = *seed;
            cfg.validate(config_json);
            std::vector<fl::RoundRecord> records;
            {
                py::gil_scoped_release release;
                records = exp::run_to_directory(cfg, out);
            }
            py::list rounds;
            for (const auto& r : records) rounds.append(round_dict(r));
            return rounds;
        },
        py::arg("config_json"), py::arg("out"), py::arg("seed") = py::none(),
        "Run an experiment from JSON text, writing the usual output files; returns per-round records.");
}
