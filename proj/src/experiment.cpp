#include "fedlab/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "fedlab/robust.hpp"

#ifndef FEDLAB_VERSION
#define FEDLAB_VERSION "0.0.0"
#endif
#ifndef FEDLAB_GIT_HASH
#define FEDLAB_GIT_HASH "unknown"
#endif

namespace fedlab::exp {

namespace fs = std::filesystem;

ExperimentData load_data(const ExperimentConfig& cfg) {
    const auto& ds = cfg.dataset;
    ExperimentData out;
    if (ds.kind == "blobs") {
        const std::size_t per_class = ds.test_per_class + ds.holdout_per_class + ds.train_per_class;
        LabeledDataset all = data::synth_blobs(ds.classes, ds.dim(), per_class, ds.spread, cfg.seed);
        auto [test, rest] = data::split_per_class(all, ds.test_per_class);
        auto [holdout, train] = data::split_per_class(rest, ds.holdout_per_class);
        out.train = std::move(train);
        out.holdout = std::move(holdout);
        out.test = std::move(test);
        return out;
    }
    LabeledDataset train = data::load_idx(ds.train_images, ds.train_labels, ds.classes);
    LabeledDataset test = data::load_idx(ds.test_images, ds.test_labels, ds.classes);
    if (train.dim() != ds.dim() || test.dim() != ds.dim()) {
        throw ConfigError("dataset.image", "IDX image size does not match [channels, height, width]");
    }
    auto [holdout, rest] = data::split_per_class(train, ds.holdout_per_class);
    out.train = std::move(rest);
    out.holdout = std::move(holdout);
    out.test = std::move(test);
    return out;
}

nn::Architecture make_architecture(const ExperimentConfig& cfg) {
    if (cfg.model.kind == "mlp") return nn::Architecture::mlp(cfg.dataset.dim(), cfg.model.hidden, cfg.dataset.classes);
    return nn::Architecture::tiny_cnn(cfg.dataset.image, cfg.dataset.classes, cfg.model.channels1, cfg.model.channels2);
}

nn::Classifier initial_global(const ExperimentConfig& cfg) {
    return nn::Classifier::initialize(make_architecture(cfg), derive_seed(cfg.seed, stream::kInit));
}

std::unique_ptr<fl::Defense> make_defense(const ExperimentConfig& cfg, const LabeledDataset& clean_seed) {
    const auto& d = cfg.defense;
    if (d.name == "fedavg") return std::make_unique<fl::FedAvgDefense>();
    if (d.name == "median") return std::make_unique<robust::MedianDefense>();
    if (d.name == "multikrum") {
        const std::size_t f =
            d.krum_f.value_or(static_cast<std::size_t>(std::floor(cfg.federation.mcr * double(cfg.federation.sampled) + 0.5)));
        return std::make_unique<robust::MultiKrumDefense>(f, d.krum_m.value_or(0));
    }
    if (d.name == "droplet") return std::make_unique<drop::DropletDefense>(d.ledger);
    if (d.name == "drop") {
        drop::DistillConfig dc;
        dc.period = d.period;
        dc.query_budget = d.query_budget;
        dc.batch_size = d.distill_batch;
        dc.generator_steps = d.generator_steps;
        dc.clone_steps = d.clone_steps;
        dc.clone_lr = d.clone_lr;
        dc.generator_lr = d.generator_lr;
        dc.latent_dim = d.latent_dim;
        dc.generator_hidden = d.generator_hidden;
        dc.clean = clean_seed;
        return std::make_unique<drop::DropDefense>(d.ledger, std::move(dc), cfg.dataset.dim(), cfg.seed);
    }
    throw ConfigError("defense.name", "unknown defense '" + d.name + "'");
}

Experiment build_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentData ds = load_data(cfg);
    const data::PoisonSpec spec = cfg.poison_spec();
    spec.validate(ds.train.dim(), ds.train.num_classes);

    fl::FederationConfig fcfg = cfg.federation;
    fcfg.seed = cfg.seed;
    const data::PartitionPlan plan = data::partition(ds.train, fcfg.clients, cfg.alpha, cfg.seed);

    Experiment exp;
    exp.poison = spec;
    exp.malicious = fl::choose_malicious(fcfg);
    std::vector<fl::ClientState> clients;
    clients.reserve(fcfg.clients);
    for (std::size_t i = 0; i < fcfg.clients; ++i) {
        fl::ClientState c;
        c.id = static_cast<ClientId>(i);
        c.data = ds.train.subset(plan.assignments[i]);
        if (c.data.empty()) {
            throw InvalidInput("client " + std::to_string(i) + " received no samples; raise federation.alpha or the dataset size");
        }
        c.malicious = std::binary_search(exp.malicious.begin(), exp.malicious.end(), c.id);
        if (c.malicious) {
            c.data = data::poison(c.data, spec, derive_seed(cfg.seed, stream::kPoison, i));
            c.poison = spec;
        }
        clients.push_back(std::move(c));
    }

    LabeledDataset clean_seed;
    if (cfg.defense.name == "drop") {
        if (cfg.defense.clean_seed_size > ds.holdout.size()) {
            throw ConfigError("defense.clean_seed_size", "exceeds the server holdout pool of " + std::to_string(ds.holdout.size()));
        }
        std::vector<std::size_t> idx(ds.holdout.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, stream::kCleanSeed));
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(cfg.defense.clean_seed_size);
        std::sort(idx.begin(), idx.end());
        clean_seed = ds.holdout.subset(idx);
    }

    LabeledDataset triggered = data::triggered_testset(ds.test, spec);
    exp.defense = make_defense(cfg, clean_seed);
    exp.federation = std::make_unique<fl::Federation>(fcfg, std::move(clients), initial_global(cfg), std::move(ds.test),
                                                      std::move(triggered), spec.target);
    return exp;
}

// ---------------------------------------------------------------------------

namespace {

std::string ids(const std::vector<ClientId>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ';';
        out += std::to_string(v[i]);
    }
    return out;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

std::string rounds_csv_header() {
    return "round,sampled,malicious_sampled,mta,asr,aggregated_count,excluded_count,excluded_ids,benign_ids,"
           "suspect_ids,distilled,status\n";
}

std::string rounds_csv_row(const fl::RoundRecord& r) {
    std::ostringstream s;
    s << r.round << ',' << r.sampled.size() << ',' << r.malicious_sampled << ',' << num(r.mta) << ',' << num(r.asr)
      << ',' << r.aggregated.size() << ',' << r.excluded.size() << ',' << ids(r.excluded) << ','
      << ids(r.benign_cluster) << ',' << ids(r.suspect_cluster) << ',' << (r.distilled ? "true" : "false") << ','
      << r.status << '\n';
    return s.str();
}

RoundsCsvWriter::RoundsCsvWriter(const fs::path& path)
    : out_(std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::trunc)) {
    if (!*out_) throw fs::filesystem_error("cannot open for writing", path, std::make_error_code(std::errc::io_error));
    *out_ << rounds_csv_header();
    out_->flush();
}

void RoundsCsvWriter::write(const fl::RoundRecord& r) {
    const std::string row = rounds_csv_row(r);
    out_->write(row.data(), static_cast<std::streamsize>(row.size()));
    out_->flush();
    if (!*out_) throw std::ios_base::failure("rounds.csv: write failed");
}

RunSummary summarize(std::span<const fl::RoundRecord> records, double lambda) {
    RunSummary s;
    s.rounds = records.size();
    if (!records.empty()) {
        s.final_mta = records.back().mta;
        s.final_asr = records.back().asr;
    }
    s.consistency = analysis::consistency_stat(records, lambda);
    return s;
}

nlohmann::json summary_json(const ExperimentConfig& cfg, const RunSummary& s, const std::string& defense_name) {
    return {{"defense", defense_name},
            {"rounds", s.rounds},
            {"final_mta", s.final_mta},
            {"final_asr", s.final_asr},
            {"min_asr_over_K", s.consistency.min_asr ? nlohmann::json(*s.consistency.min_asr) : nlohmann::json(nullptr)},
            {"qualifying_rounds", s.consistency.qualifying_rounds},
            {"lambda", cfg.lambda},
            {"tau", cfg.tau},
            {"version", version_string()},
            {"git_hash", git_hash()},
            {"config", cfg.to_json()}};
}

std::string version_string() { return FEDLAB_VERSION; }
std::string git_hash() { return FEDLAB_GIT_HASH; }

void write_text_atomic(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw fs::filesystem_error("cannot open for writing", tmp, std::make_error_code(std::errc::io_error));
        out << text;
        out.flush();
        if (!out) throw fs::filesystem_error("write failed", tmp, std::make_error_code(std::errc::io_error));
    }
    fs::rename(tmp, path);
}

std::vector<fl::RoundRecord> run_to_directory(const ExperimentConfig& cfg, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    fs::remove(out_dir / "manifest.json");
    const std::string started = utc_now();

    Experiment exp = build_experiment(cfg);
    RoundsCsvWriter rounds(out_dir / "rounds.csv");
    std::ofstream timings(out_dir / "timings.csv", std::ios::binary | std::ios::trunc);
    timings << "round,elapsed_ms\n";
    auto records = fl::run_experiment(*exp.federation, *exp.defense, [&](const fl::RoundRecord& r) {
        rounds.write(r);
        timings << r.round << ',' << num(r.elapsed_ms) << '\n';
        timings.flush();
    });

    const RunSummary s = summarize(records, cfg.lambda);
    write_text_atomic(out_dir / "summary.json", summary_json(cfg, s, exp.defense->name()).dump(2) + "\n");
    const nlohmann::json manifest = {{"artifact", "fedlab"},
                                     {"version", version_string()},
                                     {"git_hash", git_hash()},
                                     {"seed", cfg.seed},
                                     {"started_at", started},
                                     {"finished_at", utc_now()},
                                     {"config", cfg.to_json()},
                                     {"outputs", {"rounds.csv", "timings.csv", "summary.json"}}};
    write_text_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
    spdlog::info("run finished: final mta={:.4f} asr={:.4f}", s.final_mta, s.final_asr);
    return records;
}

}  // namespace fedlab::exp
