#include "fedlab/danger_zone.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "fedlab/experiment.hpp"

namespace fedlab::analysis {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<nn::TrainingConfig> GridSpec::cells() const {
    std::vector<nn::TrainingConfig> out;
    for (double lr : learning_rates) {
        for (std::size_t bs : batch_sizes) {
            for (std::size_t ep : epochs) out.push_back({lr, bs, ep});
        }
    }
    return out;
}

GridSpec GridSpec::from_json(const json& j, const std::string& source) {
    auto fail = [&](const std::string& field, const std::string& msg) {
        throw exp::ConfigError(field, msg, exp::locate_field(source, field));
    };
    if (!j.is_object()) fail("grid", "expected an object with lr, batch_size and epochs lists");
    GridSpec g;
    for (const auto& [k, _] : j.items()) {
        if (k != "lr" && k != "batch_size" && k != "epochs") fail("grid." + k, "unknown field");
    }
    auto list = [&](const char* key) -> const json& {
        if (!j.contains(key) || !j.at(key).is_array() || j.at(key).empty()) fail(std::string("grid.") + key, "expected a non-empty list");
        return j.at(key);
    };
    for (const auto& v : list("lr")) {
        if (!v.is_number() || !(v.get<double>() >= 0.0)) fail("grid.lr", "learning rates must be non-negative numbers");
        g.learning_rates.push_back(v.get<double>());
    }
    for (const auto& v : list("batch_size")) {
        if (!v.is_number_integer() || v.get<long long>() <= 0) fail("grid.batch_size", "batch sizes must be positive integers");
        g.batch_sizes.push_back(v.get<std::size_t>());
    }
    for (const auto& v : list("epochs")) {
        if (!v.is_number_integer() || v.get<long long>() <= 0) fail("grid.epochs", "epochs must be positive integers");
        g.epochs.push_back(v.get<std::size_t>());
    }
    return g;
}

namespace {

std::string cell_id(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "c%03zu", index);
    return buf;
}

exp::ExperimentConfig cell_config(const exp::ExperimentConfig& base, const nn::TrainingConfig& training) {
    exp::ExperimentConfig c = base;
    c.federation.training = training;
    c.federation.jobs = 1;
    c.defense = exp::DefenseConfig{};  // undefended
    return c;
}

std::optional<GridCell> load_cell(const fs::path& file, const json& expected_config) {
    std::ifstream in(file);
    if (!in) return std::nullopt;
    try {
        const json j = json::parse(in);
        if (j.at("config") != expected_config) return std::nullopt;
        GridCell c;
        c.id = j.at("id").get<std::string>();
        c.training = {j.at("lr").get<double>(), j.at("batch_size").get<std::size_t>(), j.at("epochs").get<std::size_t>()};
        c.mta = j.at("mta").get<double>();
        c.asr = j.at("asr").get<double>();
        return c;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

}  // namespace

DangerZoneReport danger_zone_scan(const std::vector<nn::TrainingConfig>& grid, const exp::ExperimentConfig& base,
                                  double lambda, double tau, const ScanOptions& options, ScanStats* stats) {
    if (grid.empty()) throw InvalidInput("danger_zone_scan: empty grid");
    DangerZoneReport report;
    report.lambda = lambda;
    report.tau = tau;
    report.grid.resize(grid.size());

    ScanStats local;
    std::mutex mu;
    std::atomic<std::size_t> next{0};

    auto run_cell = [&](std::size_t i) {
        GridCell cell;
        cell.id = cell_id(i);
        cell.training = grid[i];
        const exp::ExperimentConfig cfg = cell_config(base, grid[i]);
        const json cfg_json = cfg.to_json();
        std::optional<fs::path> file;
        if (options.cell_dir) file = *options.cell_dir / cell.id / "cell.json";

        if (file) {
            if (auto done = load_cell(*file, cfg_json)) {
                std::lock_guard lock(mu);
                report.grid[i] = *done;
                ++local.reused;
                return;
            }
        }
        try {
            exp::Experiment e = exp::build_experiment(cfg);
            const auto records = fl::run_experiment(*e.federation, *e.defense);
            cell.mta = records.empty() ? 0.0 : records.back().mta;
            cell.asr = records.empty() ? 0.0 : records.back().asr;
            if (file) {
                fs::create_directories(file->parent_path());
                const json j = {{"id", cell.id},
                                {"lr", cell.training.learning_rate},
                                {"batch_size", cell.training.batch_size},
                                {"epochs", cell.training.epochs},
                                {"mta", cell.mta},
                                {"asr", cell.asr},
                                {"config", cfg_json}};
                exp::write_text_atomic(*file, j.dump(2) + "\n");
            }
            std::lock_guard lock(mu);
            ++local.computed;
        } catch (const std::exception& ex) {
            spdlog::error("grid cell {} failed: {}", cell.id, ex.what());
            cell.error = ex.what();
            std::lock_guard lock(mu);
            ++local.failed;
        }
        std::lock_guard lock(mu);
        report.grid[i] = std::move(cell);
    };

    auto worker = [&] {
        for (std::size_t i = next++; i < grid.size(); i = next++) run_cell(i);
    };
    const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, grid.size());
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }

    for (auto& c : report.grid) {
        c.danger = c.error.empty() && c.mta >= lambda && c.asr >= tau;
        if (c.danger) report.zones.push_back(c);
    }
    if (stats) *stats = local;
    return report;
}

std::string danger_zone_csv(const DangerZoneReport& report) {
    std::ostringstream s;
    s << "config_id,lr,batch_size,epochs,mta,asr,danger_zone,lambda,tau,error\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    for (const auto& c : report.grid) {
        std::string err = c.error;
        for (auto& ch : err) {
            if (ch == ',' || ch == '\n' || ch == '\r') ch = ' ';
        }
        s << c.id << ',' << num(c.training.learning_rate) << ',' << c.training.batch_size << ',' << c.training.epochs
          << ',' << num(c.mta) << ',' << num(c.asr) << ',' << (c.danger ? "true" : "false") << ',' << num(report.lambda)
          << ',' << num(report.tau) << ',' << err << '\n';
    }
    return s.str();
}

}  // namespace fedlab::analysis
