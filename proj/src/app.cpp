#include "fedlab/app.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "fedlab/analysis.hpp"
#include "fedlab/danger_zone.hpp"
#include "fedlab/experiment.hpp"

namespace fedlab::app {

namespace fs = std::filesystem;
using nlohmann::json;

int guarded(const std::function<int()>& body, std::ostream& err) {
    try {
        return body();
    } catch (const exp::ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kValidation;
    } catch (const std::invalid_argument& e) {
        err << "invalid input: " << e.what() << '\n';
        return kValidation;
    } catch (const fs::filesystem_error& e) {
        err << "i/o error: " << e.what() << '\n';
        return kIo;
    } catch (const std::ios_base::failure& e) {
        err << "i/o error: " << e.what() << '\n';
        return kIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntime;
    }
}

void configure_logging() {
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("FEDLAB_LOG")) {
        spdlog::set_level(spdlog::level::from_str(env));
    }
}

namespace {

exp::ExperimentConfig apply_overrides(exp::ExperimentConfig cfg, std::optional<std::uint64_t> seed,
                                      std::optional<std::size_t> jobs) {
    if (seed) cfg.seed = cfg.federation.seed = *seed;
    if (jobs) cfg.federation.jobs = std::max<std::size_t>(1, *jobs);
    return cfg;
}

}  // namespace

int cmd_run(const fs::path& config, const fs::path& out, std::optional<std::uint64_t> seed,
            std::optional<std::size_t> jobs, std::ostream& err) {
    return guarded(
        [&] {
            const exp::ExperimentConfig cfg = apply_overrides(exp::load_config(config), seed, jobs);
            exp::run_to_directory(cfg, out);
            return int{kOk};
        },
        err);
}

int cmd_compare(const fs::path& configs, const fs::path& out, std::optional<std::uint64_t> seed,
                std::optional<std::size_t> jobs, std::ostream& err) {
    return guarded(
        [&] {
            std::vector<fs::path> files;
            for (const auto& entry : fs::directory_iterator(configs)) {
                if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
            }
            std::sort(files.begin(), files.end());
            if (files.size() < 2) {
                throw exp::ConfigError("", "compare needs at least two *.json configs in " + configs.string());
            }

            std::vector<exp::ExperimentConfig> cfgs;
            for (const auto& f : files) cfgs.push_back(apply_overrides(exp::load_config(f), seed, jobs));
            const json reference = exp::comparable_part(cfgs.front());
            for (std::size_t i = 1; i < cfgs.size(); ++i) {
                const json diff = json::diff(reference, exp::comparable_part(cfgs[i]));
                if (!diff.empty()) {
                    throw exp::ConfigError(files[i].filename().string(),
                                           "differs from " + files.front().filename().string() +
                                               " outside the defense block (first difference at " +
                                               diff.front().value("path", std::string("?")) + ")");
                }
            }

            std::map<std::string, int> name_uses;
            for (const auto& c : cfgs) ++name_uses[c.defense.name];

            fs::create_directories(out);
            fs::remove(out / "manifest.json");
            std::string merged = "round,defense,mta,asr,excluded_count\n";
            json runs = json::array();
            for (std::size_t i = 0; i < cfgs.size(); ++i) {
                const std::string stem = files[i].stem().string();
                const std::string label = name_uses[cfgs[i].defense.name] > 1 ? stem : cfgs[i].defense.name;
                const auto records = exp::run_to_directory(cfgs[i], out / stem);
                for (const auto& r : records) {
                    char buf[128];
                    std::snprintf(buf, sizeof buf, ",%.10g,%.10g,%zu\n", r.mta, r.asr, r.excluded.size());
                    merged += std::to_string(r.round) + "," + label + buf;
                }
                runs.push_back({{"label", label}, {"config", files[i].filename().string()}, {"dir", stem}});
            }
            exp::write_text_atomic(out / "compare.csv", merged);
            std::vector<std::string> outputs{"compare.csv"};
            for (const auto& r : runs) outputs.push_back(r["dir"].get<std::string>() + "/manifest.json");
            exp::write_text_atomic(out / "manifest.json",
                                   json{{"artifact", "fedlab"},
                                        {"version", exp::version_string()},
                                        {"seed", cfgs.front().seed},
                                        {"runs", runs},
                                        {"outputs", outputs}}
                                           .dump(2) + "\n");
            return int{kOk};
        },
        err);
}

int cmd_grid(const fs::path& config, const fs::path& out, std::optional<std::uint64_t> seed, std::size_t jobs,
             std::ostream& err) {
    return guarded(
        [&] {
            const std::string text = exp::read_text(config);
            json j = exp::parse_json_text(text, config.filename().string());
            if (!j.is_object() || !j.contains("grid")) throw exp::ConfigError("grid", "missing grid block", 0);
            const analysis::GridSpec grid = analysis::GridSpec::from_json(j.at("grid"), text);
            j.erase("grid");
            const exp::ExperimentConfig cfg = apply_overrides(exp::ExperimentConfig::from_json(j, text), seed, std::nullopt);

            fs::create_directories(out);
            fs::remove(out / "manifest.json");
            analysis::ScanStats stats;
            const auto report = analysis::danger_zone_scan(grid.cells(), cfg, cfg.lambda, cfg.tau,
                                                           {out / "cells", std::max<std::size_t>(1, jobs)}, &stats);
            exp::write_text_atomic(out / "danger_zones.csv", analysis::danger_zone_csv(report));
            std::vector<std::string> outputs{"danger_zones.csv"};
            for (const auto& c : report.grid) {
                if (c.error.empty()) outputs.push_back("cells/" + c.id + "/cell.json");
            }
            exp::write_text_atomic(out / "manifest.json", json{{"artifact", "fedlab"},
                                                                {"version", exp::version_string()},
                                                                {"seed", cfg.seed},
                                                                {"cells", report.grid.size()},
                                                                {"computed", stats.computed},
                                                                {"reused", stats.reused},
                                                                {"failed", stats.failed},
                                                                {"outputs", outputs}}
                                                               .dump(2) + "\n");
            return stats.failed == 0 ? int{kOk} : int{kRuntime};
        },
        err);
}

int cmd_bounds(double rho, std::size_t clients, std::size_t sampled, std::ostream& out, std::ostream& err) {
    return guarded(
        [&] {
            const analysis::MajorityQuery q{rho, sampled, clients};
            q.validate();
            const auto chernoff = analysis::chernoff_majority_bound(q);
            const double binom = analysis::exact_majority_prob(q, analysis::SamplingModel::Binomial);
            const double hyper = analysis::exact_majority_prob(q, analysis::SamplingModel::Hypergeometric);
            const double normal = analysis::normal_majority_approx(q);
            // Continuity convention: with no malicious clients nothing can be a majority.
            const json row = {{"chernoff", chernoff.value},
                              {"exact_binomial", binom},
                              {"exact_hypergeometric", hyper},
                              {"normal_approx", rho == 0.0 ? 0.0 : normal}};
            out << row.dump() << '\n';
            if (chernoff.degenerate) err << "note: rho on {0, 1}; chernoff value is the continuity convention\n";
            if (chernoff.value > binom) {
                err << "note: the printed 'lower bound' " << chernoff.value << " exceeds the exact binomial tail " << binom
                    << "; it does not bound P(M >= C/2) from below here\n";
            }
            return int{kOk};
        },
        err);
}

}  // namespace fedlab::app
