#include <doctest.h>

#include <cstdlib>
#include <sstream>
#include <sys/wait.h>

#include "fedlab/app.hpp"
#include "fedlab/config.hpp"
#include "fixtures.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using fixture::slurp;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result cli(const std::string& args, const fs::path& scratch) {
    const fs::path out = scratch / "stdout.txt", err = scratch / "stderr.txt";
    const std::string cmd = std::string(FEDLAB_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::vector<std::vector<std::string>> csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

json grid_config(std::vector<double> lr, std::vector<int> bs) {
    json j = fixture::tiny_config();
    j["grid"] = {{"lr", lr}, {"batch_size", bs}, {"epochs", {1}}};
    return j;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("run") {
    const auto dir = fixture::temp_dir("cli_run");
    fixture::write_json(dir / "cfg.json", fixture::tiny_config());

    SUBCASE("minimal config writes the run files") {
        const auto r = cli("run --config " + (dir / "cfg.json").string() + " --out " + (dir / "a").string(), dir);
        CHECK(r.code == 0);
        for (const char* f : {"rounds.csv", "summary.json", "manifest.json", "timings.csv"}) CHECK(fs::exists(dir / "a" / f));
        CHECK(line_count(slurp(dir / "a" / "rounds.csv")) == 4);
        const json manifest = json::parse(slurp(dir / "a" / "manifest.json"));
        for (const auto& f : manifest["outputs"]) CHECK(fs::exists(dir / "a" / f.get<std::string>()));
        const json summary = json::parse(slurp(dir / "a" / "summary.json"));
        CHECK(summary["rounds"] == 3);
        CHECK(summary.contains("min_asr_over_K"));
        CHECK(summary.contains("git_hash"));
    }
    SUBCASE("reruns are byte-identical, also from the echoed config and with parallel workers") {
        const auto cfg = (dir / "cfg.json").string();
        REQUIRE(cli("run --config " + cfg + " --out " + (dir / "a").string(), dir).code == 0);
        REQUIRE(cli("run --config " + cfg + " --out " + (dir / "b").string() + " --jobs 3", dir).code == 0);
        CHECK(slurp(dir / "a" / "rounds.csv") == slurp(dir / "b" / "rounds.csv"));
        const json echoed = json::parse(slurp(dir / "a" / "summary.json"))["config"];
        fixture::write_json(dir / "echo.json", echoed);
        REQUIRE(cli("run --config " + (dir / "echo.json").string() + " --out " + (dir / "c").string(), dir).code == 0);
        CHECK(slurp(dir / "a" / "rounds.csv") == slurp(dir / "c" / "rounds.csv"));
    }
    SUBCASE("seed override changes the run") {
        const auto cfg = (dir / "cfg.json").string();
        REQUIRE(cli("run --config " + cfg + " --out " + (dir / "a").string(), dir).code == 0);
        REQUIRE(cli("run --config " + cfg + " --out " + (dir / "s").string() + " --seed 99", dir).code == 0);
        CHECK(slurp(dir / "a" / "rounds.csv") != slurp(dir / "s" / "rounds.csv"));
    }
    SUBCASE("invalid malicious ratio is a validation error naming the field") {
        json j = fixture::tiny_config();
        j["federation"]["mcr"] = 1.2;
        fixture::write_json(dir / "bad.json", j);
        const auto r = cli("run --config " + (dir / "bad.json").string() + " --out " + (dir / "x").string(), dir);
        CHECK(r.code == 1);
        CHECK(r.err.find("federation.mcr") != std::string::npos);
        CHECK(r.err.find("line ") != std::string::npos);
        CHECK_FALSE(fs::exists(dir / "x" / "manifest.json"));
    }
    SUBCASE("missing config is an i/o error") {
        CHECK(cli("run --config " + (dir / "nope.json").string(), dir).code == 3);
    }
    SUBCASE("usage errors") {
        CHECK(cli("run", dir).code == 1);
        CHECK(cli("frobnicate", dir).code == 1);
    }
    SUBCASE("killed run leaves complete rows and no manifest") {
        json j = fixture::tiny_config();
        j["federation"]["rounds"] = 100000;
        fixture::write_json(dir / "long.json", j);
        const std::string cmd = "timeout -s KILL 1 " + std::string(FEDLAB_CLI_PATH) + " run --config " +
                                (dir / "long.json").string() + " --out " + (dir / "k").string() + " 2>/dev/null";
        [[maybe_unused]] const int status = std::system(cmd.c_str());
        CHECK_FALSE(fs::exists(dir / "k" / "manifest.json"));
        const std::string rounds = slurp(dir / "k" / "rounds.csv");
        REQUIRE(!rounds.empty());
        CHECK(rounds.back() == '\n');
        const auto rows = csv(rounds);
        for (const auto& row : rows) CHECK(row.size() == rows.front().size());
    }
    fs::remove_all(dir);
}

TEST_CASE("compare") {
    const auto dir = fixture::temp_dir("cli_compare");
    fs::create_directories(dir / "cfgs");
    json a = fixture::tiny_config(), b = fixture::tiny_config();
    b["defense"] = {{"name", "droplet"}};
    fixture::write_json(dir / "cfgs" / "a_fedavg.json", a);
    fixture::write_json(dir / "cfgs" / "b_droplet.json", b);

    SUBCASE("merged csv") {
        const auto r = cli("compare --config " + (dir / "cfgs").string() + " --out " + (dir / "o").string(), dir);
        REQUIRE(r.code == 0);
        const auto rows = csv(slurp(dir / "o" / "compare.csv"));
        CHECK(rows.front() == std::vector<std::string>{"round", "defense", "mta", "asr", "excluded_count"});
        CHECK(rows.size() == 1 + 2 * 3);
        CHECK(rows[1][1] == "fedavg");
        CHECK(rows[4][1] == "droplet");
        CHECK(fs::exists(dir / "o" / "manifest.json"));
        CHECK(fs::exists(dir / "o" / "a_fedavg" / "rounds.csv"));
    }
    SUBCASE("comparability guard") {
        b["dataset"]["spread"] = 0.3;
        fixture::write_json(dir / "cfgs" / "b_droplet.json", b);
        const auto r = cli("compare --config " + (dir / "cfgs").string() + " --out " + (dir / "o").string(), dir);
        CHECK(r.code == 1);
        CHECK(r.err.find("dataset") != std::string::npos);
    }
    SUBCASE("needs two configs") {
        fs::remove(dir / "cfgs" / "b_droplet.json");
        CHECK(cli("compare --config " + (dir / "cfgs").string() + " --out " + (dir / "o").string(), dir).code == 1);
    }
    fs::remove_all(dir);
}

TEST_CASE("grid") {
    const auto dir = fixture::temp_dir("cli_grid");

    SUBCASE("one cell gives one row with consistent flags") {
        fixture::write_json(dir / "g.json", grid_config({0.1}, {8}));
        REQUIRE(cli("grid --config " + (dir / "g.json").string() + " --out " + (dir / "o").string(), dir).code == 0);
        const auto rows = csv(slurp(dir / "o" / "danger_zones.csv"));
        REQUIRE(rows.size() == 2);
        CHECK(rows[0] == std::vector<std::string>{"config_id", "lr", "batch_size", "epochs", "mta", "asr", "danger_zone",
                                                  "lambda", "tau", "error"});
        const bool flagged = std::stod(rows[1][4]) >= std::stod(rows[1][7]) && std::stod(rows[1][5]) >= std::stod(rows[1][8]);
        CHECK(rows[1][6] == (flagged ? "true" : "false"));
    }
    SUBCASE("unattainable lambda flags nothing") {
        json j = grid_config({0.05, 0.2}, {8});
        j["metrics"]["lambda"] = 1.01;
        j["metrics"]["tau"] = 0.0;
        fixture::write_json(dir / "g.json", j);
        REQUIRE(cli("grid --config " + (dir / "g.json").string() + " --out " + (dir / "o").string(), dir).code == 0);
        for (const auto& row : csv(slurp(dir / "o" / "danger_zones.csv"))) CHECK(row[6] != "true");
    }
    SUBCASE("resume reuses finished cells") {
        fixture::write_json(dir / "g.json", grid_config({0.05, 0.2}, {4, 8}));
        const std::string args = "grid --config " + (dir / "g.json").string() + " --out " + (dir / "o").string();
        REQUIRE(cli(args, dir).code == 0);
        const std::string first = slurp(dir / "o" / "danger_zones.csv");
        fs::remove(dir / "o" / "cells" / "c002" / "cell.json");
        fs::remove(dir / "o" / "manifest.json");
        REQUIRE(cli(args + " --jobs 2", dir).code == 0);
        const json m = json::parse(slurp(dir / "o" / "manifest.json"));
        CHECK(m["reused"] == 3);
        CHECK(m["computed"] == 1);
        CHECK(slurp(dir / "o" / "danger_zones.csv") == first);
    }
    SUBCASE("killed scan resumes to the same result") {
        json j = grid_config({0.05, 0.1, 0.2}, {4, 8});
        j["federation"]["rounds"] = 30;
        fixture::write_json(dir / "g.json", j);
        const std::string args = " grid --config " + (dir / "g.json").string() + " --out ";
        REQUIRE(cli(args + (dir / "fresh").string(), dir).code == 0);
        const std::string kill = "timeout -s KILL 0.5 " + std::string(FEDLAB_CLI_PATH) + args + (dir / "o").string() + " 2>/dev/null";
        [[maybe_unused]] const int status = std::system(kill.c_str());
        REQUIRE(cli(args + (dir / "o").string(), dir).code == 0);
        CHECK(slurp(dir / "o" / "danger_zones.csv") == slurp(dir / "fresh" / "danger_zones.csv"));
    }
    SUBCASE("missing grid block") {
        fixture::write_json(dir / "g.json", fixture::tiny_config());
        CHECK(cli("grid --config " + (dir / "g.json").string() + " --out " + (dir / "o").string(), dir).code == 1);
    }
    fs::remove_all(dir);
}

TEST_CASE("bounds") {
    const auto dir = fixture::temp_dir("cli_bounds");
    SUBCASE("four numeric fields") {
        const auto r = cli("bounds --rho 0.4 --clients 100 --sampled 20", dir);
        REQUIRE(r.code == 0);
        const json j = json::parse(r.out);
        CHECK(j.size() == 4);
        for (const char* k : {"chernoff", "exact_binomial", "exact_hypergeometric", "normal_approx"}) {
            REQUIRE(j.contains(k));
            CHECK(j[k].is_number());
        }
        CHECK(j["chernoff"].get<double>() == doctest::Approx(0.3352).epsilon(1e-4));
    }
    SUBCASE("zero ratio") {
        const auto r = cli("bounds --rho 0 --clients 100 --sampled 20", dir);
        REQUIRE(r.code == 0);
        const json j = json::parse(r.out);
        for (const auto& [k, v] : j.items()) CHECK(v.get<double>() == 0.0);
    }
    SUBCASE("invalid parameters") {
        CHECK(cli("bounds --rho 1.5 --clients 100 --sampled 20", dir).code == 1);
        CHECK(cli("bounds --rho 0.2 --clients 10 --sampled 20", dir).code == 1);
        CHECK(cli("bounds --rho 0.2", dir).code == 1);
    }
    fs::remove_all(dir);
}

TEST_CASE("exit code mapping") {
    std::ostringstream err;
    CHECK(fedlab::app::guarded([]() -> int { throw fedlab::InvalidInput("x"); }, err) == 1);
    CHECK(fedlab::app::guarded([]() -> int { throw fs::filesystem_error("x", std::make_error_code(std::errc::io_error)); }, err) == 3);
    CHECK(fedlab::app::guarded([]() -> int { throw std::runtime_error("x"); }, err) == 2);
    CHECK(fedlab::app::guarded([] { return 0; }, err) == 0);
}

}  // TEST_SUITE
