#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "fedlab/app.hpp"
#include "fedlab/experiment.hpp"

int main(int argc, char** argv) {
    fedlab::app::configure_logging();

    CLI::App cli{"Federated backdoor experiments"};
    cli.set_version_flag("--version", fedlab::exp::version_string() + " (" + fedlab::exp::git_hash() + ")");
    cli.require_subcommand(1);

    std::string config, out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;

    auto* run = cli.add_subcommand("run", "Run one experiment");
    run->add_option("--config", config, "Experiment config (JSON)")->required();
    run->add_option("--out", out, "Output directory");
    run->add_option("--seed", seed, "Override the config seed");
    run->add_option("--jobs", jobs, "Parallel client training workers");

    auto* compare = cli.add_subcommand("compare", "Run every config in a directory and merge the results");
    compare->add_option("--config", config, "Directory of configs differing only in the defense block")
        ->required();
    compare->add_option("--out", out, "Output directory");
    compare->add_option("--seed", seed, "Override every config seed");
    compare->add_option("--jobs", jobs, "Parallel client training workers");

    std::size_t grid_jobs = 1;
    auto* grid = cli.add_subcommand("grid", "Scan learning configurations for danger zones");
    grid->add_option("--config", config, "Experiment config with a grid block")->required();
    grid->add_option("--out", out, "Output directory; finished cells are reused");
    grid->add_option("--seed", seed, "Override the config seed");
    grid->add_option("--jobs", grid_jobs, "Cells evaluated in parallel");

    double rho = 0.0;
    std::size_t clients = 0, sampled = 0;
    auto* bounds = cli.add_subcommand("bounds", "Probability that malicious clients hold a majority of a round");
    bounds->add_option("--rho", rho, "Malicious client ratio")->required();
    bounds->add_option("--clients", clients, "Total clients N")->required();
    bounds->add_option("--sampled", sampled, "Clients sampled per round C")->required();

    try {
        cli.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = cli.exit(e);
        return code == 0 ? 0 : fedlab::app::kValidation;
    }

    if (*run) return fedlab::app::cmd_run(config, out, seed, jobs, std::cerr);
    if (*compare) return fedlab::app::cmd_compare(config, out, seed, jobs, std::cerr);
    if (*grid) return fedlab::app::cmd_grid(config, out, seed, grid_jobs, std::cerr);
    return fedlab::app::cmd_bounds(rho, clients, sampled, std::cout, std::cerr);
}
