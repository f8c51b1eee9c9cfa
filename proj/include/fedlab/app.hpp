#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>

namespace fedlab::app {

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2, kIo = 3 };

/// Runs `body`, mapping exceptions to exit codes and printing them to `err`.
int guarded(const std::function<int()>& body, std::ostream& err);

/// Sets the spdlog level from FEDLAB_LOG (trace, debug, info, warn, error, off).
void configure_logging();

int cmd_run(const std::filesystem::path& config, const std::filesystem::path& out,
            std::optional<std::uint64_t> seed, std::optional<std::size_t> jobs, std::ostream& err);

/// Every *.json in `configs` (at least two) must differ only in the defense
/// block. Writes one run directory per config plus compare.csv.
int cmd_compare(const std::filesystem::path& configs, const std::filesystem::path& out,
                std::optional<std::uint64_t> seed, std::optional<std::size_t> jobs, std::ostream& err);

/// Experiment config with an extra "grid": {lr: [...], batch_size: [...], epochs: [...]}
/// block. Writes danger_zones.csv and per-cell results under cells/.
int cmd_grid(const std::filesystem::path& config, const std::filesystem::path& out,
             std::optional<std::uint64_t> seed, std::size_t jobs, std::ostream& err);

/// Prints {chernoff, exact_binomial, exact_hypergeometric, normal_approx}.
int cmd_bounds(double rho, std::size_t clients, std::size_t sampled, std::ostream& out, std::ostream& err);

}  // namespace fedlab::app
