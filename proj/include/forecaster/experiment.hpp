#pragma once

#include "forecaster/orchestrator.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace forecaster {

struct SeedRun {
  std::uint64_t seed = 0;
  TrainingSummary summary;
  std::string csv;
};

/// Runs `job(seed)` for every seed on up to `workers` threads; results keep
/// seed order. Each job owns its full agent state.
std::vector<SeedRun> run_seeds(const std::vector<std::uint64_t>& seeds, int workers,
                               const std::function<SeedRun(std::uint64_t)>& job);

/// Training run with `seed` (and maze seed) substituted into `base`.
SeedRun train_seed(const AgentConfig& base, std::uint64_t seed, bool baseline);

/// Pretrain on `pre`, then fine-tune each arm on `fine`, all with `seed`.
std::vector<SeedRun> transfer_seed(const AgentConfig& pre, const AgentConfig& fine,
                                   const std::vector<TransferArm>& arms, std::uint64_t seed);

/// Median where nullopt means "never" (sorts above every value). Returns
/// nullopt when the median itself is censored.
std::optional<double> censored_median(std::vector<std::optional<long long>> values);

/// Strict CSV parse; throws IntegrityError when the header differs from
/// kMetricsHeader or a row has the wrong field count.
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

/// First row with success == 1, by the `episode` column.
std::optional<long long> episodes_to_first_success(const std::vector<MetricsRow>& rows);

/// Per-episode mean and standard error across runs, gnuplot-ready columns:
/// episode mean_return stderr_return mean_success stderr_success runs.
std::string aggregate_runs(const std::vector<std::vector<MetricsRow>>& runs);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace forecaster
