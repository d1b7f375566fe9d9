#include "forecaster/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace forecaster {

std::vector<SeedRun> run_seeds(const std::vector<std::uint64_t>& seeds, int workers,
                               const std::function<SeedRun(std::uint64_t)>& job) {
  std::vector<SeedRun> results(seeds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        results[i] = job(seeds[i]);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(seeds.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int i = 0; i < n; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

SeedRun train_seed(const AgentConfig& base, std::uint64_t seed, bool baseline) {
  AgentConfig cfg = base;
  cfg.seed = seed;
  if (baseline) cfg.planner_enabled = false;
  std::ostringstream csv;
  SeedRun run;
  run.seed = seed;
  run.summary = run_training(cfg, &csv);
  run.csv = csv.str();
  return run;
}

std::vector<SeedRun> transfer_seed(const AgentConfig& pre, const AgentConfig& fine,
                                   const std::vector<TransferArm>& arms, std::uint64_t seed) {
  AgentConfig pre_cfg = pre;
  AgentConfig fine_cfg = fine;
  pre_cfg.seed = seed;
  fine_cfg.seed = seed;
  const bool needs_checkpoint =
      std::any_of(arms.begin(), arms.end(), [](TransferArm a) { return a != TransferArm::scratch; });
  const std::string checkpoint = needs_checkpoint ? pretrain(pre_cfg) : std::string();
  std::vector<SeedRun> out;
  for (const auto arm : arms) {
    std::ostringstream csv;
    SeedRun run;
    run.seed = seed;
    run.summary = finetune(fine_cfg, checkpoint, arm, &csv);
    run.csv = csv.str();
    out.push_back(std::move(run));
  }
  return out;
}

std::optional<double> censored_median(std::vector<std::optional<long long>> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end(), [](const auto& a, const auto& b) {
    if (!a) return false;
    if (!b) return true;
    return *a < *b;
  });
  const std::size_t n = values.size();
  const auto& lo = values[(n - 1) / 2];
  const auto& hi = values[n / 2];
  if (!lo || !hi) return std::nullopt;
  return 0.5 * (static_cast<double>(*lo) + static_cast<double>(*hi));
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw IntegrityError("metrics CSV header mismatch: '" + line + "'");
  }
  std::vector<MetricsRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (fields.size() != 13) {
      throw IntegrityError("metrics CSV line " + std::to_string(lineno) + ": expected 13 fields, got " +
                           std::to_string(fields.size()));
    }
    try {
      MetricsRow r;
      r.step = std::stoll(fields[0]);
      r.episode = std::stoll(fields[1]);
      r.episode_return = std::stod(fields[2]);
      const int success = std::stoi(fields[3]);
      if (success != 0 && success != 1) throw std::invalid_argument("success");
      r.success = success == 1;
      r.wm_recon_loss = std::stod(fields[4]);
      r.wm_dyn_loss = std::stod(fields[5]);
      r.wm_rew_loss = std::stod(fields[6]);
      r.codec_loss = std::stod(fields[7]);
      r.abstract_latent_mse = std::stod(fields[8]);
      r.abstract_rew_mse = std::stod(fields[9]);
      r.manager_pg = std::stod(fields[10]);
      r.worker_pg = std::stod(fields[11]);
      r.plan_time_us = std::stoll(fields[12]);
      rows.push_back(r);
    } catch (const std::exception&) {
      throw IntegrityError("metrics CSV line " + std::to_string(lineno) + ": malformed field");
    }
  }
  return rows;
}

std::optional<long long> episodes_to_first_success(const std::vector<MetricsRow>& rows) {
  for (const auto& r : rows)
    if (r.success) return r.episode;
  return std::nullopt;
}

std::string aggregate_runs(const std::vector<std::vector<MetricsRow>>& runs) {
  std::map<long long, std::vector<const MetricsRow*>> by_episode;
  for (const auto& run : runs)
    for (const auto& r : run) by_episode[r.episode].push_back(&r);
  std::ostringstream os;
  os << "# episode mean_return stderr_return mean_success stderr_success runs\n";
  for (const auto& [episode, rows] : by_episode) {
    const double n = static_cast<double>(rows.size());
    auto stats = [&](auto get) {
      double mean = 0.0;
      for (const auto* r : rows) mean += get(*r);
      mean /= n;
      double var = 0.0;
      for (const auto* r : rows) var += (get(*r) - mean) * (get(*r) - mean);
      const double se = rows.size() > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
      return std::pair{mean, se};
    };
    const auto [mr, sr] = stats([](const MetricsRow& r) { return r.episode_return; });
    const auto [ms, ss] = stats([](const MetricsRow& r) { return r.success ? 1.0 : 0.0; });
    char buf[256];
    std::snprintf(buf, sizeof buf, "%lld %.6g %.6g %.6g %.6g %zu\n", episode, mr, sr, ms, ss, rows.size());
    os << buf;
  }
  return os.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << content;
}

}  // namespace forecaster
