#pragma once

// BER-sweep campaigns: configuration, parallel mission tasks with an
// observer-only progress channel, aggregation and report files.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fiadla/array_sim.hpp"
#include "fiadla/drive.hpp"
#include "fiadla/metrics.hpp"
#include "fiadla/redundancy.hpp"
#include "json.hpp"

namespace fiadla {

struct HcaSettings {
  bool enabled = false;
  int dppu_size = 16;
  DegradePolicy policy = DegradePolicy::kAuto;
  bool bypass_faulty_dppu = false;

  friend bool operator==(const HcaSettings&, const HcaSettings&) = default;
};

struct ReliabilitySettings {
  std::vector<std::string> schemes;  // empty: no sweep
  std::vector<double> rates;
  std::int64_t trials = 100000;
  FaultDistribution model = FaultDistribution::kRandom;

  friend bool operator==(const ReliabilitySettings&, const ReliabilitySettings&) = default;
};

struct CampaignConfig {
  std::uint64_t seed = 1;
  std::vector<double> bers{0.0, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3};
  int paths = 25;
  int weathers = kWeatherCount;
  // Subset of mission ids; empty runs all paths * weathers.
  std::vector<int> mission_ids;
  ExecPath path = ExecPath::kFast;
  FaultDistribution fault_model = FaultDistribution::kRandom;
  ArrayConfig array;
  HcaSettings hca;
  ReliabilitySettings reliability;
  ErRule er_rule = ErRule::kAnyComponent;
  double er_threshold = kErThreshold;
  int jobs = 1;
  std::string output_dir = "campaign-out";
  bool write_logs = false;

  // Throws ConfigError listing every violated field.
  void validate() const;
  std::vector<Mission> missions() const;
  std::optional<HcaOptions> hca_options() const;

  friend bool operator==(const CampaignConfig&, const CampaignConfig&) = default;
};

nlohmann::json to_json(const CampaignConfig& cfg);
// Rejects unknown keys; fills defaults. Throws ConfigError.
CampaignConfig config_from_json(const nlohmann::json& j);
CampaignConfig parse_config(const std::string& text);
CampaignConfig load_config(const std::filesystem::path& path);
void save_config(const CampaignConfig& cfg, const std::filesystem::path& path);

enum class TaskStatus { kQueued, kRunning, kDone, kFailed };
std::string to_string(TaskStatus s);

struct ProgressUpdate {
  std::size_t task = 0;
  TaskStatus status = TaskStatus::kQueued;
  std::size_t completed = 0;
  std::size_t failed = 0;
  std::size_t total = 0;
  double elapsed_s = 0.0;
  double eta_s = 0.0;
};

using ProgressMonitor = std::function<void(const ProgressUpdate&)>;

struct SummaryRow {
  double ber = 0.0;
  int mission_id = 0;
  int weather = 0;
  double er = 0.0;
  double mae = 0.0;
  bool success = false;
  double mc = 0.0;
  double tdt_m = 0.0;
  int steps = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const SummaryRow&, const SummaryRow&) = default;
};

struct TaskRecord {
  std::size_t index = 0;
  double ber = 0.0;
  int mission_id = 0;
  std::uint64_t noise_seed = 0;
  std::uint64_t seu_seed = 0;
  TaskStatus status = TaskStatus::kQueued;
  std::string error;
  std::string log_path;
  double wall_s = 0.0;
};

struct AggregateRow {
  double ber = 0.0;
  int missions = 0;
  double msr = 0.0;
  Dispersion er, mae, mc, tdt;
};

struct CampaignResult {
  CampaignConfig config;
  std::string config_text;  // verbatim input, if loaded from a file
  std::vector<SummaryRow> rows;  // completed tasks, sorted by (ber index, mission id)
  std::vector<TaskRecord> tasks;
  std::vector<ReliabilityEstimate> reliability;
  double wall_s = 0.0;

  std::size_t failures() const;
};

// Runs every (ber, mission) task on cfg.jobs workers. Task failures are
// recorded, not thrown. The monitor is called on the calling thread.
CampaignResult run_campaign(const CampaignConfig& cfg, const ProgressMonitor& monitor = {});

// Groups rows by ber (first-seen order) and recomputes the aggregates.
std::vector<AggregateRow> aggregate(const std::vector<SummaryRow>& rows);

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> read_summary_csv(std::istream& in);
void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows);

// summary.csv, aggregate.csv, manifest.json, config.json (snapshot) and
// timings.csv; plus reliability.csv when a sweep ran.
void write_report(const CampaignResult& result, const std::filesystem::path& dir);

// Ignores jobs and output_dir.
std::uint64_t config_hash(const CampaignConfig& cfg);

// Seed streams used by run_mission for a task; listed in the manifest.
std::uint64_t noise_seed(std::uint64_t master, int mission_id);
std::uint64_t seu_seed(std::uint64_t master, int mission_id, double ber);

// Worker count after the FIADLA_JOBS override.
int effective_jobs(int requested);

}  // namespace fiadla
