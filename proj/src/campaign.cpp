#include "fiadla/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "fiadla/error.hpp"

namespace fiadla {

namespace {

std::string fmt_g(double v) { return fmt::format("{:.9g}", v); }

std::string to_string(DegradePolicy p) {
  switch (p) {
    case DegradePolicy::kAuto: return "auto";
    case DegradePolicy::kStall: return "stall";
    case DegradePolicy::kDiscard: return "discard";
  }
  return "auto";
}

std::string er_rule_name(ErRule r) { return r == ErRule::kAnyComponent ? "any" : "per_component"; }

// Collects every problem instead of stopping at the first one.
class Reader {
 public:
  std::vector<std::string> problems;

  void keys(const nlohmann::json& obj, const std::string& where,
            std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) {
      problems.push_back(fmt::format("{}: expected an object", where.empty() ? "<root>" : where));
      return;
    }
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : obj.items()) {
      if (!ok.count(k)) problems.push_back(fmt::format("{}: unknown key", join(where, k)));
    }
  }

  template <typename T>
  void get(const nlohmann::json& obj, const std::string& where, const char* key, T& out) {
    if (!obj.is_object() || !obj.contains(key)) return;
    try {
      out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      problems.push_back(fmt::format("{}: wrong type", join(where, key)));
    }
  }

  template <typename T, typename F>
  void get_enum(const nlohmann::json& obj, const std::string& where, const char* key, T& out,
                F parse) {
    std::string s;
    if (!obj.is_object() || !obj.contains(key)) return;
    get(obj, where, key, s);
    if (s.empty()) return;
    try {
      out = parse(s);
    } catch (const std::exception&) {
      problems.push_back(fmt::format("{}: unknown value '{}'", join(where, key), s));
    }
  }

  static std::string join(const std::string& where, const std::string& key) {
    return where.empty() ? key : where + "." + key;
  }
};

DegradePolicy policy_from_string(const std::string& s) {
  if (s == "auto") return DegradePolicy::kAuto;
  if (s == "stall") return DegradePolicy::kStall;
  if (s == "discard") return DegradePolicy::kDiscard;
  throw std::invalid_argument(s);
}

ErRule er_rule_from_string(const std::string& s) {
  if (s == "any") return ErRule::kAnyComponent;
  if (s == "per_component") return ErRule::kPerComponent;
  throw std::invalid_argument(s);
}

}  // namespace

void CampaignConfig::validate() const {
  std::vector<std::string> p;
  for (std::size_t i = 0; i < bers.size(); ++i) {
    if (!(bers[i] >= 0.0 && bers[i] <= 1.0)) {
      p.push_back(fmt::format("bers[{}]: {} outside [0, 1]", i, bers[i]));
    }
  }
  if (paths < 0) p.push_back("missions.paths: must be >= 0");
  if (weathers < 1 || weathers > kWeatherCount) p.push_back("missions.weathers: must be in [1, 4]");
  for (std::size_t i = 0; i < mission_ids.size(); ++i) {
    if (mission_ids[i] < 0 || mission_ids[i] >= paths * weathers) {
      p.push_back(fmt::format("missions.ids[{}]: {} outside [0, {})", i, mission_ids[i],
                              paths * weathers));
    }
  }
  if (array.dims.rows < 1) p.push_back("array.rows: must be >= 1");
  if (array.dims.cols < 1) p.push_back("array.cols: must be >= 1");
  if (hca.dppu_size < 1) p.push_back("hca.dppu_size: must be >= 1");
  for (std::size_t i = 0; i < reliability.schemes.size(); ++i) {
    try {
      scheme_from_string(reliability.schemes[i]);
    } catch (const std::exception&) {
      p.push_back(fmt::format("reliability.schemes[{}]: unknown scheme '{}'", i,
                              reliability.schemes[i]));
    }
  }
  for (std::size_t i = 0; i < reliability.rates.size(); ++i) {
    const double r = reliability.rates[i];
    if (!(r >= 0.0 && r <= 1.0)) p.push_back(fmt::format("reliability.rates[{}]: outside [0, 1]", i));
  }
  if (reliability.trials < 1) p.push_back("reliability.trials: must be >= 1");
  if (!(er_threshold >= 0.0)) p.push_back("metrics.er_threshold: must be >= 0");
  if (jobs < 1) p.push_back("jobs: must be >= 1");
  if (output_dir.empty()) p.push_back("output_dir: must not be empty");
  if (!p.empty()) throw ConfigError(std::move(p));
}

std::vector<Mission> CampaignConfig::missions() const {
  std::vector<Mission> out;
  if (mission_ids.empty()) return generate_missions(paths, weathers, seed);
  for (int id : mission_ids) out.push_back(generate_mission(id, seed, weathers));
  return out;
}

std::optional<HcaOptions> CampaignConfig::hca_options() const {
  if (!hca.enabled) return std::nullopt;
  HcaOptions o;
  o.config = HcaConfig::with_dppu(hca.dppu_size);
  o.policy = hca.policy;
  o.bypass_faulty_dppu = hca.bypass_faulty_dppu;
  return o;
}

nlohmann::json to_json(const CampaignConfig& c) {
  nlohmann::json ids = nlohmann::json::array();
  for (int id : c.mission_ids) ids.push_back(id);
  return {
      {"seed", c.seed},
      {"bers", c.bers},
      {"missions", {{"paths", c.paths}, {"weathers", c.weathers}, {"ids", ids}}},
      {"path", to_string(c.path)},
      {"fault_model", to_string(c.fault_model)},
      {"array",
       {{"rows", c.array.dims.rows},
        {"cols", c.array.dims.cols},
        {"input_buffer_bytes", c.array.input_buffer_bytes},
        {"output_buffer_bytes", c.array.output_buffer_bytes},
        {"weight_buffer_bytes", c.array.weight_buffer_bytes}}},
      {"hca",
       {{"enabled", c.hca.enabled},
        {"dppu_size", c.hca.dppu_size},
        {"policy", to_string(c.hca.policy)},
        {"bypass_faulty_dppu", c.hca.bypass_faulty_dppu}}},
      {"reliability",
       {{"schemes", c.reliability.schemes},
        {"rates", c.reliability.rates},
        {"trials", c.reliability.trials},
        {"model", to_string(c.reliability.model)}}},
      {"metrics", {{"er_rule", er_rule_name(c.er_rule)}, {"er_threshold", c.er_threshold}}},
      {"jobs", c.jobs},
      {"output_dir", c.output_dir},
      {"write_logs", c.write_logs},
  };
}

CampaignConfig config_from_json(const nlohmann::json& j) {
  CampaignConfig c;
  Reader r;
  r.keys(j, "", {"seed", "bers", "missions", "path", "fault_model", "array", "hca", "reliability",
                 "metrics", "jobs", "output_dir", "write_logs"});
  if (!r.problems.empty() && !j.is_object()) throw ConfigError(r.problems);
  r.get(j, "", "seed", c.seed);
  r.get(j, "", "bers", c.bers);
  r.get_enum(j, "", "path", c.path, exec_path_from_string);
  r.get_enum(j, "", "fault_model", c.fault_model, fault_distribution_from_string);
  r.get(j, "", "jobs", c.jobs);
  r.get(j, "", "output_dir", c.output_dir);
  r.get(j, "", "write_logs", c.write_logs);
  if (j.contains("missions")) {
    const auto& m = j.at("missions");
    r.keys(m, "missions", {"paths", "weathers", "ids"});
    r.get(m, "missions", "paths", c.paths);
    r.get(m, "missions", "weathers", c.weathers);
    r.get(m, "missions", "ids", c.mission_ids);
  }
  if (j.contains("array")) {
    const auto& a = j.at("array");
    r.keys(a, "array",
           {"rows", "cols", "input_buffer_bytes", "output_buffer_bytes", "weight_buffer_bytes"});
    r.get(a, "array", "rows", c.array.dims.rows);
    r.get(a, "array", "cols", c.array.dims.cols);
    r.get(a, "array", "input_buffer_bytes", c.array.input_buffer_bytes);
    r.get(a, "array", "output_buffer_bytes", c.array.output_buffer_bytes);
    r.get(a, "array", "weight_buffer_bytes", c.array.weight_buffer_bytes);
  }
  if (j.contains("hca")) {
    const auto& h = j.at("hca");
    r.keys(h, "hca", {"enabled", "dppu_size", "policy", "bypass_faulty_dppu"});
    r.get(h, "hca", "enabled", c.hca.enabled);
    r.get(h, "hca", "dppu_size", c.hca.dppu_size);
    r.get_enum(h, "hca", "policy", c.hca.policy, policy_from_string);
    r.get(h, "hca", "bypass_faulty_dppu", c.hca.bypass_faulty_dppu);
  }
  if (j.contains("reliability")) {
    const auto& rel = j.at("reliability");
    r.keys(rel, "reliability", {"schemes", "rates", "trials", "model"});
    r.get(rel, "reliability", "schemes", c.reliability.schemes);
    r.get(rel, "reliability", "rates", c.reliability.rates);
    r.get(rel, "reliability", "trials", c.reliability.trials);
    r.get_enum(rel, "reliability", "model", c.reliability.model, fault_distribution_from_string);
  }
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    r.keys(m, "metrics", {"er_rule", "er_threshold"});
    r.get_enum(m, "metrics", "er_rule", c.er_rule, er_rule_from_string);
    r.get(m, "metrics", "er_threshold", c.er_threshold);
  }
  std::vector<std::string> problems = std::move(r.problems);
  try {
    c.validate();
  } catch (const ConfigError& e) {
    problems.insert(problems.end(), e.problems().begin(), e.problems().end());
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return c;
}

CampaignConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Translate the byte offset into line:column.
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(fmt::format("parse error at line {}, column {}: {}", line, col, e.what()));
  }
  return config_from_json(j);
}

CampaignConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config(const CampaignConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(cfg).dump(2) << '\n';
}

std::string to_string(TaskStatus s) {
  switch (s) {
    case TaskStatus::kQueued: return "queued";
    case TaskStatus::kRunning: return "running";
    case TaskStatus::kDone: return "done";
    case TaskStatus::kFailed: return "failed";
  }
  return "queued";
}

std::size_t CampaignResult::failures() const {
  return static_cast<std::size_t>(std::count_if(tasks.begin(), tasks.end(), [](const auto& t) {
    return t.status == TaskStatus::kFailed;
  }));
}

std::uint64_t noise_seed(std::uint64_t master, int mission_id) {
  return derive_seed(master, TaskKind::kNoise, static_cast<std::uint64_t>(mission_id));
}

std::uint64_t seu_seed(std::uint64_t master, int mission_id, double ber) {
  return derive_seed(master, TaskKind::kSeu, static_cast<std::uint64_t>(mission_id),
                     double_bits(ber));
}

int effective_jobs(int requested) {
  if (const char* env = std::getenv("FIADLA_JOBS")) {
    try {
      const int v = std::stoi(env);
      if (v >= 1) return v;
    } catch (const std::exception&) {
    }
  }
  return std::max(1, requested);
}

std::uint64_t config_hash(const CampaignConfig& cfg) {
  // FNV-1a over the normalized config text, minus settings that do not
  // change results.
  CampaignConfig c = cfg;
  c.jobs = 1;
  c.output_dir.clear();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : to_json(c).dump()) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

struct Event {
  std::size_t task;
  TaskStatus status;
};

}  // namespace

CampaignResult run_campaign(const CampaignConfig& cfg, const ProgressMonitor& monitor) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  CampaignResult result;
  result.config = cfg;

  const auto missions = cfg.missions();
  const auto hca = cfg.hca_options();
  const Network net = build_reference_controller();
  RunOptions opts;
  opts.path = cfg.path;
  opts.array = cfg.array;
  opts.model = cfg.fault_model;
  opts.hca = hca;

  const std::size_t total = cfg.bers.size() * missions.size();
  result.tasks.resize(total);
  std::vector<std::optional<SummaryRow>> rows(total);
  for (std::size_t b = 0; b < cfg.bers.size(); ++b) {
    for (std::size_t m = 0; m < missions.size(); ++m) {
      auto& t = result.tasks[b * missions.size() + m];
      t.index = b * missions.size() + m;
      t.ber = cfg.bers[b];
      t.mission_id = missions[m].id;
      t.noise_seed = noise_seed(cfg.seed, t.mission_id);
      t.seu_seed = seu_seed(cfg.seed, t.mission_id, t.ber);
      if (cfg.write_logs) {
        t.log_path = fmt::format("logs/ber{}_mission{:03d}.jsonl", b, t.mission_id);
      }
    }
  }
  if (cfg.write_logs) std::filesystem::create_directories(std::filesystem::path(cfg.output_dir) / "logs");

  std::mutex mu;
  std::condition_variable cv;
  std::deque<Event> events;
  std::atomic<std::size_t> next{0};
  auto post = [&](std::size_t task, TaskStatus s) {
    {
      std::lock_guard lock(mu);
      events.push_back({task, s});
    }
    cv.notify_one();
  };

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= total) return;
      auto& task = result.tasks[i];
      const auto& mission = missions[i % missions.size()];
      post(i, TaskStatus::kRunning);
      const auto start = std::chrono::steady_clock::now();
      try {
        const DrivingLog log = run_mission(mission, net, task.ber, cfg.seed, opts);
        const auto nm = network_metrics(log, cfg.er_threshold, cfg.er_rule);
        SummaryRow row;
        row.ber = task.ber;
        row.mission_id = mission.id;
        row.weather = mission.weather;
        row.er = nm.er;
        row.mae = nm.mae;
        row.success = log.success();
        row.mc = mission_completion(log);
        row.tdt_m = log.distance_traveled;
        row.steps = log.step_count;
        row.seed = cfg.seed;
        if (!task.log_path.empty()) {
          std::ofstream out(std::filesystem::path(cfg.output_dir) / task.log_path);
          write_log_jsonl(out, log);
        }
        rows[i] = row;
        task.status = TaskStatus::kDone;
      } catch (const std::exception& e) {
        task.error = e.what();
        task.status = TaskStatus::kFailed;
      }
      task.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      post(i, task.status);
    }
  };

  const int jobs = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(std::max<std::size_t>(total, 1))));
  {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);

    // Coordinator: drain the progress channel until every task has finished.
    std::size_t completed = 0, failed = 0;
    while (completed + failed < total) {
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return !events.empty(); });
      auto batch = std::move(events);
      events.clear();
      lock.unlock();
      for (const auto& ev : batch) {
        if (ev.status == TaskStatus::kDone) ++completed;
        if (ev.status == TaskStatus::kFailed) ++failed;
        if (monitor) {
          ProgressUpdate u;
          u.task = ev.task;
          u.status = ev.status;
          u.completed = completed;
          u.failed = failed;
          u.total = total;
          u.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          const std::size_t finished = completed + failed;
          u.eta_s = finished > 0 ? u.elapsed_s / static_cast<double>(finished) *
                                       static_cast<double>(total - finished)
                                 : 0.0;
          monitor(u);
        }
      }
    }
  }

  for (auto& r : rows) {
    if (r) result.rows.push_back(*r);
  }

  if (!cfg.reliability.schemes.empty() && !cfg.reliability.rates.empty()) {
    std::vector<SchemeConfig> schemes;
    for (const auto& name : cfg.reliability.schemes) {
      SchemeConfig s;
      s.scheme = scheme_from_string(name);
      s.hca = HcaConfig::with_dppu(cfg.hca.dppu_size);
      schemes.push_back(s);
    }
    ReliabilityOptions ro;
    ro.dims = cfg.array.dims;
    ro.model = cfg.reliability.model;
    ro.trials = cfg.reliability.trials;
    ro.seed = cfg.seed;
    ro.jobs = jobs;
    result.reliability = reliability_sweep(schemes, ro, cfg.reliability.rates);
  }
  result.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

std::vector<AggregateRow> aggregate(const std::vector<SummaryRow>& rows) {
  std::vector<double> order;
  std::map<double, std::vector<const SummaryRow*>> groups;
  for (const auto& r : rows) {
    if (!groups.count(r.ber)) order.push_back(r.ber);
    groups[r.ber].push_back(&r);
  }
  std::vector<AggregateRow> out;
  for (double ber : order) {
    const auto& g = groups[ber];
    std::vector<double> er, mae, mc, tdt;
    int ok = 0;
    for (const auto* r : g) {
      er.push_back(r->er);
      mae.push_back(r->mae);
      mc.push_back(r->mc);
      tdt.push_back(r->tdt_m);
      ok += r->success ? 1 : 0;
    }
    AggregateRow a;
    a.ber = ber;
    a.missions = static_cast<int>(g.size());
    a.msr = g.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(g.size());
    a.er = dispersion(er);
    a.mae = dispersion(mae);
    a.mc = dispersion(mc);
    a.tdt = dispersion(tdt);
    out.push_back(a);
  }
  return out;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "ber,mission_id,weather,er,mae,success,mc,tdt_m,steps,seed\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", fmt_g(r.ber), r.mission_id, r.weather,
                       fmt_g(r.er), fmt_g(r.mae), r.success ? 1 : 0, fmt_g(r.mc), fmt_g(r.tdt_m),
                       r.steps, r.seed);
  }
}

std::vector<SummaryRow> read_summary_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "ber,mission_id,weather,er,mae,success,mc,tdt_m,steps,seed") {
    throw std::runtime_error("summary.csv: unexpected header");
  }
  std::vector<SummaryRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 10) throw std::runtime_error(fmt::format("summary.csv line {}: expected 10 fields", lineno));
    SummaryRow r;
    try {
      r.ber = std::stod(f[0]);
      r.mission_id = std::stoi(f[1]);
      r.weather = std::stoi(f[2]);
      r.er = std::stod(f[3]);
      r.mae = std::stod(f[4]);
      r.success = f[5] == "1";
      r.mc = std::stod(f[6]);
      r.tdt_m = std::stod(f[7]);
      r.steps = std::stoi(f[8]);
      r.seed = std::stoull(f[9]);
    } catch (const std::exception&) {
      throw std::runtime_error(fmt::format("summary.csv line {}: bad number", lineno));
    }
    rows.push_back(r);
  }
  return rows;
}

void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
  out << "ber,missions,msr,er_mean,er_std,mae_mean,mae_std,mae_cv,mc_mean,mc_std,mc_cv,"
         "tdt_mean_m,tdt_std_m\n";
  for (const auto& a : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", fmt_g(a.ber), a.missions,
                       fmt_g(a.msr), fmt_g(a.er.mean), fmt_g(a.er.std), fmt_g(a.mae.mean),
                       fmt_g(a.mae.std), fmt_g(a.mae.cv), fmt_g(a.mc.mean), fmt_g(a.mc.std),
                       fmt_g(a.mc.cv), fmt_g(a.tdt.mean), fmt_g(a.tdt.std));
  }
}

void write_report(const CampaignResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", (dir / name).string()));
    return out;
  };
  {
    auto out = open("summary.csv");
    write_summary_csv(out, result.rows);
  }
  {
    auto out = open("aggregate.csv");
    write_aggregate_csv(out, aggregate(result.rows));
  }
  {
    auto out = open("config.json");
    if (!result.config_text.empty()) {
      out << result.config_text;
    } else {
      out << to_json(result.config).dump(2) << '\n';
    }
  }
  {
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& t : result.tasks) {
      nlohmann::json j = {{"task", t.index},
                          {"ber", t.ber},
                          {"mission_id", t.mission_id},
                          {"seed", result.config.seed},
                          {"noise_seed", t.noise_seed},
                          {"seu_seed", t.seu_seed},
                          {"status", to_string(t.status)},
                          {"log", t.log_path.empty() ? nlohmann::json(nullptr) : nlohmann::json(t.log_path)}};
      if (!t.error.empty()) j["error"] = t.error;
      tasks.push_back(std::move(j));
    }
    const nlohmann::json manifest = {
        {"format", "fiadla-manifest/1"},
        {"config_hash", fmt::format("{:016x}", config_hash(result.config))},
        {"rng", Rng::kAlgorithm},
        {"path", to_string(result.config.path)},
        {"replay", "fiadla drive --mission <mission_id> --ber <ber> --seed <seed>"},
        {"tasks", tasks},
        {"failed", result.failures()},
    };
    auto out = open("manifest.json");
    out << manifest.dump(1) << '\n';
  }
  {
    auto out = open("timings.csv");
    out << "task,ber,mission_id,wall_s\n";
    for (const auto& t : result.tasks) {
      out << fmt::format("{},{},{},{:.6f}\n", t.index, fmt_g(t.ber), t.mission_id, t.wall_s);
    }
    out << fmt::format("total,,,{:.6f}\n", result.wall_s);
  }
  if (!result.reliability.empty()) {
    auto out = open("reliability.csv");
    write_reliability_csv(out, result.reliability);
  }
}

}  // namespace fiadla
