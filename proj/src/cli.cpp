#include "fiadla/cli.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "fiadla/array_sim.hpp"
#include "fiadla/campaign.hpp"
#include "fiadla/classifier.hpp"
#include "fiadla/drive.hpp"
#include "fiadla/error.hpp"
#include "fiadla/metrics.hpp"
#include "fiadla/network_io.hpp"
#include "fiadla/redundancy.hpp"
#include "fiadla/schedule.hpp"

namespace fiadla {

namespace {

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw ConfigError("bad number '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct CampaignArgs {
  std::string config;
  int jobs = 0;
  std::string out_dir;
  bool quiet = false;
};

int cmd_campaign(const CampaignArgs& a, std::ostream& out, std::ostream& err) {
  std::ifstream in(a.config);
  if (!in) throw ConfigError("cannot read config '" + a.config + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  CampaignConfig cfg = parse_config(ss.str());
  if (a.jobs > 0) cfg.jobs = a.jobs;
  cfg.jobs = effective_jobs(cfg.jobs);
  if (!a.out_dir.empty()) cfg.output_dir = a.out_dir;

  std::size_t last_pct = 101;
  auto monitor = [&](const ProgressUpdate& u) {
    if (a.quiet || u.status == TaskStatus::kRunning) return;
    const std::size_t pct = u.total ? (u.completed + u.failed) * 100 / u.total : 100;
    if (pct / 10 != last_pct / 10 || u.status == TaskStatus::kFailed) {
      err << fmt::format("[{}/{}] {} task {} failed={} eta={:.0f}s\n", u.completed + u.failed,
                         u.total, to_string(u.status), u.task, u.failed, u.eta_s);
      last_pct = pct;
    }
  };
  CampaignResult result = run_campaign(cfg, monitor);
  result.config_text = ss.str();
  write_report(result, cfg.output_dir);
  for (const auto& t : result.tasks) {
    if (t.status == TaskStatus::kFailed) {
      err << fmt::format("task {} (ber {}, mission {}) failed: {}\n", t.index, t.ber, t.mission_id,
                         t.error);
    }
  }
  std::ostringstream agg;
  write_aggregate_csv(agg, aggregate(result.rows));
  out << agg.str();
  return result.failures() > 0 ? kExitTaskFailure : kExitOk;
}

struct DriveArgs {
  int mission = 0;
  double ber = 0.0;
  std::uint64_t seed = 1;
  bool array_sim = false;
  std::string model = "random";
  bool hca = false;
  int dppu = 16;
  std::string log;
  std::string network;
};

int cmd_drive(const DriveArgs& a, std::ostream& out) {
  if (a.mission < 0 || a.mission >= 25 * kWeatherCount) {
    throw ConfigError(fmt::format("--mission {} outside [0, 100)", a.mission));
  }
  const Mission m = generate_mission(a.mission, a.seed);
  const Network net = a.network.empty() ? build_reference_controller() : load_network(a.network);
  RunOptions opts;
  opts.path = a.array_sim ? ExecPath::kArraySim : ExecPath::kFast;
  opts.model = fault_distribution_from_string(a.model);
  if (a.hca) {
    HcaOptions h;
    h.config = HcaConfig::with_dppu(a.dppu);
    opts.hca = h;
  }
  const DrivingLog log = run_mission(m, net, a.ber, a.seed, opts);
  if (!a.log.empty()) {
    std::ofstream f(a.log);
    if (!f) throw std::runtime_error("cannot write " + a.log);
    write_log_jsonl(f, log);
  }
  auto j = summary_json(log);
  const auto nm = network_metrics(log);
  j["er"] = nm.er;
  j["mae"] = nm.mae;
  j["mc"] = mission_completion(log);
  j["path"] = to_string(opts.path);
  out << j.dump() << '\n';
  return kExitOk;
}

struct ReliabilityArgs {
  std::string schemes = "hca";
  std::string model = "random";
  std::string rates = "0.01";
  std::int64_t trials = 100000;
  std::uint64_t seed = 1;
  int rows = 32, cols = 16, dppu = 16;
  int spares_row = 1, spares_col = 1, diag = 0;
  bool no_dppu_faults = false;
  int jobs = 1;
  double cluster_mean = 0.0, cluster_radius = 2.0;
};

int cmd_reliability(const ReliabilityArgs& a, std::ostream& out) {
  std::vector<SchemeConfig> schemes;
  for (const auto& name : split(a.schemes)) {
    SchemeConfig s;
    try {
      s.scheme = scheme_from_string(name);
    } catch (const std::exception&) {
      throw ConfigError("unknown scheme '" + name + "'");
    }
    s.spares_per_row = a.spares_row;
    s.spares_per_column = a.spares_col;
    s.diagonal_units = a.diag;
    s.hca = HcaConfig::with_dppu(a.dppu);
    schemes.push_back(s);
  }
  if (schemes.empty()) throw ConfigError("--scheme is empty");
  ReliabilityOptions o;
  o.dims = {a.rows, a.cols};
  try {
    o.model = fault_distribution_from_string(a.model);
  } catch (const std::exception&) {
    throw ConfigError("unknown model '" + a.model + "'");
  }
  o.cluster.count_mean = a.cluster_mean;
  o.cluster.radius = a.cluster_radius;
  o.trials = a.trials;
  o.seed = a.seed;
  o.sample_dppu_faults = !a.no_dppu_faults;
  o.jobs = effective_jobs(a.jobs);
  const auto rates = parse_list(a.rates);
  for (double r : rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError(fmt::format("rate {} outside [0, 1]", r));
  }
  write_reliability_csv(out, reliability_sweep(schemes, o, rates));
  return kExitOk;
}

struct ArraySimArgs {
  bool demo = false;
  int c = 64, k = 3, o = 32, size = 8, stride = 1, pad = 1;
  int rows = 32, cols = 16;
  std::string faults_file;
  double pe_rate = 0.0;
  std::uint64_t seed = 1;
  bool hca = false;
  int dppu = 16;
  std::string policy = "auto";
  std::string trace;
  int iterations = 4;
};

int cmd_array_sim(const ArraySimArgs& a, std::ostream& out) {
  if (!a.demo) throw ConfigError("array-sim needs --demo-layer");
  LayerSpec layer;
  layer.kind = LayerKind::kConv;
  layer.kernel = a.k;
  layer.stride = a.stride;
  layer.padding = a.pad;
  layer.in_channels = a.c;
  layer.out_channels = a.o;
  layer.requant_shift = 7;
  validate(layer);
  ArrayConfig cfg;
  cfg.dims = {a.rows, a.cols};

  Rng rng(a.seed);
  std::vector<std::int8_t> in(static_cast<std::size_t>(a.size) * a.size * a.c);
  for (auto& v : in) v = static_cast<std::int8_t>(static_cast<int>(rng.below(256)) - 128);
  std::vector<std::int8_t> w(static_cast<std::size_t>(a.k) * a.k * a.c * a.o);
  for (auto& v : w) v = static_cast<std::int8_t>(static_cast<int>(rng.below(256)) - 128);
  const FxpTensor input({a.size, a.size, a.c}, std::move(in), 4);
  const FxpTensor weights(weight_dims(layer), std::move(w), 4);

  FaultSet faults;
  if (!a.faults_file.empty()) {
    std::ifstream f(a.faults_file);
    if (!f) throw ConfigError("cannot read " + a.faults_file);
    faults = fault_set_from_json(nlohmann::json::parse(f));
  } else if (a.pe_rate > 0.0) {
    faults = sample_random_faults(cfg.dims, a.pe_rate, rng);
  }

  std::optional<HcaOptions> hca;
  if (a.hca) {
    HcaOptions h;
    h.config = HcaConfig::with_dppu(a.dppu);
    if (a.policy == "stall") h.policy = DegradePolicy::kStall;
    else if (a.policy == "discard") h.policy = DegradePolicy::kDiscard;
    else if (a.policy != "auto") throw ConfigError("unknown --policy '" + a.policy + "'");
    hca = h;
  }
  const auto golden = conv2d_ref(input, layer, weights);
  const auto run = simulate_layer(input, weights, {}, layer, cfg, faults, hca);
  std::size_t diff = 0;
  for (std::size_t i = 0; i < golden.size(); ++i) diff += golden.data[i] != run.output.data[i];

  nlohmann::json j = {{"layer", {{"c", a.c}, {"k", a.k}, {"o", a.o}, {"size", a.size}}},
                      {"fault_pe_num", faults.fault_pe_num()},
                      {"mismatched_outputs", diff},
                      {"outputs", golden.size()},
                      {"timeline", to_json(run.timeline)}};
  if (a.hca) {
    std::vector<ScheduleTraceRow> trace;
    const auto sched = event_simulate_schedule(run.timeline.active_cols, run.timeline.fault_pe_num,
                                               a.dppu, a.c, a.k, a.iterations,
                                               a.trace.empty() ? nullptr : &trace);
    j["event_schedule"] = {{"feasible", sched.feasible},
                           {"iterations", sched.iterations},
                           {"total_cycles", sched.total_cycles},
                           {"overhead_per_iteration", sched.overhead_per_iteration()},
                           {"max_port_backlog", sched.max_port_backlog},
                           {"port_oversubscribed", sched.port_oversubscribed}};
    if (!a.trace.empty()) {
      std::ofstream f(a.trace);
      write_schedule_trace_csv(f, trace);
    }
  }
  out << j.dump(1) << '\n';
  return kExitOk;
}

struct InjectArgs {
  std::string network;
  double ber = 0.0;
  std::uint64_t seed = 1;
  int count = 1;
};

int cmd_inject(const InjectArgs& a, std::ostream& out) {
  const Network net = load_network(a.network);
  if (!(a.ber >= 0.0 && a.ber <= 1.0)) throw ConfigError("--ber outside [0, 1]");
  Rng data_rng(derive_seed(a.seed, TaskKind::kDataset));
  Rng seu(derive_seed(a.seed, TaskKind::kSeu, 0, double_bits(a.ber)));
  std::size_t in_size = 1;
  for (int d : net.input_dims) in_size *= static_cast<std::size_t>(d);
  for (int n = 0; n < a.count; ++n) {
    std::vector<std::int8_t> x(in_size);
    for (auto& v : x) v = static_cast<std::int8_t>(static_cast<int>(data_rng.below(256)) - 128);
    const FxpTensor input(net.input_dims, std::move(x), net.input_frac_bits);
    const auto golden = forward(net, input);
    auto corrupted = inject_seu(input, a.ber, seu);
    Network scratch = net;
    std::size_t flips = corrupted.flips.size();
    for (auto& w : scratch.weights) flips += inject_seu_inplace(w.data, a.ber, seu);
    const auto faulty = forward(scratch, corrupted.tensor, [&](std::size_t, FxpTensor& t) {
      flips += inject_seu_inplace(t.data, a.ber, seu);
    });
    std::size_t diff = 0;
    double abs_err = 0.0;
    for (std::size_t i = 0; i < golden.size(); ++i) {
      diff += golden.data[i] != faulty.data[i];
      abs_err += std::abs(golden.real(i) - faulty.real(i));
    }
    const nlohmann::json j = {{"inference", n},
                              {"flips", flips},
                              {"differing_outputs", diff},
                              {"mae", golden.size() ? abs_err / golden.size() : 0.0},
                              {"golden", to_json(golden)},
                              {"faulty", to_json(faulty)}};
    out << j.dump() << '\n';
  }
  return kExitOk;
}

struct ClassifierArgs {
  std::string rates = "0,0.005,0.01,0.02,0.04,0.06";
  int configs = 50;
  int samples = 200;
  std::uint64_t seed = 1;
  bool hca = false;
  int dppu = 16;
  int jobs = 1;
  std::string model = "random";
  std::string idx_images, idx_labels;
};

int cmd_classifier(const ClassifierArgs& a, std::ostream& out) {
  Dataset data = a.idx_images.empty()
                     ? generate_dataset(static_cast<std::size_t>(a.samples), a.seed)
                     : load_idx_dataset(a.idx_images, a.idx_labels, static_cast<std::size_t>(a.samples));
  ClassifierRunOptions o;
  o.model = fault_distribution_from_string(a.model);
  o.jobs = effective_jobs(a.jobs);
  if (a.hca) {
    HcaOptions h;
    h.config = HcaConfig::with_dppu(a.dppu);
    o.hca = h;
  }
  std::vector<ClassifierRow> rows;
  for (double r : parse_list(a.rates)) {
    const auto acc = accuracy_under_faults(r, a.configs, data, a.seed, o);
    for (int i = 0; i < a.configs; ++i) rows.push_back({r, i, acc[i]});
  }
  write_classifier_csv(out, rows);
  return kExitOk;
}

int cmd_export(const std::string& which, const std::string& path, std::ostream& out) {
  Network net;
  if (which == "controller") net = build_reference_controller();
  else if (which == "classifier") net = build_classifier();
  else throw ConfigError("unknown network '" + which + "' (controller | classifier)");
  if (path.empty() || path == "-") {
    out << to_json(net).dump(1) << '\n';
  } else {
    save_network(net, path);
  }
  return kExitOk;
}

int cmd_report(const std::string& dir, std::ostream& out) {
  std::ifstream in(std::filesystem::path(dir) / "summary.csv");
  if (!in) throw ConfigError("no summary.csv in '" + dir + "'");
  const auto rows = read_summary_csv(in);
  const auto agg = aggregate(rows);
  write_aggregate_csv(out, agg);
  std::vector<double> bers, maes;
  for (const auto& r : agg) {
    bers.push_back(r.ber);
    maes.push_back(r.mae.mean);
  }
  if (agg.size() >= 2) {
    out << fmt::format("# spearman(ber, mean mae) = {:.4f}\n", spearman(bers, maes));
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fault-injection and redundancy workbench for a simulated DLA"};
  app.name("fiadla");
  app.require_subcommand(1);

  CampaignArgs ca;
  auto* campaign = app.add_subcommand("campaign", "Run a BER-sweep driving campaign");
  campaign->add_option("--config", ca.config, "Campaign config (JSON)")->required();
  campaign->add_option("--jobs", ca.jobs, "Parallel workers (FIADLA_JOBS overrides)");
  campaign->add_option("--out", ca.out_dir, "Output directory (overrides config)");
  campaign->add_flag("--quiet", ca.quiet, "No progress output");

  DriveArgs da;
  auto* drive = app.add_subcommand("drive", "Run one mission and print its summary");
  drive->add_option("--mission", da.mission, "Mission id (path * 4 + weather)")->required();
  drive->add_option("--ber", da.ber, "Bit error rate");
  drive->add_option("--seed", da.seed, "Master seed");
  drive->add_flag("--array-sim", da.array_sim, "Run the controller on the array simulator");
  drive->add_option("--model", da.model, "PE fault distribution (random | clustered)");
  drive->add_flag("--hca", da.hca, "Enable HCA on the array-sim path");
  drive->add_option("--dppu", da.dppu, "DPPU size");
  drive->add_option("--log", da.log, "Write the per-step JSONL log here");
  drive->add_option("--network", da.network, "Controller network file");

  ReliabilityArgs ra;
  auto* rel = app.add_subcommand("reliability", "Monte-Carlo fully-functional probability sweep");
  rel->add_option("--scheme", ra.schemes, "Comma list of none, rr, cr, dr, hca");
  rel->add_option("--model", ra.model, "random | clustered");
  rel->add_option("--rates", ra.rates, "Comma list of PE error rates");
  rel->add_option("--trials", ra.trials, "Trials per rate");
  rel->add_option("--seed", ra.seed, "Master seed");
  rel->add_option("--rows", ra.rows, "Array rows");
  rel->add_option("--cols", ra.cols, "Array columns");
  rel->add_option("--dppu", ra.dppu, "DPPU size");
  rel->add_option("--spares-per-row", ra.spares_row, "RR spares per row");
  rel->add_option("--spares-per-column", ra.spares_col, "CR spares per column");
  rel->add_option("--diagonal-units", ra.diag, "DR units (0: min(rows, cols))");
  rel->add_option("--cluster-mean", ra.cluster_mean, "Mean cluster count (0: automatic)");
  rel->add_option("--cluster-radius", ra.cluster_radius, "Cluster spread radius");
  rel->add_flag("--no-dppu-faults", ra.no_dppu_faults, "Do not sample DPPU unit faults");
  rel->add_option("--jobs", ra.jobs, "Parallel workers");

  ArraySimArgs aa;
  auto* arr = app.add_subcommand("array-sim", "Simulate one conv layer on the array");
  arr->add_flag("--demo-layer", aa.demo, "Random conv layer with the sizes below");
  arr->add_option("--c", aa.c, "Input channels");
  arr->add_option("--k", aa.k, "Kernel size");
  arr->add_option("--o", aa.o, "Output channels");
  arr->add_option("--size", aa.size, "Input height and width");
  arr->add_option("--stride", aa.stride, "Stride");
  arr->add_option("--pad", aa.pad, "Padding");
  arr->add_option("--rows", aa.rows, "Array rows");
  arr->add_option("--cols", aa.cols, "Array columns");
  arr->add_option("--faults", aa.faults_file, "Fault set file (JSON)");
  arr->add_option("--pe-rate", aa.pe_rate, "Sample random PE faults at this rate");
  arr->add_option("--seed", aa.seed, "Seed for data and faults");
  arr->add_flag("--hca", aa.hca, "Enable HCA");
  arr->add_option("--dppu", aa.dppu, "DPPU size");
  arr->add_option("--policy", aa.policy, "auto | stall | discard");
  arr->add_option("--iterations", aa.iterations, "Iterations for the event schedule");
  arr->add_option("--trace", aa.trace, "Write the per-cycle schedule trace (CSV)");

  InjectArgs ia;
  auto* inj = app.add_subcommand("inject", "SEU injection on a saved network with random inputs");
  inj->add_option("--network", ia.network, "Network file")->required();
  inj->add_option("--ber", ia.ber, "Bit error rate")->required();
  inj->add_option("--seed", ia.seed, "Seed");
  inj->add_option("--count", ia.count, "Inferences");

  ClassifierArgs cla;
  auto* cls = app.add_subcommand("classifier", "Classifier accuracy over PE fault configurations");
  cls->add_option("--rates", cla.rates, "Comma list of PE error rates");
  cls->add_option("--configs", cla.configs, "Fault configurations per rate");
  cls->add_option("--samples", cla.samples, "Dataset size");
  cls->add_option("--seed", cla.seed, "Seed");
  cls->add_option("--model", cla.model, "random | clustered");
  cls->add_flag("--hca", cla.hca, "Enable HCA");
  cls->add_option("--dppu", cla.dppu, "DPPU size");
  cls->add_option("--jobs", cla.jobs, "Parallel workers");
  cls->add_option("--idx-images", cla.idx_images, "Optional IDX image file instead of glyphs");
  cls->add_option("--idx-labels", cla.idx_labels, "IDX label file");

  std::string export_which = "controller", export_path;
  auto* exp = app.add_subcommand("export-network", "Write a built-in network as JSON");
  exp->add_option("which", export_which, "controller | classifier");
  exp->add_option("--out", export_path, "Output file (default stdout)");

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "Recompute aggregates from a campaign directory");
  rep->add_option("--in", report_dir, "Campaign output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  try {
    if (campaign->parsed()) return cmd_campaign(ca, out, err);
    if (drive->parsed()) return cmd_drive(da, out);
    if (rel->parsed()) return cmd_reliability(ra, out);
    if (arr->parsed()) return cmd_array_sim(aa, out);
    if (inj->parsed()) return cmd_inject(ia, out);
    if (cls->parsed()) return cmd_classifier(cla, out);
    if (exp->parsed()) return cmd_export(export_which, export_path, out);
    if (rep->parsed()) return cmd_report(report_dir, out);
  } catch (const ConfigError& e) {
    err << "config error:\n";
    for (const auto& p : e.problems()) err << "  " << p << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitTaskFailure;
  }
  return kExitConfig;
}

}  // namespace fiadla
