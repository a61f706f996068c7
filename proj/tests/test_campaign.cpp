#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "fiadla/campaign.hpp"
#include "fiadla/cli.hpp"

using namespace fiadla;

namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("fiadla_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CampaignConfig small_config() {
  CampaignConfig c;
  c.seed = 5;
  c.bers = {0.0, 1e-3};
  c.mission_ids = {0, 1, 6, 11};
  return c;
}

int cli(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr) {
  args.insert(args.begin(), "fiadla");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return rc;
}

std::string problems_text(const ConfigError& e) {
  std::string s;
  for (const auto& p : e.problems()) s += p + "\n";
  return s;
}

}  // namespace

TEST(Config, MinimalGetsDefaults) {
  const auto c = parse_config(R"({"seed": 9})");
  CampaignConfig d;
  d.seed = 9;
  EXPECT_EQ(c, d);
  EXPECT_EQ(c.bers, (std::vector<double>{0.0, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3}));
  EXPECT_EQ(c.missions().size(), 100u);
}

TEST(Config, ValidationNamesFields) {
  try {
    parse_config(R"({"bers": [0, 2.0], "jobs": 0})");
    FAIL();
  } catch (const ConfigError& e) {
    const auto s = problems_text(e);
    EXPECT_NE(s.find("bers"), std::string::npos) << s;
    EXPECT_NE(s.find("jobs"), std::string::npos) << s;
  }
}

TEST(Config, RejectsUnknownKeysAndTypes) {
  EXPECT_THROW(parse_config(R"({"seed": 1, "sed": 2})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"hca": {"size": 3}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"seed": "x"})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"path": "warp"})"), ConfigError);
}

TEST(Config, ParseErrorHasLineAndColumn) {
  try {
    parse_config("{\n  \"seed\": 1,\n  \"bers\": [0,,]\n}");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Config, SaveLoadRoundTrip) {
  const auto dir = scratch("cfg");
  auto c = small_config();
  c.hca.enabled = true;
  c.reliability.schemes = {"rr", "hca"};
  c.reliability.rates = {0.01};
  c.er_rule = ErRule::kPerComponent;
  save_config(c, dir / "c.json");
  const auto back = load_config(dir / "c.json");
  EXPECT_EQ(back, c);
  save_config(back, dir / "d.json");
  EXPECT_EQ(slurp(dir / "c.json"), slurp(dir / "d.json"));
  EXPECT_EQ(config_hash(back), config_hash(c));
  auto moved = c;
  moved.jobs = 7;
  moved.output_dir = "elsewhere";
  EXPECT_EQ(config_hash(moved), config_hash(c));
  moved.seed += 1;
  EXPECT_NE(config_hash(moved), config_hash(c));
}

TEST(Campaign, RowsAndDeterminismAcrossJobs) {
  auto c = small_config();
  c.jobs = 1;
  const auto a = run_campaign(c);
  c.jobs = 4;
  const auto b = run_campaign(c);
  ASSERT_EQ(a.rows.size(), 8u);
  EXPECT_EQ(a.rows, b.rows);
  std::ostringstream sa, sb;
  write_summary_csv(sa, a.rows);
  write_summary_csv(sb, b.rows);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(a.rows[0].ber, 0.0);
  EXPECT_EQ(a.rows[0].mission_id, 0);
  EXPECT_EQ(a.rows[4].ber, 1e-3);
}

TEST(Campaign, BerZeroIsGolden) {
  auto c = small_config();
  c.bers = {0.0};
  const auto r = run_campaign(c);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.er, 0.0);
    EXPECT_EQ(row.mae, 0.0);
    EXPECT_TRUE(row.success);
    EXPECT_EQ(row.mc, 1.0);
  }
  EXPECT_EQ(aggregate(r.rows).at(0).msr, 1.0);
}

TEST(Campaign, EmptyMissionList) {
  auto c = small_config();
  c.paths = 0;
  c.mission_ids.clear();
  const auto r = run_campaign(c);
  EXPECT_TRUE(r.rows.empty());
  EXPECT_EQ(r.failures(), 0u);
}

TEST(Campaign, MonitorIsObserverOnly) {
  auto c = small_config();
  c.jobs = 2;
  std::map<std::string, int> seen;
  std::size_t last_done = 0;
  bool monotone = true;
  const auto with = run_campaign(c, [&](const ProgressUpdate& u) {
    ++seen[to_string(u.status)];
    monotone &= u.completed >= last_done;
    last_done = u.completed;
    EXPECT_EQ(u.total, 8u);
  });
  const auto without = run_campaign(c);
  EXPECT_EQ(with.rows, without.rows);
  EXPECT_EQ(seen["done"], 8);
  EXPECT_EQ(seen["running"], 8);
  EXPECT_TRUE(monotone);
}

TEST(Campaign, FailedTasksAreRecordedAndOthersFinish) {
  auto c = small_config();
  c.path = ExecPath::kArraySim;
  c.bers = {0.0, 0.05};
  c.mission_ids = {0, 1};
  c.hca.enabled = true;
  c.hca.dppu_size = 1;
  c.hca.policy = DegradePolicy::kDiscard;
  const auto r = run_campaign(c);
  EXPECT_EQ(r.failures(), 2u);
  EXPECT_EQ(r.rows.size(), 2u);
  for (const auto& t : r.tasks) {
    if (t.ber == 0.05) {
      EXPECT_EQ(t.status, TaskStatus::kFailed);
      EXPECT_FALSE(t.error.empty());
    } else {
      EXPECT_EQ(t.status, TaskStatus::kDone);
    }
  }
}

TEST(Report, FilesAndByteIdenticalRewrite) {
  const auto dir = scratch("report");
  auto c = small_config();
  c.output_dir = (dir / "out").string();
  c.write_logs = true;
  const auto r = run_campaign(c);
  write_report(r, dir / "a");
  write_report(r, dir / "b");
  for (const char* f : {"summary.csv", "aggregate.csv", "manifest.json", "config.json"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
  const auto summary = slurp(dir / "a" / "summary.csv");
  EXPECT_EQ(summary.substr(0, summary.find('\n')),
            "ber,mission_id,weather,er,mae,success,mc,tdt_m,steps,seed");
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  EXPECT_EQ(manifest["tasks"].size(), 8u);
  EXPECT_EQ(manifest["failed"], 0);
  for (const auto& t : manifest["tasks"]) {
    EXPECT_EQ(t["status"], "done");
    EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / t["log"].get<std::string>()));
  }
}

TEST(Report, SummaryRoundTripsAndAggregateMatchesOracle) {
  const auto r = run_campaign(small_config());
  std::ostringstream os;
  write_summary_csv(os, r.rows);
  std::istringstream is(os.str());
  const auto back = read_summary_csv(is);
  ASSERT_EQ(back.size(), r.rows.size());
  std::map<double, std::pair<int, int>> by_ber;
  for (const auto& row : back) {
    auto& [n, ok] = by_ber[row.ber];
    ++n;
    ok += row.success;
  }
  const auto agg = aggregate(back);
  ASSERT_EQ(agg.size(), by_ber.size());
  for (const auto& a : agg) {
    EXPECT_EQ(a.missions, by_ber[a.ber].first);
    EXPECT_DOUBLE_EQ(a.msr, static_cast<double>(by_ber[a.ber].second) / by_ber[a.ber].first);
  }
}

TEST(Report, ConfigSnapshotIsVerbatim) {
  const auto dir = scratch("snap");
  const std::string text = "{ \"seed\": 5,\n  \"bers\": [0],   \"missions\": {\"ids\": [3]},\n"
                           "  \"output_dir\": \"" + (dir / "out").string() + "\" }\n";
  std::ofstream(dir / "c.json") << text;
  std::string out, err;
  EXPECT_EQ(cli({"campaign", "--config", (dir / "c.json").string(), "--quiet"}, &out, &err), 0) << err;
  EXPECT_EQ(slurp(dir / "out" / "config.json"), text);
}

TEST(Replay, DriveReproducesSummaryRow) {
  auto c = small_config();
  c.mission_ids = {6};
  const auto r = run_campaign(c);
  for (const auto& row : r.rows) {
    std::string out;
    ASSERT_EQ(cli({"drive", "--mission", std::to_string(row.mission_id), "--ber",
                   fmt::format("{:.17g}", row.ber), "--seed", std::to_string(row.seed)},
                  &out),
              0);
    const auto j = nlohmann::json::parse(out);
    EXPECT_EQ(j["steps"].get<int>(), row.steps);
    EXPECT_EQ(j["er"].get<double>(), row.er);
    EXPECT_EQ(j["mae"].get<double>(), row.mae);
    EXPECT_EQ(j["mc"].get<double>(), row.mc);
  }
}

TEST(Jobs, EnvironmentOverride) {
  ::setenv("FIADLA_JOBS", "3", 1);
  EXPECT_EQ(effective_jobs(8), 3);
  ::unsetenv("FIADLA_JOBS");
  EXPECT_EQ(effective_jobs(8), 8);
}

TEST(Cli, ReliabilityOneRow) {
  std::string out;
  EXPECT_EQ(cli({"reliability", "--scheme", "hca", "--model", "random", "--rates", "0.01",
                 "--trials", "1000", "--seed", "1"},
                &out),
            0);
  std::istringstream is(out);
  std::string header, row, extra;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "scheme,model,pe_rate,trials,ff_probability,stderr,mean_remaining_power");
  EXPECT_EQ(row.substr(0, 21), "hca,random,0.01,1000,");
  EXPECT_FALSE(std::getline(is, extra));
}

TEST(Cli, UnknownFlagIsUsageError) {
  std::string out, err;
  EXPECT_EQ(cli({"drive", "--mission", "0", "--bogus"}, &out, &err), kExitConfig);
  EXPECT_NE(err.find("Usage"), std::string::npos);
  EXPECT_EQ(cli({"--help"}, &out), 0);
  EXPECT_NE(out.find("campaign"), std::string::npos);
}

TEST(Cli, DriveIsDeterministic) {
  std::string a, b;
  EXPECT_EQ(cli({"drive", "--mission", "0", "--ber", "0", "--seed", "7"}, &a), 0);
  EXPECT_EQ(cli({"drive", "--mission", "0", "--ber", "0", "--seed", "7"}, &b), 0);
  EXPECT_EQ(a, b);
  EXPECT_EQ(nlohmann::json::parse(a)["termination"], "success");
}

TEST(Cli, CampaignExitCodes) {
  const auto dir = scratch("exit");
  std::ofstream(dir / "bad.json") << R"({"bers": [3]})";
  EXPECT_EQ(cli({"campaign", "--config", (dir / "bad.json").string()}), kExitConfig);
  EXPECT_EQ(cli({"campaign", "--config", (dir / "missing.json").string()}), kExitConfig);
  std::ofstream(dir / "fail.json") << R"({"bers": [0.05], "missions": {"ids": [0]},
    "path": "array-sim", "hca": {"enabled": true, "dppu_size": 1, "policy": "discard"},
    "output_dir": ")" + (dir / "out").string() + "\"}";
  EXPECT_EQ(cli({"campaign", "--config", (dir / "fail.json").string(), "--quiet"}), kExitTaskFailure);
  EXPECT_TRUE(fs::exists(dir / "out" / "manifest.json"));
}

TEST(Cli, ReportRecomputesAggregate) {
  const auto dir = scratch("cli_report");
  auto c = small_config();
  const auto r = run_campaign(c);
  write_report(r, dir);
  std::string out;
  EXPECT_EQ(cli({"report", "--in", dir.string()}, &out), 0);
  std::ostringstream agg;
  write_aggregate_csv(agg, aggregate(r.rows));
  EXPECT_EQ(out.substr(0, out.find("\n") + 1), agg.str().substr(0, agg.str().find('\n') + 1));
  EXPECT_NE(out.find("spearman"), std::string::npos);
}

TEST(Cli, ArraySimAndInject) {
  const auto dir = scratch("cli_misc");
  std::string out;
  EXPECT_EQ(cli({"array-sim", "--demo-layer", "--c", "16", "--k", "3", "--o", "16", "--size", "4",
                 "--pe-rate", "0.02", "--hca", "--trace", (dir / "t.csv").string()},
                &out),
            0);
  const auto j = nlohmann::json::parse(out);
  EXPECT_EQ(j["mismatched_outputs"], 0);
  EXPECT_TRUE(fs::exists(dir / "t.csv"));
  EXPECT_EQ(cli({"export-network", "controller", "--out", (dir / "n.json").string()}), 0);
  EXPECT_EQ(cli({"inject", "--network", (dir / "n.json").string(), "--ber", "0", "--count", "3"},
                &out),
            0);
  std::istringstream is(out);
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    EXPECT_EQ(nlohmann::json::parse(line)["differing_outputs"], 0);
    ++lines;
  }
  EXPECT_EQ(lines, 3);
}
