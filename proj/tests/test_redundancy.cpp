#include <fmt/format.h>
#include <gtest/gtest.h>

#include <array>
#include <map>
#include <set>
#include <sstream>

#include "fiadla/redundancy.hpp"
#include "fiadla/schedule.hpp"
#include "oracles.hpp"

using namespace fiadla;

namespace {

FaultSet at(const std::vector<std::pair<int, int>>& pes) {
  FaultSet f;
  for (const auto& [r, c] : pes) f.add({r, c, Register::kAccumulator, 0, FaultKind::kStuckAt1, 0});
  return f;
}

SchemeConfig scheme(Scheme s) {
  SchemeConfig c;
  c.scheme = s;
  return c;
}

// Tries every assignment of faults to spare slots of their line.
bool brute_lines(const std::vector<std::pair<int, int>>& pes, std::size_t i, bool by_row,
                 int spares, std::set<std::pair<int, int>>& used) {
  if (i == pes.size()) return true;
  const int line = by_row ? pes[i].first : pes[i].second;
  for (int s = 0; s < spares; ++s) {
    if (!used.insert({line, s}).second) continue;
    if (brute_lines(pes, i + 1, by_row, spares, used)) return true;
    used.erase({line, s});
  }
  return false;
}

// Enumerates row/column unit choices for every fault.
bool brute_diagonal(const std::vector<std::pair<int, int>>& pes, int units) {
  const std::size_t n = pes.size();
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    std::set<int> taken;
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      const int u = (mask >> i) & 1 ? pes[i].second : pes[i].first;
      ok = u < units && taken.insert(u).second;
    }
    if (ok) return true;
  }
  return false;
}

int brute_prefix(const FaultSet& f, int capacity, int cols) {
  int best = 0;
  for (int p = 0; p <= cols; ++p) {
    int n = 0;
    for (const auto& pe : f.faulty_pes()) n += pe.second < p;
    if (n <= capacity) best = p;
  }
  return best;
}

FaultSet random_set(Rng& rng, const ArrayDims& d, int n) {
  FaultSet f;
  while (static_cast<int>(f.fault_pe_num()) < n) {
    const auto cell = static_cast<int>(rng.below(d.pes()));
    f.add({cell / d.cols, cell % d.cols, Register::kAccumulator, 0, FaultKind::kStuckAt1, 0});
  }
  return f;
}

}  // namespace

TEST(Repair, Examples) {
  const ArrayDims d{32, 16};
  EXPECT_FALSE(repair(scheme(Scheme::kRowRedundancy), at({{0, 3}, {0, 7}}), d).fully_functional);
  EXPECT_TRUE(repair(scheme(Scheme::kDiagonalRedundancy), at({{1, 2}, {2, 1}}), d).fully_functional);
  EXPECT_FALSE(repair(scheme(Scheme::kDiagonalRedundancy), at({{1, 3}, {1, 4}, {3, 1}, {4, 1}}), d)
                   .fully_functional);
  EXPECT_TRUE(repair(scheme(Scheme::kColumnRedundancy), at({{0, 3}, {0, 7}}), d).fully_functional);
  EXPECT_THROW(repair(scheme(Scheme::kHca), at({{32, 0}}), d), std::out_of_range);
}

TEST(Repair, FullyFunctionalInvariants) {
  Rng rng(1);
  const ArrayDims d{8, 6};
  for (int t = 0; t < 2000; ++t) {
    const auto f = random_set(rng, d, static_cast<int>(rng.below(12)));
    for (auto s : {Scheme::kRowRedundancy, Scheme::kColumnRedundancy,
                   Scheme::kDiagonalRedundancy, Scheme::kHca}) {
      auto sc = scheme(s);
      sc.hca = HcaConfig::with_dppu(4);
      const auto o = repair(sc, f, d);
      EXPECT_GE(o.remaining_cols, 0);
      EXPECT_LE(o.remaining_cols, d.cols);
      EXPECT_EQ(o.repaired_pes.size() + o.unrepaired_pes.size(), f.fault_pe_num());
      if (o.fully_functional) {
        EXPECT_TRUE(o.unrepaired_pes.empty());
        EXPECT_EQ(o.remaining_cols, d.cols);
        EXPECT_EQ(o.t_stall, 0);
      }
      if (s == Scheme::kHca && o.fully_functional) EXPECT_LE(f.fault_pe_num(), 4u);
    }
  }
}

TEST(Repair, LineRulesMatchBruteForce) {
  Rng rng(2);
  const ArrayDims d{5, 4};
  for (int t = 0; t < 3000; ++t) {
    const auto f = random_set(rng, d, static_cast<int>(rng.below(9)));
    for (int spares : {1, 2}) {
      for (bool by_row : {true, false}) {
        auto sc = scheme(by_row ? Scheme::kRowRedundancy : Scheme::kColumnRedundancy);
        sc.spares_per_row = sc.spares_per_column = spares;
        std::set<std::pair<int, int>> used;
        EXPECT_EQ(repair(sc, f, d).fully_functional,
                  brute_lines(f.faulty_pes(), 0, by_row, spares, used));
      }
    }
  }
}

TEST(Repair, DiagonalMatchesBruteForce) {
  Rng rng(3);
  const ArrayDims d{6, 5};
  for (int t = 0; t < 3000; ++t) {
    const auto f = random_set(rng, d, 1 + static_cast<int>(rng.below(7)));
    EXPECT_EQ(repair(scheme(Scheme::kDiagonalRedundancy), f, d).fully_functional,
              brute_diagonal(f.faulty_pes(), 5));
  }
}

TEST(Repair, Monotone) {
  Rng rng(4);
  const ArrayDims d{8, 8};
  for (int t = 0; t < 1500; ++t) {
    auto f = random_set(rng, d, static_cast<int>(rng.below(10)));
    for (auto s : {Scheme::kRowRedundancy, Scheme::kColumnRedundancy,
                   Scheme::kDiagonalRedundancy, Scheme::kHca}) {
      auto sc = scheme(s);
      sc.hca = HcaConfig::with_dppu(3);
      const bool before = repair(sc, f, d).fully_functional;
      auto g = f;
      const auto cell = static_cast<int>(rng.below(d.pes()));
      g.add({cell / d.cols, cell % d.cols, Register::kInputA, 1, FaultKind::kStuckAt0, 0});
      if (!before) {
        EXPECT_FALSE(repair(sc, g, d).fully_functional);
      }
    }
  }
}

TEST(Dppu, Functional) {
  const auto h = HcaConfig::with_dppu(16);
  EXPECT_TRUE(dppu_functional({}, h));
  EXPECT_TRUE(dppu_functional({{0, 5, 10, 15}, {}}, h));
  EXPECT_FALSE(dppu_functional({{0, 1}, {}}, h));
  EXPECT_FALSE(dppu_functional({{}, {0, 1}}, h));
  EXPECT_TRUE(dppu_functional({{}, {0, 4}}, h));
  EXPECT_EQ(h.weight_regfile_depth, 32);
  EXPECT_EQ(h.multiplier_units(), 20);
  EXPECT_ANY_THROW(dppu_functional({{99}, {}}, h));
}

TEST(StallPenalty, Examples) {
  EXPECT_EQ(stall_penalty(16, 16, 64, 3).t_stall, 0);
  EXPECT_EQ(stall_penalty(16, 16, 64, 3).t_penalty, 0.0);
  EXPECT_EQ(stall_penalty(18, 16, 64, 3).t_stall, 2);
  EXPECT_EQ(stall_penalty(18, 16, 64, 3).t_penalty, 72.0);
  EXPECT_EQ(stall_penalty(20, 16, 64, 3).t_stall, 4);
  EXPECT_EQ(stall_penalty(20, 16, 64, 3).t_penalty, 144.0);
  EXPECT_THROW(stall_penalty(1, 0, 4, 1), InfeasibleError);
}

TEST(StallPenalty, EqualsEventSimulationOnGrid) {
  for (int dppu : {4, 8, 16}) {
    for (int f = dppu + 1; f <= 3 * dppu; ++f) {
      for (int c : {8, 16, 64}) {
        for (int k : {1, 3}) {
          if (c * k * k < 16 + dppu) continue;
          const auto p = stall_penalty(f, dppu, c, k);
          const auto e = event_simulate_schedule(16, f, dppu, c, k, 8);
          EXPECT_EQ(e.overhead_per_iteration(), p.t_penalty)
              << "f=" << f << " dppu=" << dppu << " c=" << c << " k=" << k;
        }
      }
    }
  }
}

TEST(RemainingArray, Examples) {
  const ArrayDims d{32, 16};
  EXPECT_EQ(remaining_array({}, HcaConfig::with_dppu(16), d), 16);
  EXPECT_EQ(remaining_array(at({{0, 3}, {1, 3}, {2, 10}}), 2, d), 10);
  EXPECT_EQ(remaining_array(at({{0, 0}}), 0, d), 0);
}

TEST(RemainingArray, MatchesPrefixEnumeration) {
  Rng rng(5);
  const ArrayDims d{8, 10};
  for (int t = 0; t < 3000; ++t) {
    const auto f = random_set(rng, d, static_cast<int>(rng.below(20)));
    const int cap = static_cast<int>(rng.below(8));
    EXPECT_EQ(remaining_array(f, cap, d), brute_prefix(f, cap, d.cols));
  }
}

TEST(DegradeDecision, Examples) {
  const ArrayDims d{32, 16};
  const auto h = HcaConfig::with_dppu(16);
  FaultSet few = at({{0, 0}, {1, 5}});
  EXPECT_EQ(degrade_decision(few, h, d, 64, 3).mode, DegradeMode::kFull);
  FaultSet col15;
  for (int r = 0; r < 18; ++r) col15.add({r, 15, Register::kAccumulator, 0, FaultKind::kStuckAt1, 0});
  const auto o = degrade_decision(col15, h, d, 64, 3);
  EXPECT_EQ(o.mode, DegradeMode::kDiscard);
  EXPECT_EQ(o.remaining_cols, 15);
}

TEST(DegradeDecision, MatchesThroughputEnumeration) {
  const ArrayDims d{32, 16};
  const auto h = HcaConfig::with_dppu(16);
  Rng rng(6);
  auto check = [&](const FaultSet& f, int c, int k) {
    const double ckk = c * k * k;
    const int fpn = static_cast<int>(f.fault_pe_num());
    const auto o = degrade_decision(f, h, d, c, k);
    if (fpn <= 16) {
      EXPECT_EQ(o.mode, DegradeMode::kFull);
      return;
    }
    const double stall_tp = d.cols / (ckk + (fpn - 16) * ckk / 16);
    const double discard_tp = brute_prefix(f, 16, d.cols) / ckk;
    EXPECT_EQ(o.mode, stall_tp > discard_tp ? DegradeMode::kStall : DegradeMode::kDiscard);
  };
  FaultSet spread;
  for (int c = 0; c < 16; ++c) spread.add({c, c, Register::kAccumulator, 0, FaultKind::kStuckAt1, 0});
  spread.add({20, 15, Register::kAccumulator, 0, FaultKind::kStuckAt1, 0});
  check(spread, 64, 3);
  for (int t = 0; t < 2000; ++t) {
    check(random_set(rng, d, 10 + static_cast<int>(rng.below(20))), 1 + static_cast<int>(rng.below(64)),
          1 + 2 * static_cast<int>(rng.below(2)));
  }
}

TEST(RemainingPower, Examples) {
  const ArrayDims d{32, 16};
  EXPECT_EQ(remaining_power(scheme(Scheme::kRowRedundancy), {}, d), 1.0);
  auto h = scheme(Scheme::kHca);
  h.hca = HcaConfig::with_dppu(2);
  EXPECT_EQ(remaining_power(h, at({{0, 3}, {1, 3}, {2, 10}}), d), 0.625);
  auto bare = scheme(Scheme::kRowRedundancy);
  bare.spares_per_row = 0;
  EXPECT_EQ(remaining_power(bare, at({{4, 0}}), d), 0.0);
  // the row spare takes column 0, column 9 stays broken
  EXPECT_EQ(remaining_power(scheme(Scheme::kRowRedundancy), at({{4, 0}, {4, 9}, {4, 11}}), d), 0.5625);
}

TEST(RemainingPower, HcaDominatesOnRandomSuite) {
  const ArrayDims d{32, 16};
  const std::array<Scheme, 3> others{Scheme::kRowRedundancy, Scheme::kColumnRedundancy,
                                     Scheme::kDiagonalRedundancy};
  for (double rate : {0.01, 0.02, 0.03}) {
    Rng rng(derive_seed(9, TaskKind::kReliability, double_bits(rate)));
    double hca_sum = 0;
    std::array<double, 3> sums{};
    int exceptions = 0;
    for (int t = 0; t < 10000; ++t) {
      const auto f = sample_random_faults(d, rate, rng);
      const double hca = remaining_power(scheme(Scheme::kHca), f, d);
      hca_sum += hca;
      for (std::size_t i = 0; i < others.size(); ++i) {
        const double p = remaining_power(scheme(others[i]), f, d);
        sums[i] += p;
        if (hca < p) {
          ++exceptions;
          // only possible once HCA is past its repair budget
          EXPECT_GT(f.fault_pe_num(), 16) << to_string(others[i]) << " " << rate << " " << t;
        }
      }
    }
    for (std::size_t i = 0; i < others.size(); ++i) {
      EXPECT_GE(hca_sum, sums[i]) << to_string(others[i]) << " rate " << rate;
    }
    RecordProperty(fmt::format("per_set_exceptions_{}", rate), exceptions);
  }
}

TEST(RemainingPower, PerFaultSetDominanceHasCounterexamples) {
  // 17 faults in distinct rows: one row spare each repairs all of them,
  // HCA has to drop the column holding the last fault
  const ArrayDims d{32, 16};
  std::vector<std::pair<int, int>> cells;
  for (int r = 0; r < 17; ++r) cells.push_back({r, 15});
  const auto f = at(cells);
  EXPECT_EQ(remaining_power(scheme(Scheme::kRowRedundancy), f, d), 1.0);
  EXPECT_EQ(remaining_power(scheme(Scheme::kHca), f, d), 15.0 / 16.0);
}

TEST(LayerCycles, Examples) {
  LayerSpec l;
  l.kernel = 3;
  l.in_channels = 64;
  l.out_channels = 32;
  l.padding = 1;
  EXPECT_EQ(layer_cycles(l, {8, 8, 32}, 32, 16), 2304);
  EXPECT_GE(layer_cycles(l, {8, 8, 32}, 32, 8), 2304);
  LayerSpec one;
  one.kernel = 3;
  one.in_channels = 5;
  EXPECT_EQ(layer_cycles(one, {1, 1, 1}, 32, 16), 45);
  // spot check against the event schedule: 4 fault-free iterations
  EXPECT_EQ(event_simulate_schedule(16, 0, 16, 64, 3, 4).total_cycles, 2304u);
}

TEST(LayerCycles, MonotoneInActiveColumns) {
  LayerSpec l;
  l.kernel = 1;
  l.in_channels = 7;
  for (int o = 1; o <= 40; ++o) {
    l.out_channels = o;
    for (int cols = 2; cols <= 16; ++cols) {
      EXPECT_GE(layer_cycles(l, {5, 5, o}, 8, cols - 1), layer_cycles(l, {5, 5, o}, 8, cols));
    }
  }
}

TEST(Reliability, ZeroRateIsOne) {
  ReliabilityOptions o;
  o.trials = 500;
  for (auto s : {Scheme::kNone, Scheme::kRowRedundancy, Scheme::kColumnRedundancy,
                 Scheme::kDiagonalRedundancy, Scheme::kHca}) {
    EXPECT_EQ(fully_functional_probability(scheme(s), o, 0.0).ff_probability, 1.0);
  }
}

TEST(Reliability, HcaMatchesBinomialCdf) {
  ReliabilityOptions o;
  o.trials = 20000;
  o.sample_dppu_faults = false;
  o.seed = 77;
  const auto e = fully_functional_probability(scheme(Scheme::kHca), o, 0.03125);
  const double cdf = oracle::binomial_cdf(512, 0.03125, 16);
  EXPECT_NEAR(e.ff_probability, cdf, 3 * e.stderr_);
  EXPECT_GT(e.over_capacity_trials, 0);
  EXPECT_EQ(e.over_capacity_ff, 0);
}

TEST(Reliability, MonotoneInRateAndIndependentOfJobs) {
  ReliabilityOptions o;
  o.trials = 3000;
  o.seed = 5;
  std::vector<SchemeConfig> schemes;
  for (auto s : {Scheme::kRowRedundancy, Scheme::kColumnRedundancy, Scheme::kDiagonalRedundancy,
                 Scheme::kHca}) {
    schemes.push_back(scheme(s));
  }
  const std::vector<double> rates{0.0, 0.005, 0.01, 0.02, 0.03, 0.05};
  const auto a = reliability_sweep(schemes, o, rates);
  o.jobs = 3;
  const auto b = reliability_sweep(schemes, o, rates);
  std::ostringstream sa, sb;
  write_reliability_csv(sa, a);
  write_reliability_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  for (std::size_t s = 0; s < schemes.size(); ++s) {
    double prev = 2.0;
    for (const auto& e : a) {
      if (e.scheme != schemes[s].scheme) continue;
      EXPECT_LE(e.ff_probability, prev);
      prev = e.ff_probability;
    }
  }
  EXPECT_EQ(sa.str().substr(0, sa.str().find('\n')),
            "scheme,model,pe_rate,trials,ff_probability,stderr,mean_remaining_power");
}

TEST(Reliability, SchemeNames) {
  for (auto s : {Scheme::kNone, Scheme::kRowRedundancy, Scheme::kColumnRedundancy,
                 Scheme::kDiagonalRedundancy, Scheme::kHca}) {
    EXPECT_EQ(scheme_from_string(to_string(s)), s);
  }
  EXPECT_ANY_THROW(scheme_from_string("xr"));
}
