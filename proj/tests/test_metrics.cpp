#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fiadla/metrics.hpp"

using namespace fiadla;

namespace {

std::vector<ControlVector> random_controls(std::mt19937_64& g, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<ControlVector> v(n);
  for (auto& c : v) c = {u(g), u(g), u(g)};
  return v;
}

DrivingLog log_with(Termination t, double progress, double odo, double route = 500.0) {
  DrivingLog l;
  l.termination = t;
  l.progress_at_end = progress;
  l.distance_traveled = odo;
  l.route_length = route;
  return l;
}

}  // namespace

TEST(ErrorRate, Examples) {
  std::mt19937_64 g(1);
  const auto golden = random_controls(g, 4);
  EXPECT_EQ(error_rate(golden, golden), 0.0);
  auto near = golden;
  for (auto& c : near) for (auto& x : c) x += 0.005;
  EXPECT_EQ(error_rate(near, golden), 0.0);
  auto one = golden;
  one[2][1] += 0.02;
  EXPECT_EQ(error_rate(one, golden), 0.25);
  EXPECT_NEAR(error_rate(one, golden, kErThreshold, ErRule::kPerComponent), 1.0 / 12.0, 1e-15);
  EXPECT_EQ(error_rate(std::vector<ControlVector>{}, std::vector<ControlVector>{}), 0.0);
  EXPECT_THROW(error_rate(golden, random_controls(g, 3)), std::invalid_argument);
}

TEST(ErrorRate, InvariantUnderSharedSubThresholdNoise) {
  std::mt19937_64 g(2);
  std::uniform_real_distribution<double> small(-0.004, 0.004);
  for (int t = 0; t < 50; ++t) {
    const auto a = random_controls(g, 30);
    auto b = a;
    for (std::size_t i = 0; i < b.size(); i += 3) b[i][i % 3] += 0.3;
    auto a2 = a, b2 = b;
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (int k = 0; k < 3; ++k) {
        const double e = small(g);
        a2[i][k] += e;
        b2[i][k] += e;
      }
    }
    EXPECT_EQ(error_rate(a, b), error_rate(a2, b2));
  }
}

TEST(Mae, Examples) {
  std::mt19937_64 g(3);
  const auto golden = random_controls(g, 10);
  EXPECT_EQ(mae(golden, golden), 0.0);
  auto off = golden;
  for (auto& c : off) c[0] += 0.1;
  EXPECT_NEAR(mae(off, golden), 0.1 / 3.0, 1e-12);
}

TEST(Mae, MatchesTwoLoopOracleAndIsSymmetric) {
  std::mt19937_64 g(4);
  for (int t = 0; t < 100; ++t) {
    const auto a = random_controls(g, 1 + t);
    const auto b = random_controls(g, 1 + t);
    double sum = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t k = 0; k < 3; ++k) sum += std::abs(a[i][k] - b[i][k]);
    }
    EXPECT_NEAR(mae(a, b), sum / (3.0 * a.size()), 1e-12);
    EXPECT_EQ(mae(a, b), mae(b, a));
    EXPECT_GT(mae(a, b), 0.0);
  }
}

TEST(DrivingMetrics, Examples) {
  std::vector<DrivingLog> logs;
  for (int i = 0; i < 100; ++i) {
    logs.push_back(i < 87 ? log_with(Termination::kSuccess, 500.0, 501.0)
                          : log_with(Termination::kOffCorridor, 250.0, 260.0));
  }
  const auto m = driving_metrics(logs);
  EXPECT_NEAR(m.msr, 0.87, 1e-15);
  EXPECT_EQ(m.mc[0], 1.0);
  EXPECT_EQ(m.mc[99], 0.5);
  EXPECT_EQ(m.tdt[99], 260.0);
  EXPECT_NEAR(m.mc_stats.mean, (87 + 13 * 0.5) / 100.0, 1e-12);
}

TEST(DrivingMetrics, McUsesProgressNotOdometer) {
  const auto l = log_with(Termination::kTimeout, 100.0, 900.0);
  EXPECT_EQ(mission_completion(l), 0.2);
  EXPECT_LE(l.distance_traveled, kMaxSpeed * step_limit(500.0) * kStepSeconds);
}

TEST(Dispersion, PopulationStats) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto d = dispersion(v);
  EXPECT_DOUBLE_EQ(d.mean, 2.5);
  EXPECT_DOUBLE_EQ(d.std, std::sqrt(1.25));
  EXPECT_DOUBLE_EQ(d.cv, std::sqrt(1.25) / 2.5);
  const std::vector<double> z{0, 0};
  EXPECT_EQ(dispersion(z).cv, 0.0);
}

TEST(Spearman, Basics) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> y{2, 4, 8, 16, 32};
  const std::vector<double> r{5, 4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman(x, y), 1.0);
  EXPECT_DOUBLE_EQ(spearman(x, r), -1.0);
  const std::vector<double> ties{0, 0, 1, 2, 2};
  // Pearson correlation of average ranks (1.5, 1.5, 3, 4.5, 4.5) with 1..5.
  EXPECT_NEAR(spearman(x, ties), 0.9486832980505138, 1e-12);
  const std::vector<double> flat{1, 1, 1, 1, 1};
  EXPECT_TRUE(std::isnan(spearman(x, flat)));
}
