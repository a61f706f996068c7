#include "fiadla/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace fiadla {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw std::invalid_argument("control sequences differ in length");
}

}  // namespace

double error_rate(std::span<const ControlVector> faulty, std::span<const ControlVector> golden,
                  double threshold, ErRule rule) {
  check_lengths(faulty.size(), golden.size());
  if (faulty.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < faulty.size(); ++i) {
    std::size_t diff = 0;
    for (int c = 0; c < 3; ++c) {
      if (std::abs(faulty[i][c] - golden[i][c]) > threshold) ++diff;
    }
    hits += rule == ErRule::kAnyComponent ? (diff > 0 ? 1 : 0) : diff;
  }
  const double denom = static_cast<double>(faulty.size()) * (rule == ErRule::kAnyComponent ? 1 : 3);
  return static_cast<double>(hits) / denom;
}

double mae(std::span<const ControlVector> faulty, std::span<const ControlVector> golden) {
  check_lengths(faulty.size(), golden.size());
  if (faulty.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < faulty.size(); ++i) {
    for (int c = 0; c < 3; ++c) sum += std::abs(faulty[i][c] - golden[i][c]);
  }
  return sum / (3.0 * static_cast<double>(faulty.size()));
}

NetworkMetrics network_metrics(const DrivingLog& log, double threshold, ErRule rule) {
  std::vector<ControlVector> f, g;
  f.reserve(log.steps.size());
  g.reserve(log.steps.size());
  for (const auto& s : log.steps) {
    f.push_back(as_vector(s.faulty));
    g.push_back(as_vector(s.golden));
  }
  return {error_rate(f, g, threshold, rule), mae(f, g), f.size()};
}

Dispersion dispersion(std::span<const double> values) {
  Dispersion d;
  if (values.empty()) return d;
  const double n = static_cast<double>(values.size());
  d.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - d.mean) * (v - d.mean);
  d.std = std::sqrt(ss / n);
  d.cv = d.mean != 0.0 ? d.std / std::abs(d.mean) : 0.0;
  return d;
}

double mission_completion(const DrivingLog& log) {
  if (log.success()) return 1.0;
  if (log.route_length <= 0) return 0.0;
  return std::clamp(log.progress_at_end / log.route_length, 0.0, 1.0);
}

DrivingMetrics driving_metrics(std::span<const int> success, std::span<const double> mc,
                               std::span<const double> tdt) {
  if (success.size() != mc.size() || mc.size() != tdt.size()) {
    throw std::invalid_argument("per-mission vectors differ in length");
  }
  DrivingMetrics m;
  m.mc.assign(mc.begin(), mc.end());
  m.tdt.assign(tdt.begin(), tdt.end());
  if (!success.empty()) {
    const auto ok = std::count_if(success.begin(), success.end(), [](int s) { return s != 0; });
    m.msr = static_cast<double>(ok) / static_cast<double>(success.size());
  }
  m.mc_stats = dispersion(m.mc);
  m.tdt_stats = dispersion(m.tdt);
  return m;
}

DrivingMetrics driving_metrics(std::span<const DrivingLog> logs) {
  std::vector<int> ok;
  std::vector<double> mc, tdt;
  for (const auto& l : logs) {
    ok.push_back(l.success() ? 1 : 0);
    mc.push_back(mission_completion(l));
    tdt.push_back(l.distance_traveled);
  }
  return driving_metrics(ok, mc, tdt);
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  check_lengths(x.size(), y.size());
  const auto rx = ranks(x), ry = ranks(y);
  const auto dx = dispersion(rx), dy = dispersion(ry);
  if (dx.std == 0.0 || dy.std == 0.0) return std::numeric_limits<double>::quiet_NaN();
  double cov = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) cov += (rx[i] - dx.mean) * (ry[i] - dy.mean);
  cov /= static_cast<double>(rx.size());
  return cov / (dx.std * dy.std);
}

}  // namespace fiadla
