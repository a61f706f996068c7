#pragma once

// Network-level (ER, MAE) and driving-level (MSR, MC, TDT) reliability
// metrics, plus the small statistics helpers used by the acceptance checks.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "fiadla/drive.hpp"

namespace fiadla {

using ControlVector = std::array<double, 3>;

inline ControlVector as_vector(const Controls& c) { return {c.steer, c.throttle, c.brake}; }

enum class ErRule {
  kAnyComponent,  // a step counts once if any component differs
  kPerComponent,  // each differing component counts; denominator is 3 * steps
};

inline constexpr double kErThreshold = 0.01;

struct NetworkMetrics {
  double er = 0.0;
  double mae = 0.0;
  std::size_t n_inferences = 0;
};

// Throws std::invalid_argument on length mismatch. Empty input gives 0.
double error_rate(std::span<const ControlVector> faulty, std::span<const ControlVector> golden,
                  double threshold = kErThreshold, ErRule rule = ErRule::kAnyComponent);
double mae(std::span<const ControlVector> faulty, std::span<const ControlVector> golden);

NetworkMetrics network_metrics(const DrivingLog& log, double threshold = kErThreshold,
                               ErRule rule = ErRule::kAnyComponent);

struct Dispersion {
  double mean = 0.0;
  double std = 0.0;  // population
  double cv = 0.0;   // std / |mean|, 0 when mean is 0
};

Dispersion dispersion(std::span<const double> values);

struct DrivingMetrics {
  double msr = 0.0;
  std::vector<double> mc;
  std::vector<double> tdt;
  Dispersion mc_stats;
  Dispersion tdt_stats;
};

double mission_completion(const DrivingLog& log);
DrivingMetrics driving_metrics(std::span<const DrivingLog> logs);
// Same, from already-reduced per-mission values.
DrivingMetrics driving_metrics(std::span<const int> success, std::span<const double> mc,
                               std::span<const double> tdt);

// Spearman rank correlation with average ranks for ties. NaN when either
// side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace fiadla
