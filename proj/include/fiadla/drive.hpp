#pragma once

// Desk-scale closed-loop driving: seeded missions (paths of constant-curvature
// arcs under four weathers), a kinematic bicycle vehicle, and a small
// quantized controller run through either the SEU fast path or the array
// simulator.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fiadla/array_sim.hpp"
#include "fiadla/faults.hpp"
#include "fiadla/fxp.hpp"
#include "fiadla/hardware.hpp"
#include "fiadla/rng.hpp"
#include "json.hpp"

namespace fiadla {

inline constexpr double kTargetSpeed = 8.0;  // m/s
inline constexpr double kMaxSpeed = 12.0;
inline constexpr double kStepSeconds = 0.05;
inline constexpr double kWheelbase = 2.5;
inline constexpr double kMaxSteerAngle = 0.5;  // rad
inline constexpr double kMaxAccel = 3.0;       // m/s^2
inline constexpr double kMaxBrake = 6.0;
inline constexpr double kCorridorHalfWidth = 2.0;
inline constexpr double kPreviewDistance = 10.0;
inline constexpr double kRouteLength = 500.0;
inline constexpr double kMaxCurvature = 0.05;  // 1/m
inline constexpr double kPathSpacing = 0.5;
inline constexpr int kObservationFracBits = 5;
inline constexpr int kWeatherCount = 4;

struct Weather {
  double noise_sigma = 0.0;
  double friction = 1.0;
};

// Throws std::out_of_range for weather outside [0, 4).
Weather weather_params(int weather);

struct Mission {
  int id = 0;
  int path_index = 0;
  int weather = 0;
  std::uint64_t seed = 0;  // path generator seed
  double route_length = 0.0;
  // Polyline sampled every kPathSpacing metres.
  std::vector<double> x, y, s, heading, curvature;

  std::size_t vertices() const { return s.size(); }
  double curvature_at(double arc) const;
};

// n_paths * n_weathers missions; mission id = path * n_weathers + weather.
std::vector<Mission> generate_missions(int n_paths = 25, int n_weathers = kWeatherCount,
                                       std::uint64_t seed = 1);
Mission generate_mission(int id, std::uint64_t seed, int n_weathers = kWeatherCount);

nlohmann::json to_json(const Mission& m);

struct VehicleState {
  double x = 0.0, y = 0.0, heading = 0.0, speed = 0.0;
  double odometer = 0.0;
  double s = 0.0;  // route progress of the current projection
};

struct Controls {
  double steer = 0.0, throttle = 0.0, brake = 0.0;
};

// Projection of a position onto a mission path.
struct PathFrame {
  double s = 0.0;
  double lateral = 0.0;  // positive left of the path
  double heading_error = 0.0;
  std::size_t segment = 0;
};

// Searches segments near `hint` (all segments when hint is absent).
PathFrame project(const Mission& m, double x, double y, double heading,
                  std::optional<std::size_t> hint = std::nullopt);

VehicleState start_state(const Mission& m);

// Normalized observation before noise: lateral / half-width, heading error /
// pi, preview curvature * preview distance, speed error / v_max.
std::array<double, 4> observation_features(const VehicleState& state, const PathFrame& frame,
                                           const Mission& m);

// Adds weather noise (when `noise` is set) and quantizes at frac 5.
FxpTensor observe(const VehicleState& state, const Mission& m, Rng* noise = nullptr);
FxpTensor observe(const VehicleState& state, const PathFrame& frame, const Mission& m,
                  Rng* noise);

VehicleState vehicle_step(const VehicleState& state, const Controls& controls,
                          double dt = kStepSeconds, int weather = 0);

// Network output (3 values) to clamped controls.
Controls decode_controls(const FxpTensor& out);

Network build_reference_controller();

enum class ExecPath { kFast, kArraySim };
std::string to_string(ExecPath p);
ExecPath exec_path_from_string(const std::string& s);

enum class Termination { kSuccess, kOffCorridor, kTimeout };
std::string to_string(Termination t);

struct StepRecord {
  int step = 0;
  VehicleState state;
  std::array<std::int8_t, 4> observation{};
  Controls golden;
  Controls faulty;
  std::uint32_t flips = 0;
};

struct DrivingLog {
  int mission_id = 0;
  int weather = 0;
  double ber = 0.0;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  Termination termination = Termination::kTimeout;
  double distance_traveled = 0.0;
  double progress_at_end = 0.0;
  double route_length = 0.0;
  int step_count = 0;
  std::uint64_t total_flips = 0;
  std::size_t fault_pe_num = 0;  // array-sim path only

  bool success() const { return termination == Termination::kSuccess; }
};

struct RunOptions {
  ExecPath path = ExecPath::kFast;
  ArrayConfig array;
  FaultDistribution model = FaultDistribution::kRandom;
  // Array-sim path: use these faults instead of sampling from the BER.
  std::optional<FaultSet> faults;
  std::optional<HcaOptions> hca;
};

// Steps allowed before a timeout: 3 * route_length / (v_target * dt).
int step_limit(double route_length);

// Streams: observation noise from (seed, mission); SEU and PE faults from
// (seed, mission, ber). Throws ShapeError unless the network maps 4 -> 3.
DrivingLog run_mission(const Mission& mission, const Network& net, double ber,
                       std::uint64_t seed, const RunOptions& opts = {});

// One JSON object per step, then a summary object.
void write_log_jsonl(std::ostream& out, const DrivingLog& log);
nlohmann::json summary_json(const DrivingLog& log);

}  // namespace fiadla
