#include "fiadla/drive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>

#include "fiadla/error.hpp"

namespace fiadla {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  return a - kPi;
}

// Biases are 32-bit words; flip them byte-wise, least significant byte first.
std::size_t inject_seu_words(std::vector<std::int32_t>& words, double ber, Rng& rng) {
  if (words.empty()) return 0;
  std::vector<std::int8_t> bytes(words.size() * 4);
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto u = static_cast<std::uint32_t>(words[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<std::int8_t>((u >> (8 * b)) & 0xffu);
  }
  const std::size_t n = inject_seu_inplace(bytes, ber, rng);
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[i * 4 + b])) << (8 * b);
    words[i] = static_cast<std::int32_t>(u);
  }
  return n;
}

}  // namespace

Weather weather_params(int weather) {
  static constexpr Weather kTable[kWeatherCount] = {
      {0.0, 1.0}, {0.01, 0.95}, {0.02, 0.9}, {0.04, 0.8}};
  if (weather < 0 || weather >= kWeatherCount) {
    throw std::out_of_range(fmt::format("weather {} outside [0, {})", weather, kWeatherCount));
  }
  return kTable[weather];
}

double Mission::curvature_at(double arc) const {
  if (s.empty()) return 0.0;
  if (arc >= route_length) return curvature.back();
  if (arc <= 0) return curvature.front();
  const auto i = static_cast<std::size_t>(arc / kPathSpacing);
  return curvature[std::min(i, curvature.size() - 1)];
}

Mission generate_mission(int id, std::uint64_t seed, int n_weathers) {
  if (n_weathers < 1 || n_weathers > kWeatherCount) {
    throw std::out_of_range("n_weathers must be in [1, 4]");
  }
  Mission m;
  m.id = id;
  m.path_index = id / n_weathers;
  m.weather = id % n_weathers;
  m.seed = derive_seed(seed, TaskKind::kMissionGen, static_cast<std::uint64_t>(m.path_index));
  m.route_length = kRouteLength;

  // Arc segments: (end arc length, curvature).
  Rng rng(m.seed);
  std::vector<std::pair<double, double>> segments;
  double total = 0.0;
  while (total < kRouteLength) {
    const double kappa = (2.0 * rng.uniform() - 1.0) * kMaxCurvature;
    const double len = 25.0 + 35.0 * rng.uniform();
    total = std::min(kRouteLength, total + len);
    segments.emplace_back(total, kappa);
  }

  const auto n = static_cast<std::size_t>(std::llround(kRouteLength / kPathSpacing)) + 1;
  m.x.reserve(n);
  m.y.reserve(n);
  double x = 0.0, y = 0.0, th = 0.0, arc = 0.0;
  std::size_t seg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double target = std::min(kRouteLength, static_cast<double>(i) * kPathSpacing);
    // Integrate exactly across segment boundaries.
    while (arc < target) {
      while (seg + 1 < segments.size() && arc >= segments[seg].first) ++seg;
      const double kappa = segments[seg].second;
      const double step = std::min(target, segments[seg].first) - arc;
      const double step_eff = step > 0 ? step : target - arc;
      if (std::abs(kappa) < 1e-12) {
        x += step_eff * std::cos(th);
        y += step_eff * std::sin(th);
      } else {
        const double th1 = th + kappa * step_eff;
        x += (std::sin(th1) - std::sin(th)) / kappa;
        y -= (std::cos(th1) - std::cos(th)) / kappa;
        th = th1;
      }
      arc += step_eff;
    }
    while (seg + 1 < segments.size() && arc >= segments[seg].first) ++seg;
    m.x.push_back(x);
    m.y.push_back(y);
    m.s.push_back(target);
    m.heading.push_back(th);
    m.curvature.push_back(segments[seg].second);
  }
  return m;
}

std::vector<Mission> generate_missions(int n_paths, int n_weathers, std::uint64_t seed) {
  std::vector<Mission> out;
  if (n_paths <= 0) return out;
  out.reserve(static_cast<std::size_t>(n_paths) * n_weathers);
  for (int id = 0; id < n_paths * n_weathers; ++id) out.push_back(generate_mission(id, seed, n_weathers));
  return out;
}

nlohmann::json to_json(const Mission& m) {
  return {{"id", m.id},       {"path_index", m.path_index},    {"weather", m.weather},
          {"seed", m.seed},   {"route_length_m", m.route_length}, {"x", m.x},
          {"y", m.y},         {"s", m.s}};
}

PathFrame project(const Mission& m, double x, double y, double heading,
                  std::optional<std::size_t> hint) {
  const std::size_t segs = m.vertices() - 1;
  std::size_t lo = 0, hi = segs;
  if (hint) {
    lo = *hint > 20 ? *hint - 20 : 0;
    hi = std::min(segs, *hint + 60);
  }
  double best = std::numeric_limits<double>::infinity();
  PathFrame f;
  for (std::size_t i = lo; i < hi; ++i) {
    const double ax = m.x[i], ay = m.y[i];
    const double dx = m.x[i + 1] - ax, dy = m.y[i + 1] - ay;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((x - ax) * dx + (y - ay) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double px = ax + t * dx, py = ay + t * dy;
    const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
    if (d2 < best) {
      best = d2;
      const double len = std::sqrt(len2);
      f.segment = i;
      f.s = m.s[i] + t * (m.s[i + 1] - m.s[i]);
      f.lateral = len > 0 ? (dx * (y - ay) - dy * (x - ax)) / len : 0.0;
      f.heading_error = wrap_angle(heading - std::atan2(dy, dx));
    }
  }
  return f;
}

VehicleState start_state(const Mission& m) {
  VehicleState v;
  v.x = m.x.front();
  v.y = m.y.front();
  v.heading = m.heading.front();
  v.speed = kTargetSpeed;
  return v;
}

std::array<double, 4> observation_features(const VehicleState& state, const PathFrame& frame,
                                           const Mission& m) {
  return {frame.lateral / kCorridorHalfWidth, frame.heading_error / kPi,
          m.curvature_at(frame.s + kPreviewDistance) * kPreviewDistance,
          (kTargetSpeed - state.speed) / kMaxSpeed};
}

FxpTensor observe(const VehicleState& state, const PathFrame& frame, const Mission& m,
                  Rng* noise) {
  auto f = observation_features(state, frame, m);
  const double sigma = weather_params(m.weather).noise_sigma;
  if (noise) {
    // Draws are taken for every weather so streams stay aligned.
    for (auto& v : f) v += sigma * noise->normal();
  }
  return quantize(f, kObservationFracBits, {4});
}

FxpTensor observe(const VehicleState& state, const Mission& m, Rng* noise) {
  return observe(state, project(m, state.x, state.y, state.heading), m, noise);
}

VehicleState vehicle_step(const VehicleState& state, const Controls& c, double dt, int weather) {
  const double mu = weather_params(weather).friction;
  const double steer = std::clamp(c.steer, -1.0, 1.0);
  const double throttle = std::clamp(c.throttle, -1.0, 1.0);
  const double brake = std::clamp(c.brake, -1.0, 1.0);
  const double delta = steer * kMaxSteerAngle;
  const double a = mu * (throttle * kMaxAccel - brake * kMaxBrake);
  VehicleState n = state;
  const double v = state.speed;
  n.x += v * std::cos(state.heading) * dt;
  n.y += v * std::sin(state.heading) * dt;
  n.heading += v * std::tan(delta) / kWheelbase * dt;
  n.speed = std::max(0.0, v + a * dt);
  n.odometer += v * dt;
  return n;
}

Controls decode_controls(const FxpTensor& out) {
  if (out.size() != 3) throw ShapeError("controller output must have 3 values");
  return {std::clamp(out.real(0), -1.0, 1.0), std::clamp(out.real(1), -1.0, 1.0),
          std::clamp(out.real(2), -1.0, 1.0)};
}

Network build_reference_controller() {
  // Hidden units (ReLU): 0/1 and 4/5 are two identical steer pairs (left and
  // right half), 2/3 the speed-up/slow-down pair, 6/7 unused.
  // Inputs: e = lateral, h = heading, p = preview, v = speed error.
  constexpr int kIn = 4, kHidden = 8, kOut = 3;
  // clang-format off
  const std::int8_t w1[kIn][kHidden] = {
      // h0   h1   h2   h3   h4   h5  h6  h7
      { -16,  16,   0,   0, -16,  16,  0,  0},  // e
      {-110, 110,   0,   0,-110, 110,  0,  0},  // h
      {   6,  -6,   0,   0,   6,  -6,  0,  0},  // p
      {   0,   0, 127,-127,   0,   0,  0,  0},  // v
  };
  const std::int8_t w2[kHidden][kOut] = {
      // steer throttle brake
      {  32,   0,   0},
      { -32,   0,   0},
      {   0,  64,   0},
      {   0,   0,  32},
      {  32,   0,   0},
      { -32,   0,   0},
      {   0,   0,   0},
      {   0,   0,   0},
  };
  // clang-format on
  Network net;
  net.name = "reference-controller";
  net.input_dims = {4};
  net.input_frac_bits = kObservationFracBits;

  LayerSpec l1;
  l1.kind = LayerKind::kFullyConnected;
  l1.in_channels = kIn;
  l1.out_channels = kHidden;
  l1.activation = Activation::kRelu;
  l1.requant_shift = 5;
  LayerSpec l2 = l1;
  l2.in_channels = kHidden;
  l2.out_channels = kOut;
  l2.activation = Activation::kHardTanh;

  std::vector<std::int8_t> d1(&w1[0][0], &w1[0][0] + kIn * kHidden);
  std::vector<std::int8_t> d2(&w2[0][0], &w2[0][0] + kHidden * kOut);
  net.layers = {l1, l2};
  net.weights = {FxpTensor({kIn, kHidden}, std::move(d1), 5),
                 FxpTensor({kHidden, kOut}, std::move(d2), 5)};
  // Small cruise throttle (1/32 after requantization), in accumulator units.
  net.biases = {{}, {0, 32, 0}};
  net.validate();
  return net;
}

std::string to_string(ExecPath p) { return p == ExecPath::kFast ? "fast" : "array-sim"; }

ExecPath exec_path_from_string(const std::string& s) {
  if (s == "fast") return ExecPath::kFast;
  if (s == "array-sim" || s == "array_sim") return ExecPath::kArraySim;
  throw std::invalid_argument("unknown execution path '" + s + "'");
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::kSuccess: return "success";
    case Termination::kOffCorridor: return "off_corridor";
    case Termination::kTimeout: return "timeout";
  }
  return "timeout";
}

int step_limit(double route_length) {
  return static_cast<int>(std::floor(3.0 * route_length / (kTargetSpeed * kStepSeconds)));
}

DrivingLog run_mission(const Mission& mission, const Network& net, double ber, std::uint64_t seed,
                       const RunOptions& opts) {
  net.validate();
  {
    std::size_t in = 1;
    for (int d : net.input_dims) in *= static_cast<std::size_t>(d);
    std::size_t out = 1;
    for (int d : net.output_dims()) out *= static_cast<std::size_t>(d);
    if (in != 4 || out != 3) throw ShapeError("controller network must map 4 inputs to 3 outputs");
  }
  if (!(ber >= 0.0 && ber <= 1.0)) throw std::domain_error("ber outside [0, 1]");

  DrivingLog log;
  log.mission_id = mission.id;
  log.weather = mission.weather;
  log.ber = ber;
  log.seed = seed;
  log.route_length = mission.route_length;

  const auto id = static_cast<std::uint64_t>(mission.id);
  Rng noise(derive_seed(seed, TaskKind::kNoise, id));
  Rng seu(derive_seed(seed, TaskKind::kSeu, id, double_bits(ber)));

  FaultSet faults;
  std::optional<HcaOptions> hca = opts.hca;
  if (opts.path == ExecPath::kArraySim) {
    if (opts.faults) {
      faults = *opts.faults;
    } else if (ber > 0.0) {
      Rng pe_rng(derive_seed(seed, TaskKind::kPeFaults, id, double_bits(ber)));
      faults = sample_faults(FaultModel::from_ber(opts.model, ber), opts.array.dims, pe_rng);
      // DPPU units see the same per-PE rate
      if (hca) {
        Rng dppu_rng(derive_seed(seed, TaskKind::kPeFaults, id, double_bits(ber), 1));
        hca->dppu = sample_dppu_faults(hca->config, pe_error_rate(ber), dppu_rng);
      }
    }
    log.fault_pe_num = faults.fault_pe_num();
  }

  Network scratch = net;
  VehicleState state = start_state(mission);
  PathFrame frame = project(mission, state.x, state.y, state.heading);
  double progress = frame.s;
  const int limit = step_limit(mission.route_length);
  int steps = 0;

  for (;;) {
    const FxpTensor obs = observe(state, frame, mission, &noise);
    const FxpTensor golden = forward(net, obs);

    FxpTensor faulty;
    std::uint32_t flips = 0;
    if (opts.path == ExecPath::kFast) {
      if (ber > 0.0) {
        FxpTensor input = obs;
        flips += static_cast<std::uint32_t>(inject_seu_inplace(input.data, ber, seu));
        for (std::size_t i = 0; i < net.weights.size(); ++i) {
          scratch.weights[i].data = net.weights[i].data;
          flips += static_cast<std::uint32_t>(inject_seu_inplace(scratch.weights[i].data, ber, seu));
        }
        for (std::size_t i = 0; i < net.biases.size(); ++i) {
          scratch.biases[i] = net.biases[i];
          flips += static_cast<std::uint32_t>(inject_seu_words(scratch.biases[i], ber, seu));
        }
        faulty = forward(scratch, input, [&](std::size_t, FxpTensor& act) {
          flips += static_cast<std::uint32_t>(inject_seu_inplace(act.data, ber, seu));
        });
      } else {
        faulty = golden;
      }
    } else {
      faulty = forward_on_array(net, obs, opts.array, faults, hca).output;
    }

    StepRecord rec;
    rec.step = steps;
    rec.state = state;
    std::copy(obs.data.begin(), obs.data.end(), rec.observation.begin());
    rec.golden = decode_controls(golden);
    rec.faulty = decode_controls(faulty);
    rec.flips = flips;
    log.total_flips += flips;
    log.steps.push_back(rec);

    state = vehicle_step(state, rec.faulty, kStepSeconds, mission.weather);
    ++steps;
    frame = project(mission, state.x, state.y, state.heading, frame.segment);
    state.s = frame.s;
    progress = std::max(progress, frame.s);

    if (frame.s >= mission.route_length) {
      log.termination = Termination::kSuccess;
      progress = mission.route_length;
      break;
    }
    if (std::abs(frame.lateral) > kCorridorHalfWidth) {
      log.termination = Termination::kOffCorridor;
      break;
    }
    if (steps > limit) {
      log.termination = Termination::kTimeout;
      break;
    }
  }
  log.step_count = steps;
  log.distance_traveled = state.odometer;
  log.progress_at_end = progress;
  return log;
}

nlohmann::json summary_json(const DrivingLog& log) {
  return {{"type", "summary"},
          {"mission_id", log.mission_id},
          {"weather", log.weather},
          {"ber", log.ber},
          {"seed", log.seed},
          {"termination", to_string(log.termination)},
          {"steps", log.step_count},
          {"distance_traveled_m", log.distance_traveled},
          {"progress_m", log.progress_at_end},
          {"route_length_m", log.route_length},
          {"flips", log.total_flips},
          {"fault_pe_num", log.fault_pe_num}};
}

void write_log_jsonl(std::ostream& out, const DrivingLog& log) {
  for (const auto& r : log.steps) {
    const nlohmann::json j = {
        {"type", "step"},
        {"step", r.step},
        {"x", r.state.x},
        {"y", r.state.y},
        {"heading", r.state.heading},
        {"speed", r.state.speed},
        {"odometer", r.state.odometer},
        {"s", r.state.s},
        {"obs", r.observation},
        {"golden", {r.golden.steer, r.golden.throttle, r.golden.brake}},
        {"faulty", {r.faulty.steer, r.faulty.throttle, r.faulty.brake}},
        {"flips", r.flips}};
    out << j.dump() << '\n';
  }
  out << summary_json(log).dump() << '\n';
}

}  // namespace fiadla
