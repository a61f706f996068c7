#include "fiadla/faults.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <stdexcept>

namespace fiadla {

using nlohmann::json;

int register_width(Register reg) {
  switch (reg) {
    case Register::kInputA:
    case Register::kInputB: return 8;
    case Register::kProduct: return 16;
    case Register::kAccumulator: return 32;
  }
  return 0;
}

std::string to_string(Register reg) {
  switch (reg) {
    case Register::kInputA: return "input_a";
    case Register::kInputB: return "input_b";
    case Register::kProduct: return "product";
    case Register::kAccumulator: return "accumulator";
  }
  return "?";
}

Register register_from_string(const std::string& s) {
  if (s == "input_a") return Register::kInputA;
  if (s == "input_b") return Register::kInputB;
  if (s == "product") return Register::kProduct;
  if (s == "accumulator") return Register::kAccumulator;
  throw std::invalid_argument("unknown register '" + s + "'");
}

std::string to_string(FaultKind kind) {
  switch (kind) {
    case FaultKind::kStuckAt0: return "stuck_at_0";
    case FaultKind::kStuckAt1: return "stuck_at_1";
    case FaultKind::kTransient: return "transient";
  }
  return "?";
}

FaultKind fault_kind_from_string(const std::string& s) {
  if (s == "stuck_at_0") return FaultKind::kStuckAt0;
  if (s == "stuck_at_1") return FaultKind::kStuckAt1;
  if (s == "transient") return FaultKind::kTransient;
  throw std::invalid_argument("unknown fault kind '" + s + "'");
}

std::pair<Register, int> register_bit(int global_bit) {
  if (global_bit < 8) return {Register::kInputA, global_bit};
  if (global_bit < 16) return {Register::kInputB, global_bit - 8};
  if (global_bit < 32) return {Register::kProduct, global_bit - 16};
  return {Register::kAccumulator, global_bit - 32};
}

FaultSet::FaultSet(std::vector<PeFault> faults) : faults_(std::move(faults)) { rebuild(); }

void FaultSet::add(const PeFault& fault) {
  faults_.push_back(fault);
  rebuild();
}

void FaultSet::rebuild() {
  std::sort(faults_.begin(), faults_.end());
  faults_.erase(std::unique(faults_.begin(), faults_.end()), faults_.end());
  pes_.clear();
  for (const auto& f : faults_) {
    if (pes_.empty() || pes_.back() != std::pair{f.row, f.col}) pes_.emplace_back(f.row, f.col);
  }
}

void FaultSet::validate(const ArrayDims& dims) const {
  for (const auto& f : faults_) {
    if (f.row < 0 || f.row >= dims.rows || f.col < 0 || f.col >= dims.cols) {
      throw std::out_of_range(fmt::format("fault at PE({}, {}) outside {}x{} array", f.row, f.col,
                                          dims.rows, dims.cols));
    }
    if (f.bit < 0 || f.bit >= register_width(f.reg)) {
      throw std::out_of_range(fmt::format("bit {} outside {}-bit {} register", f.bit,
                                          register_width(f.reg), to_string(f.reg)));
    }
  }
}

json to_json(const FaultSet& set, const ArrayDims& dims) {
  json faults = json::array();
  for (const auto& f : set.faults()) {
    json e{{"row", f.row}, {"col", f.col}, {"register", to_string(f.reg)}, {"bit", f.bit},
           {"kind", to_string(f.kind)}};
    if (f.kind == FaultKind::kTransient) e["cycle"] = f.cycle;
    faults.push_back(std::move(e));
  }
  return json{{"format", "fiadla-faultset/1"},
              {"rows", dims.rows},
              {"cols", dims.cols},
              {"faults", std::move(faults)}};
}

FaultSet fault_set_from_json(const json& j, ArrayDims* dims) {
  ArrayDims d{j.at("rows").get<int>(), j.at("cols").get<int>()};
  std::vector<PeFault> faults;
  for (const auto& e : j.at("faults")) {
    PeFault f;
    f.row = e.at("row").get<int>();
    f.col = e.at("col").get<int>();
    f.reg = register_from_string(e.at("register").get<std::string>());
    f.bit = e.at("bit").get<int>();
    f.kind = fault_kind_from_string(e.at("kind").get<std::string>());
    f.cycle = e.value("cycle", std::uint64_t{0});
    faults.push_back(f);
  }
  FaultSet set(std::move(faults));
  set.validate(d);
  if (dims) *dims = d;
  return set;
}

std::string to_string(FaultDistribution d) {
  return d == FaultDistribution::kRandom ? "random" : "clustered";
}

FaultDistribution fault_distribution_from_string(const std::string& s) {
  if (s == "random") return FaultDistribution::kRandom;
  if (s == "clustered") return FaultDistribution::kClustered;
  throw std::invalid_argument("unknown fault model '" + s + "'");
}

double pe_error_rate(double ber, int reg_bit_num) {
  if (!(ber >= 0.0 && ber <= 1.0)) {
    throw std::domain_error(fmt::format("bit error rate {} outside [0, 1]", ber));
  }
  if (reg_bit_num < 1) throw std::domain_error("reg_bit_num must be >= 1");
  if (ber == 1.0) return 1.0;
  // 1 - (1 - ber)^n without cancellation at small ber.
  return -std::expm1(reg_bit_num * std::log1p(-ber));
}

FaultModel FaultModel::from_ber(FaultDistribution kind, double ber, int reg_bit_num) {
  FaultModel m;
  m.kind = kind;
  m.bit_error_rate = ber;
  m.reg_bit_num = reg_bit_num;
  m.pe_error_rate = fiadla::pe_error_rate(ber, reg_bit_num);
  return m;
}

void FaultModel::validate() const {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!in_unit(bit_error_rate) || !in_unit(pe_error_rate)) {
    throw std::domain_error("fault model rates must lie in [0, 1]");
  }
  if (bit_error_rate > 0.0 && pe_error_rate > 0.0 &&
      std::abs(pe_error_rate - fiadla::pe_error_rate(bit_error_rate, reg_bit_num)) > 1e-12) {
    throw std::domain_error("pe_error_rate inconsistent with bit_error_rate");
  }
  if (kind == FaultDistribution::kClustered && cluster.radius < 1.0) {
    throw std::domain_error("cluster radius must be >= 1");
  }
}

namespace {

PeFault stuck_fault(int row, int col, std::uint64_t draw) {
  const auto [reg, bit] = register_bit(static_cast<int>((draw >> 1) % kRegBitNum));
  return PeFault{row, col, reg, bit, (draw & 1) ? FaultKind::kStuckAt1 : FaultKind::kStuckAt0, 0};
}

}  // namespace

FaultSet sample_random_faults(const ArrayDims& dims, double pe_rate, Rng& rng) {
  std::vector<PeFault> faults;
  for (int r = 0; r < dims.rows; ++r) {
    for (int c = 0; c < dims.cols; ++c) {
      const double u = rng.uniform();
      const std::uint64_t draw = rng.next();
      if (u < pe_rate) faults.push_back(stuck_fault(r, c, draw));
    }
  }
  return FaultSet(std::move(faults));
}

FaultSet sample_clustered_faults(const ArrayDims& dims, double pe_rate, const ClusterParams& params,
                                 Rng& rng) {
  if (params.radius < 1.0) throw std::invalid_argument("cluster radius must be >= 1");
  const auto n = static_cast<std::uint64_t>(dims.pes());
  const std::uint64_t target = rng.binomial(n, pe_rate);
  if (target == 0) return {};

  const double mean = params.count_mean > 0.0
                          ? params.count_mean
                          : std::max(1.0, std::round(pe_rate * static_cast<double>(n) / 4.0));
  const std::uint64_t clusters = std::max<std::uint64_t>(1, rng.poisson(mean));
  std::vector<std::pair<int, int>> centers;
  auto add_center = [&] {
    const auto cell = static_cast<int>(rng.below(n));
    centers.emplace_back(cell / dims.cols, cell % dims.cols);
  };
  for (std::uint64_t i = 0; i < clusters; ++i) add_center();

  const int radius = static_cast<int>(std::floor(params.radius));
  const double r2 = params.radius * params.radius;
  std::vector<char> occupied(n, 0);
  std::vector<std::pair<int, int>> placed;
  int rejects = 0;
  int reseeds = 0;
  while (placed.size() < target) {
    if (rejects > 256) {
      // Neighbourhoods are saturated: open a new cluster, and eventually fall
      // back to a uniformly chosen free cell so placement always terminates.
      rejects = 0;
      if (++reseeds > 64) {
        std::vector<int> free_cells;
        for (std::uint64_t i = 0; i < n; ++i) {
          if (!occupied[i]) free_cells.push_back(static_cast<int>(i));
        }
        const int cell = free_cells[rng.below(free_cells.size())];
        occupied[cell] = 1;
        placed.emplace_back(cell / dims.cols, cell % dims.cols);
        continue;
      }
      add_center();
    }
    const auto& [cr, cc] = centers[rng.below(centers.size())];
    const int dr = static_cast<int>(rng.below(2 * radius + 1)) - radius;
    const int dc = static_cast<int>(rng.below(2 * radius + 1)) - radius;
    const int r = cr + dr, c = cc + dc;
    if (dr * dr + dc * dc > r2 || r < 0 || r >= dims.rows || c < 0 || c >= dims.cols ||
        occupied[r * dims.cols + c]) {
      ++rejects;
      continue;
    }
    rejects = 0;
    occupied[r * dims.cols + c] = 1;
    placed.emplace_back(r, c);
  }

  std::vector<PeFault> faults;
  faults.reserve(placed.size());
  for (const auto& [r, c] : placed) faults.push_back(stuck_fault(r, c, rng.next()));
  return FaultSet(std::move(faults));
}

FaultSet sample_faults(const FaultModel& model, const ArrayDims& dims, Rng& rng) {
  model.validate();
  if (model.kind == FaultDistribution::kClustered) {
    return sample_clustered_faults(dims, model.pe_error_rate, model.cluster, rng);
  }
  return sample_random_faults(dims, model.pe_error_rate, rng);
}

std::size_t inject_seu_inplace(std::span<std::int8_t> data, double ber, Rng& rng,
                               std::vector<BitFlip>* log) {
  if (!(ber >= 0.0 && ber <= 1.0)) {
    throw std::domain_error(fmt::format("bit error rate {} outside [0, 1]", ber));
  }
  const std::uint64_t total = static_cast<std::uint64_t>(data.size()) * 8;
  std::size_t flipped = 0;
  auto flip = [&](std::uint64_t pos) {
    const auto idx = static_cast<std::uint32_t>(pos / 8);
    const auto bit = static_cast<std::uint8_t>(pos % 8);
    data[idx] = static_cast<std::int8_t>(static_cast<std::uint8_t>(data[idx]) ^ (1u << bit));
    if (log) log->push_back({idx, bit});
    ++flipped;
  };
  if (ber == 0.0 || total == 0) return 0;
  if (ber < 0.05) {
    // Gap between flips is geometric; skip ahead instead of testing each bit.
    const double log_q = std::log1p(-ber);
    std::uint64_t pos = 0;
    while (true) {
      const double gap = std::floor(std::log(1.0 - rng.uniform()) / log_q);
      if (gap >= static_cast<double>(total - pos)) break;
      pos += static_cast<std::uint64_t>(gap);
      flip(pos);
      if (++pos >= total) break;
    }
    return flipped;
  }
  for (std::uint64_t pos = 0; pos < total; ++pos) {
    if (ber >= 1.0 || rng.bernoulli(ber)) flip(pos);
  }
  return flipped;
}

SeuResult inject_seu(const FxpTensor& tensor, double ber, Rng& rng) {
  SeuResult result{tensor, {}};
  inject_seu_inplace(result.tensor.data, ber, rng, &result.flips);
  return result;
}

}  // namespace fiadla
