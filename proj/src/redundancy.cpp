#include "fiadla/redundancy.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <map>
#include <ostream>
#include <stdexcept>
#include <thread>

#include "fiadla/error.hpp"

namespace fiadla {

void ArrayConfig::validate() const {
  if (dims.rows < 1 || dims.cols < 1) throw ConfigError("array rows and cols must be >= 1");
}

HcaConfig HcaConfig::with_dppu(int size) {
  HcaConfig h;
  h.dppu_size = size;
  h.weight_regfile_depth = 2 * size;
  return h;
}

int HcaConfig::multiplier_groups() const {
  if (dppu_size <= 0) return 0;
  return (dppu_size + multiplier_group_size - 1) / multiplier_group_size;
}

int HcaConfig::adder_groups() const {
  if (adders() <= 0) return 0;
  return (adders() + adder_group_size - 1) / adder_group_size;
}

void HcaConfig::validate() const {
  std::vector<std::string> problems;
  if (dppu_size < 1) problems.push_back("hca.dppu_size must be >= 1");
  if (weight_regfile_depth != 2 * dppu_size) {
    problems.push_back("hca.weight_regfile_depth must equal 2 * dppu_size");
  }
  if (multiplier_group_size < 1) problems.push_back("hca.multiplier_group_size must be >= 1");
  if (adder_group_size < 1) problems.push_back("hca.adder_group_size must be >= 1");
  if (!problems.empty()) throw ConfigError(problems);
}

void DppuState::validate(const HcaConfig& hca) const {
  for (int m : faulty_multipliers) {
    if (m < 0 || m >= hca.multiplier_units()) throw std::out_of_range("DPPU multiplier index");
  }
  for (int a : faulty_adders) {
    if (a < 0 || a >= hca.adder_units()) throw std::out_of_range("DPPU adder index");
  }
}

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::kNone: return "none";
    case Scheme::kRowRedundancy: return "rr";
    case Scheme::kColumnRedundancy: return "cr";
    case Scheme::kDiagonalRedundancy: return "dr";
    case Scheme::kHca: return "hca";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "none") return Scheme::kNone;
  if (s == "rr") return Scheme::kRowRedundancy;
  if (s == "cr") return Scheme::kColumnRedundancy;
  if (s == "dr") return Scheme::kDiagonalRedundancy;
  if (s == "hca") return Scheme::kHca;
  throw std::invalid_argument("unknown scheme '" + s + "'");
}

std::string to_string(DegradeMode m) {
  switch (m) {
    case DegradeMode::kFull: return "full";
    case DegradeMode::kStall: return "stall";
    case DegradeMode::kDiscard: return "discard";
  }
  return "?";
}

int SchemeConfig::diagonal_units_for(const ArrayDims& dims) const {
  return diagonal_units > 0 ? diagonal_units : std::min(dims.rows, dims.cols);
}

void SchemeConfig::validate() const {
  if (spares_per_row < 0 || spares_per_column < 0) {
    throw ConfigError("spare counts must be >= 0");
  }
  if (scheme == Scheme::kHca) hca.validate();
}

bool dppu_functional(const DppuState& state, const HcaConfig& hca) {
  state.validate(hca);
  auto groups_ok = [](const std::vector<int>& faulty, int group_span) {
    std::map<int, int> per_group;
    for (int u : faulty) {
      if (++per_group[u / group_span] > 1) return false;
    }
    return true;
  };
  return groups_ok(state.faulty_multipliers, hca.multiplier_group_size + 1) &&
         groups_ok(state.faulty_adders, hca.adder_group_size + 1);
}

namespace {

void check_bounds(const FaultSet& faults, const ArrayDims& dims) {
  for (const auto& [r, c] : faults.faulty_pes()) {
    if (r < 0 || r >= dims.rows || c < 0 || c >= dims.cols) {
      throw std::out_of_range(fmt::format("fault at PE({}, {}) outside {}x{} array", r, c,
                                          dims.rows, dims.cols));
    }
  }
}

// Spares shared along one axis (rows for RR, columns for CR). Within an
// overloaded line the spares take the leftmost faults so the surviving prefix
// is as wide as possible.
RepairOutcome repair_lines(const FaultSet& faults, const ArrayDims& dims, int spares,
                           bool by_row) {
  RepairOutcome out;
  out.remaining_cols = dims.cols;
  std::map<int, std::vector<PeCoord>> lines;
  for (const auto& pe : faults.faulty_pes()) lines[by_row ? pe.first : pe.second].push_back(pe);
  for (auto& [line, pes] : lines) {
    std::sort(pes.begin(), pes.end(),
              [](const PeCoord& a, const PeCoord& b) { return a.second != b.second ? a.second < b.second : a.first < b.first; });
    for (std::size_t i = 0; i < pes.size(); ++i) {
      if (static_cast<int>(i) < spares) {
        out.repaired_pes.push_back(pes[i]);
      } else {
        out.unrepaired_pes.push_back(pes[i]);
        out.remaining_cols = std::min(out.remaining_cols, pes[i].second);
      }
    }
  }
  std::sort(out.repaired_pes.begin(), out.repaired_pes.end());
  std::sort(out.unrepaired_pes.begin(), out.unrepaired_pes.end());
  out.fully_functional = out.unrepaired_pes.empty();
  out.mode = out.fully_functional ? DegradeMode::kFull : DegradeMode::kDiscard;
  return out;
}

// Bipartite matching of faulty PEs onto diagonal units (unit i covers row i
// and column i), built one fault at a time in column order with augmenting
// paths. The first fault that cannot be matched bounds the usable prefix.
class DiagonalMatcher {
 public:
  explicit DiagonalMatcher(int units) : owner_(units, -1) {}

  bool add(const PeCoord& pe) {
    pes_.push_back(pe);
    std::vector<char> seen(owner_.size(), 0);
    if (augment(static_cast<int>(pes_.size()) - 1, seen)) return true;
    pes_.pop_back();
    return false;
  }

 private:
  bool augment(int fault, std::vector<char>& seen) {
    const auto [r, c] = pes_[fault];
    for (int unit : {r, c}) {
      if (unit >= static_cast<int>(owner_.size()) || seen[unit]) continue;
      seen[unit] = 1;
      if (owner_[unit] < 0 || augment(owner_[unit], seen)) {
        owner_[unit] = fault;
        return true;
      }
    }
    return false;
  }

  std::vector<PeCoord> pes_;
  std::vector<int> owner_;
};

RepairOutcome repair_diagonal(const FaultSet& faults, const ArrayDims& dims, int units) {
  RepairOutcome out;
  out.remaining_cols = dims.cols;
  std::vector<PeCoord> pes = faults.faulty_pes();
  std::stable_sort(pes.begin(), pes.end(),
                   [](const PeCoord& a, const PeCoord& b) { return a.second < b.second; });
  DiagonalMatcher matcher(units);
  bool prefix_ok = true;
  for (const auto& pe : pes) {
    if (prefix_ok && matcher.add(pe)) {
      out.repaired_pes.push_back(pe);
      continue;
    }
    if (prefix_ok) out.remaining_cols = pe.second;
    prefix_ok = false;
    out.unrepaired_pes.push_back(pe);
  }
  // Faults sharing the blocking column may have been matched before it; they
  // lie outside the kept prefix and count as discarded, not repaired.
  std::erase_if(out.repaired_pes, [&](const PeCoord& pe) {
    if (pe.second < out.remaining_cols) return false;
    out.unrepaired_pes.push_back(pe);
    return true;
  });
  std::sort(out.repaired_pes.begin(), out.repaired_pes.end());
  std::sort(out.unrepaired_pes.begin(), out.unrepaired_pes.end());
  out.fully_functional = out.unrepaired_pes.empty();
  out.mode = out.fully_functional ? DegradeMode::kFull : DegradeMode::kDiscard;
  return out;
}

RepairOutcome repair_prefix(const FaultSet& faults, const ArrayDims& dims, int capacity) {
  RepairOutcome out;
  out.remaining_cols = remaining_array(faults, capacity, dims);
  for (const auto& pe : faults.faulty_pes()) {
    (pe.second < out.remaining_cols ? out.repaired_pes : out.unrepaired_pes).push_back(pe);
  }
  out.fully_functional = out.unrepaired_pes.empty();
  out.mode = out.fully_functional ? DegradeMode::kFull : DegradeMode::kDiscard;
  return out;
}

}  // namespace

RepairOutcome repair(const SchemeConfig& scheme, const FaultSet& faults, const ArrayDims& dims,
                     const DppuState& dppu) {
  check_bounds(faults, dims);
  switch (scheme.scheme) {
    case Scheme::kNone: return repair_prefix(faults, dims, 0);
    case Scheme::kRowRedundancy: return repair_lines(faults, dims, scheme.spares_per_row, true);
    case Scheme::kColumnRedundancy:
      return repair_lines(faults, dims, scheme.spares_per_column, false);
    case Scheme::kDiagonalRedundancy:
      return repair_diagonal(faults, dims, scheme.diagonal_units_for(dims));
    case Scheme::kHca: {
      // A broken DPPU cannot be trusted to write back results, so it repairs
      // nothing and the array is never fully functional.
      const bool functional = dppu_functional(dppu, scheme.hca);
      if (functional && static_cast<int>(faults.fault_pe_num()) <= scheme.hca.dppu_size) {
        RepairOutcome out;
        out.repaired_pes = faults.faulty_pes();
        out.remaining_cols = dims.cols;
        return out;
      }
      RepairOutcome out = repair_prefix(faults, dims, functional ? scheme.hca.dppu_size : 0);
      out.fully_functional = false;
      out.mode = DegradeMode::kDiscard;
      return out;
    }
  }
  return {};
}

StallPenalty stall_penalty(int fault_pe_num, int dppu_size, int c, int k) {
  if (fault_pe_num <= dppu_size) return {};
  if (dppu_size <= 0) throw InfeasibleError("no DPPU capacity: recompute never completes");
  StallPenalty p;
  p.t_stall = fault_pe_num - dppu_size;
  p.t_penalty = static_cast<double>(p.t_stall) * (static_cast<double>(c) * k * k) / dppu_size;
  return p;
}

int remaining_array(const FaultSet& faults, int capacity, const ArrayDims& dims) {
  check_bounds(faults, dims);
  std::vector<int> per_col(dims.cols, 0);
  for (const auto& pe : faults.faulty_pes()) ++per_col[pe.second];
  int used = 0;
  for (int col = 0; col < dims.cols; ++col) {
    used += per_col[col];
    if (used > capacity) return col;
  }
  return dims.cols;
}

int remaining_array(const FaultSet& faults, const HcaConfig& hca, const ArrayDims& dims) {
  return remaining_array(faults, hca.dppu_size, dims);
}

RepairOutcome degrade_decision(const FaultSet& faults, const HcaConfig& hca,
                               const ArrayDims& dims, int c, int k, const DppuState& dppu) {
  SchemeConfig scheme;
  scheme.scheme = Scheme::kHca;
  scheme.hca = hca;
  RepairOutcome discard = repair(scheme, faults, dims, dppu);
  if (discard.fully_functional) return discard;
  if (!dppu_functional(dppu, hca)) return discard;  // nothing can recompute, so no stall mode

  const auto penalty = stall_penalty(static_cast<int>(faults.fault_pe_num()), hca.dppu_size, c, k);
  const double iteration = static_cast<double>(c) * k * k;
  // Col / (T + penalty) > P / T, cross-multiplied.
  const double stall_rate = static_cast<double>(dims.cols) * iteration;
  const double discard_rate = static_cast<double>(discard.remaining_cols) * (iteration + penalty.t_penalty);
  if (stall_rate > discard_rate) {
    RepairOutcome stall;
    stall.fully_functional = false;
    stall.repaired_pes = faults.faulty_pes();
    stall.remaining_cols = dims.cols;
    stall.t_stall = penalty.t_stall;
    stall.t_penalty = penalty.t_penalty;
    stall.mode = DegradeMode::kStall;
    return stall;
  }
  return discard;
}

double remaining_power(const SchemeConfig& scheme, const FaultSet& faults, const ArrayDims& dims,
                       const DppuState& dppu) {
  const auto outcome = repair(scheme, faults, dims, dppu);
  return static_cast<double>(outcome.remaining_cols) / dims.cols;
}

std::int64_t layer_cycles(const LayerSpec& layer, const std::vector<int>& out_dims,
                          int active_rows, int active_cols) {
  if (active_rows < 1 || active_cols < 1) throw InfeasibleError("no active PEs");
  const std::int64_t pixels = static_cast<std::int64_t>(out_dims.at(0)) * out_dims.at(1);
  const std::int64_t channels = out_dims.at(2);
  const std::int64_t row_tiles = (pixels + active_rows - 1) / active_rows;
  const std::int64_t col_tiles = (channels + active_cols - 1) / active_cols;
  return row_tiles * col_tiles * layer.reduction_length();
}

DppuState sample_dppu_faults(const HcaConfig& hca, double rate, Rng& rng) {
  DppuState state;
  for (int i = 0; i < hca.multiplier_units(); ++i) {
    if (rng.uniform() < rate) state.faulty_multipliers.push_back(i);
  }
  for (int i = 0; i < hca.adder_units(); ++i) {
    if (rng.uniform() < rate) state.faulty_adders.push_back(i);
  }
  return state;
}

namespace {

struct Tally {
  std::int64_t ff = 0;
  std::int64_t cols = 0;  // sum of remaining_cols, exact across worker splits
  std::int64_t over = 0;
  std::int64_t over_ff = 0;
};

}  // namespace

std::vector<ReliabilityEstimate> reliability_sweep(const std::vector<SchemeConfig>& schemes,
                                                   const ReliabilityOptions& opts,
                                                   const std::vector<double>& rates) {
  if (opts.trials < 1) throw ConfigError("trials must be >= 1");
  for (const auto& s : schemes) s.validate();
  HcaConfig dppu_shape;
  for (const auto& s : schemes) {
    if (s.scheme == Scheme::kHca) dppu_shape = s.hca;
  }

  std::vector<ReliabilityEstimate> out;
  for (double rate : rates) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw std::domain_error("pe_rate outside [0, 1]");
    const int jobs = std::max(1, opts.jobs);
    std::vector<std::vector<Tally>> partial(jobs, std::vector<Tally>(schemes.size()));
    auto worker = [&](int w) {
      for (std::int64_t t = w; t < opts.trials; t += jobs) {
        Rng rng(derive_seed(opts.seed, TaskKind::kReliability, static_cast<std::uint64_t>(t)));
        const FaultSet faults =
            opts.model == FaultDistribution::kClustered
                ? sample_clustered_faults(opts.dims, rate, opts.cluster, rng)
                : sample_random_faults(opts.dims, rate, rng);
        DppuState dppu = sample_dppu_faults(dppu_shape, rate, rng);
        if (!opts.sample_dppu_faults) dppu = {};
        for (std::size_t s = 0; s < schemes.size(); ++s) {
          const auto outcome = repair(schemes[s], faults, opts.dims, dppu);
          auto& tally = partial[w][s];
          tally.ff += outcome.fully_functional ? 1 : 0;
          tally.cols += outcome.remaining_cols;
          if (schemes[s].scheme == Scheme::kHca &&
              static_cast<int>(faults.fault_pe_num()) > schemes[s].hca.dppu_size) {
            ++tally.over;
            tally.over_ff += outcome.fully_functional ? 1 : 0;
          }
        }
      }
    };
    if (jobs == 1) {
      worker(0);
    } else {
      std::vector<std::jthread> pool;
      for (int w = 0; w < jobs; ++w) pool.emplace_back(worker, w);
    }
    for (std::size_t s = 0; s < schemes.size(); ++s) {
      Tally sum;
      for (const auto& p : partial) {
        sum.ff += p[s].ff;
        sum.cols += p[s].cols;
        sum.over += p[s].over;
        sum.over_ff += p[s].over_ff;
      }
      ReliabilityEstimate e;
      e.scheme = schemes[s].scheme;
      e.model = opts.model;
      e.pe_rate = rate;
      e.trials = opts.trials;
      const double n = static_cast<double>(opts.trials);
      e.ff_probability = static_cast<double>(sum.ff) / n;
      e.stderr_ = std::sqrt(e.ff_probability * (1.0 - e.ff_probability) / n);
      e.mean_remaining_power = static_cast<double>(sum.cols) / (n * opts.dims.cols);
      e.over_capacity_trials = sum.over;
      e.over_capacity_ff = sum.over_ff;
      out.push_back(e);
    }
  }
  return out;
}

ReliabilityEstimate fully_functional_probability(const SchemeConfig& scheme,
                                                 const ReliabilityOptions& opts, double pe_rate) {
  return reliability_sweep({scheme}, opts, {pe_rate}).front();
}

void write_reliability_csv(std::ostream& out, const std::vector<ReliabilityEstimate>& rows,
                           bool header) {
  if (header) out << "scheme,model,pe_rate,trials,ff_probability,stderr,mean_remaining_power\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{:.9g},{},{:.9g},{:.9g},{:.9g}\n", to_string(r.scheme),
                       to_string(r.model), r.pe_rate, r.trials, r.ff_probability, r.stderr_,
                       r.mean_remaining_power);
  }
}

}  // namespace fiadla
