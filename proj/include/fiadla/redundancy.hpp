#pragma once

// Repair feasibility and graceful degradation for spare-PE schemes (row,
// column and diagonal redundancy) and for the hybrid architecture (HCA),
// plus the Monte-Carlo fully-functional estimator built on them.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fiadla/faults.hpp"
#include "fiadla/fxp.hpp"
#include "fiadla/hardware.hpp"

namespace fiadla {

enum class Scheme { kNone, kRowRedundancy, kColumnRedundancy, kDiagonalRedundancy, kHca };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct SchemeConfig {
  Scheme scheme = Scheme::kHca;
  // RR: spare PEs shared by each row (one spare column by default).
  int spares_per_row = 1;
  // CR: spare PEs shared by each column (one spare row by default).
  int spares_per_column = 1;
  // DR: diagonal units; unit i serves row i and column i. <= 0 selects
  // min(rows, cols).
  int diagonal_units = 0;
  HcaConfig hca;

  int diagonal_units_for(const ArrayDims& dims) const;
  void validate() const;
};

enum class DegradeMode { kFull, kStall, kDiscard };
std::string to_string(DegradeMode m);

using PeCoord = std::pair<int, int>;

struct RepairOutcome {
  bool fully_functional = true;
  std::vector<PeCoord> repaired_pes;
  std::vector<PeCoord> unrepaired_pes;
  // Width of the contiguous column prefix still in use.
  int remaining_cols = 0;
  int t_stall = 0;
  double t_penalty = 0.0;
  DegradeMode mode = DegradeMode::kFull;
};

// Each chained group (group_size + 1 units) tolerates one faulty unit.
bool dppu_functional(const DppuState& state, const HcaConfig& hca);

// Throws std::out_of_range for faults outside `dims`.
RepairOutcome repair(const SchemeConfig& scheme, const FaultSet& faults, const ArrayDims& dims,
                     const DppuState& dppu = {});

struct StallPenalty {
  int t_stall = 0;         // faulty PEs beyond DPPU capacity
  double t_penalty = 0.0;  // extra cycles per iteration
};

// T_stall = fault_pe_num - dppu_size and T_penalty = T_stall * c*k*k / dppu_size
// when fault_pe_num exceeds dppu_size, else both zero. Throws InfeasibleError
// when faults exist but dppu_size is zero.
StallPenalty stall_penalty(int fault_pe_num, int dppu_size, int c, int k);

// Largest column prefix P whose faulty PEs all fit in `capacity` DPPU slots.
int remaining_array(const FaultSet& faults, int capacity, const ArrayDims& dims);
int remaining_array(const FaultSet& faults, const HcaConfig& hca, const ArrayDims& dims);

// Picks full repair, stall, or prefix discard for an HCA array running layers
// with reduction length c*k*k, by steady-state throughput. Ties go to discard.
RepairOutcome degrade_decision(const FaultSet& faults, const HcaConfig& hca,
                               const ArrayDims& dims, int c, int k, const DppuState& dppu = {});

// Post-degradation throughput normalized to the fault-free array.
double remaining_power(const SchemeConfig& scheme, const FaultSet& faults, const ArrayDims& dims,
                       const DppuState& dppu = {});

// ceil(pixels / rows) * ceil(out_channels / cols) * c*k*k.
std::int64_t layer_cycles(const LayerSpec& layer, const std::vector<int>& out_dims,
                          int active_rows, int active_cols);

// Per-unit DPPU faults, each unit faulty with probability `rate`. Consumes a
// fixed number of draws.
DppuState sample_dppu_faults(const HcaConfig& hca, double rate, Rng& rng);

struct ReliabilityOptions {
  ArrayDims dims{32, 16};
  FaultDistribution model = FaultDistribution::kRandom;
  ClusterParams cluster;
  std::int64_t trials = 100000;
  std::uint64_t seed = 1;
  bool sample_dppu_faults = true;
  int jobs = 1;
};

struct ReliabilityEstimate {
  Scheme scheme = Scheme::kNone;
  FaultDistribution model = FaultDistribution::kRandom;
  double pe_rate = 0.0;
  std::int64_t trials = 0;
  double ff_probability = 0.0;
  double stderr_ = 0.0;
  double mean_remaining_power = 0.0;
  // Trials whose fault count exceeded the DPPU size, and how many of those
  // were still fully functional (HCA bookkeeping).
  std::int64_t over_capacity_trials = 0;
  std::int64_t over_capacity_ff = 0;
};

// Trial t draws from derive_seed(seed, kReliability, t), independent of the
// rate, so estimates at different rates use common random numbers. Results do
// not depend on `jobs`.
ReliabilityEstimate fully_functional_probability(const SchemeConfig& scheme,
                                                 const ReliabilityOptions& opts, double pe_rate);

// Evaluates several schemes on shared fault sets for each rate.
std::vector<ReliabilityEstimate> reliability_sweep(const std::vector<SchemeConfig>& schemes,
                                                   const ReliabilityOptions& opts,
                                                   const std::vector<double>& rates);

// scheme,model,pe_rate,trials,ff_probability,stderr,mean_remaining_power
void write_reliability_csv(std::ostream& out, const std::vector<ReliabilityEstimate>& rows,
                           bool header = true);

}  // namespace fiadla
