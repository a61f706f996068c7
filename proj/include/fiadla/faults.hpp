#pragma once

// Stochastic fault generation: PE-level fault placement on the computing
// array (random and clustered), the BER -> PE error rate conversion, and SEU
// bit flips on tensors.

#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fiadla/fxp.hpp"
#include "fiadla/rng.hpp"
#include "json.hpp"

namespace fiadla {

struct ArrayDims {
  int rows = 32;
  int cols = 16;

  int pes() const { return rows * cols; }
  friend bool operator==(const ArrayDims&, const ArrayDims&) = default;
};

// The four PE registers, in global bit order: input_a [0, 8), input_b [8, 16),
// product [16, 32), accumulator [32, 64).
enum class Register : std::uint8_t { kInputA, kInputB, kProduct, kAccumulator };

inline constexpr int kRegBitNum = 64;

int register_width(Register reg);
std::string to_string(Register reg);
Register register_from_string(const std::string& s);

enum class FaultKind : std::uint8_t { kStuckAt0, kStuckAt1, kTransient };

std::string to_string(FaultKind kind);
FaultKind fault_kind_from_string(const std::string& s);

struct PeFault {
  int row = 0;
  int col = 0;
  Register reg = Register::kAccumulator;
  int bit = 0;
  FaultKind kind = FaultKind::kStuckAt1;
  // Layer-global cycle of a transient flip (iteration * T_iteration + local).
  std::uint64_t cycle = 0;

  friend auto operator<=>(const PeFault&, const PeFault&) = default;
};

// Maps a global register bit in [0, 64) onto (register, bit).
std::pair<Register, int> register_bit(int global_bit);

class FaultSet {
 public:
  FaultSet() = default;
  explicit FaultSet(std::vector<PeFault> faults);

  void add(const PeFault& fault);

  // Row-major, duplicates removed.
  const std::vector<PeFault>& faults() const { return faults_; }
  // Distinct (row, col) pairs, row-major.
  const std::vector<std::pair<int, int>>& faulty_pes() const { return pes_; }
  std::size_t fault_pe_num() const { return pes_.size(); }
  bool empty() const { return faults_.empty(); }

  // Throws std::out_of_range if any fault lies outside `dims` or has a bit
  // index beyond its register width.
  void validate(const ArrayDims& dims) const;

  friend bool operator==(const FaultSet&, const FaultSet&) = default;

 private:
  void rebuild();

  std::vector<PeFault> faults_;
  std::vector<std::pair<int, int>> pes_;
};

nlohmann::json to_json(const FaultSet& set, const ArrayDims& dims);
FaultSet fault_set_from_json(const nlohmann::json& j, ArrayDims* dims = nullptr);

enum class FaultDistribution { kRandom, kClustered };

std::string to_string(FaultDistribution d);
FaultDistribution fault_distribution_from_string(const std::string& s);

struct ClusterParams {
  // Mean number of clusters; <= 0 selects max(1, round(expected_faults / 4)).
  double count_mean = 0.0;
  // Spread radius in PE cells (Euclidean).
  double radius = 2.0;
};

struct FaultModel {
  FaultDistribution kind = FaultDistribution::kRandom;
  double bit_error_rate = 0.0;
  double pe_error_rate = 0.0;
  ClusterParams cluster;
  int reg_bit_num = kRegBitNum;

  static FaultModel from_ber(FaultDistribution kind, double ber, int reg_bit_num = kRegBitNum);
  // Rates in [0, 1]; pe_error_rate consistent with bit_error_rate when both set.
  void validate() const;
};

// 1 - (1 - ber)^reg_bit_num. Throws std::domain_error for ber outside [0, 1]
// or reg_bit_num < 1.
double pe_error_rate(double bit_error_rate, int reg_bit_num = kRegBitNum);

// Every PE independently faulty with probability pe_rate; a faulty PE gets one
// stuck-at fault on a uniformly chosen register bit with uniform polarity.
// The stream consumption is independent of pe_rate, so a shared seed yields
// nested fault sets across rates.
FaultSet sample_random_faults(const ArrayDims& dims, double pe_rate, Rng& rng);

// Center-based clustered placement. Fault count ~ Binomial(rows*cols, pe_rate);
// cluster centers uniform; faults placed uniformly inside the spread radius of
// a randomly chosen center until the count is reached.
FaultSet sample_clustered_faults(const ArrayDims& dims, double pe_rate,
                                 const ClusterParams& params, Rng& rng);

FaultSet sample_faults(const FaultModel& model, const ArrayDims& dims, Rng& rng);

struct BitFlip {
  std::uint32_t index = 0;
  std::uint8_t bit = 0;

  friend bool operator==(const BitFlip&, const BitFlip&) = default;
};

struct SeuResult {
  FxpTensor tensor;
  std::vector<BitFlip> flips;
};

// Flips every data bit independently with probability ber. The input is not
// modified. Throws std::domain_error for ber outside [0, 1].
SeuResult inject_seu(const FxpTensor& tensor, double bit_error_rate, Rng& rng);

// In-place variant; appends flips to `log` when it is non-null. Returns the
// number of flipped bits.
std::size_t inject_seu_inplace(std::span<std::int8_t> data, double bit_error_rate, Rng& rng,
                               std::vector<BitFlip>* log = nullptr);

}  // namespace fiadla
