#pragma once

#include <cstddef>
#include <vector>

#include "fiadla/faults.hpp"

namespace fiadla {

struct ArrayConfig {
  ArrayDims dims{32, 16};
  std::size_t input_buffer_bytes = 128 * 1024;
  std::size_t output_buffer_bytes = 128 * 1024;
  std::size_t weight_buffer_bytes = 416 * 1024;

  // Register widths are fixed at 8/8/16/32 by the PE model.
  static constexpr int reg_bit_num() { return kRegBitNum; }
  void validate() const;
  friend bool operator==(const ArrayConfig&, const ArrayConfig&) = default;
};

// Hybrid computing architecture: the 2D array plus a dot-product unit (DPPU)
// that recomputes outputs mapped to faulty PEs.
struct HcaConfig {
  int dppu_size = 16;
  int weight_regfile_depth = 32;
  int multiplier_group_size = 4;
  int adder_group_size = 3;

  static HcaConfig with_dppu(int size);

  int multiplier_groups() const;
  // Multipliers including one redundant unit per group.
  int multiplier_units() const { return dppu_size + multiplier_groups(); }
  // Adders in the reduction tree over dppu_size products.
  int adders() const { return dppu_size > 0 ? dppu_size - 1 : 0; }
  int adder_groups() const;
  int adder_units() const { return adders() + adder_groups(); }

  void validate() const;
  friend bool operator==(const HcaConfig&, const HcaConfig&) = default;
};

// Faulty DPPU units. Multiplier unit i belongs to group i / (group_size + 1);
// adder units likewise.
struct DppuState {
  std::vector<int> faulty_multipliers;
  std::vector<int> faulty_adders;

  bool empty() const { return faulty_multipliers.empty() && faulty_adders.empty(); }
  void validate(const HcaConfig& hca) const;
};

}  // namespace fiadla
