#pragma once

// Functional and timing model of an output-stationary 2D computing array.
//
// Mapping: output pixels are tiled over PE rows and output channels over PE
// columns, so PE(r, c) of tile (pt, ct) owns output pixel pt*rows + r in
// channel ct*cols + c. Each PE performs one multiply-accumulate per cycle and
// finishes an output every c*k*k cycles (one iteration).
//
// Stuck-at faults are applied on every cycle to the register they sit on:
// each latched operand, each product, and the running sum after every
// accumulate (and after the bias preload). A transient fault flips its bit
// once, at its layer-global cycle.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fiadla/faults.hpp"
#include "fiadla/fxp.hpp"
#include "fiadla/hardware.hpp"
#include "fiadla/redundancy.hpp"
#include "json.hpp"

namespace fiadla {

struct TileMapping {
  LayerSpec layer;
  std::vector<int> out_dims;
  int pixels = 0;
  int channels = 0;
  int rows = 0;  // PE rows per tile
  int cols = 0;  // PE columns per tile
  int pixel_tiles = 0;
  int channel_tiles = 0;

  int tile_count() const { return pixel_tiles * channel_tiles; }
  int active_rows() const { return std::min(rows, pixels); }
  int active_cols() const { return std::min(cols, channels); }

  struct Element {
    int pixel = 0;
    int channel = 0;
  };
  // Output element computed by PE(row, col) during `tile` (row-major tile
  // order, pixel tiles outermost), if any.
  std::optional<Element> element(int tile, int row, int col) const;
  // PE (row, col) that computes (pixel, channel).
  std::pair<int, int> pe_of(int pixel, int channel) const;
};

// Throws BufferOverflowError when a tile's working set exceeds the input,
// weight or output buffer. `active_cols` < 1 uses every array column.
TileMapping map_layer(const LayerSpec& layer, const std::vector<int>& out_dims,
                      const ArrayConfig& cfg, int active_cols = 0);

struct TimelineReport {
  std::int64_t t_iteration = 0;
  std::int64_t t_2d_write = 0;
  std::int64_t t_dppu_write = 0;
  std::int64_t idle = 0;
  // Extra cycles per iteration when DPPU write-back cannot fit beside the 2D
  // writes on the output port (only for layers shorter than Col + DPPU writes).
  std::int64_t port_stall = 0;
  int fault_pe_num = 0;
  int t_stall = 0;
  double t_penalty = 0.0;
  std::int64_t iterations = 1;
  std::int64_t total_cycles = 0;
  int active_cols = 0;
  DegradeMode mode = DegradeMode::kFull;
  bool hca = false;

  // Cycles the output port sees per iteration: 2D write + DPPU write + idle.
  std::int64_t phase_cycles() const { return t_2d_write + t_dppu_write + idle; }
};

nlohmann::json to_json(const TimelineReport& t);

// Per-iteration phase schedule of the output-buffer port under HCA. Throws
// InfeasibleError if c*k*k < Col + min(fault_pe_num, dppu_size), or if faults
// exceed a zero-sized DPPU.
TimelineReport iteration_timeline(int col, int fault_pe_num, int dppu_size, int c, int k);

enum class DegradePolicy { kAuto, kStall, kDiscard };

struct HcaOptions {
  HcaConfig config;
  DppuState dppu;
  DegradePolicy policy = DegradePolicy::kAuto;
  // With a non-functional DPPU, run as a plain array instead of failing.
  bool bypass_faulty_dppu = false;
};

struct LayerRun {
  FxpTensor output;
  TimelineReport timeline;
  std::vector<PeCoord> repaired_pes;
};

// Runs one layer on the array. Throws std::out_of_range for faults outside
// the array, InfeasibleError when HCA is requested with a non-functional DPPU
// (and no bypass) or when discarding leaves no usable column.
LayerRun simulate_layer(const FxpTensor& input, const FxpTensor& weights,
                        std::span<const std::int32_t> bias, const LayerSpec& layer,
                        const ArrayConfig& cfg, const FaultSet& faults,
                        const std::optional<HcaOptions>& hca = std::nullopt);

struct NetworkRun {
  FxpTensor output;
  std::vector<TimelineReport> timelines;
};

// Runs every layer of `net` through simulate_layer with the same fault set.
NetworkRun forward_on_array(const Network& net, const FxpTensor& input, const ArrayConfig& cfg,
                            const FaultSet& faults,
                            const std::optional<HcaOptions>& hca = std::nullopt);

}  // namespace fiadla
