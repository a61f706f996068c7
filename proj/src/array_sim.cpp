#include "fiadla/array_sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "fiadla/error.hpp"

namespace fiadla {

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

int count_pixels(const std::vector<int>& out_dims) {
  return out_dims.size() >= 2 ? out_dims[0] * out_dims[1] : 1;
}

}  // namespace

std::optional<TileMapping::Element> TileMapping::element(int tile, int row, int col) const {
  if (tile < 0 || tile >= tile_count() || row < 0 || row >= rows || col < 0 || col >= cols) {
    return std::nullopt;
  }
  const int pt = tile / channel_tiles;
  const int ct = tile % channel_tiles;
  const int pixel = pt * rows + row;
  const int channel = ct * cols + col;
  if (pixel >= pixels || channel >= channels) return std::nullopt;
  return Element{pixel, channel};
}

std::pair<int, int> TileMapping::pe_of(int pixel, int channel) const {
  return {pixel % rows, channel % cols};
}

TileMapping map_layer(const LayerSpec& layer, const std::vector<int>& out_dims,
                      const ArrayConfig& cfg, int active_cols) {
  cfg.validate();
  if (out_dims.empty() || out_dims.back() != layer.out_channels) {
    throw ShapeError("output dims do not end in the layer's out_channels");
  }
  TileMapping m;
  m.layer = layer;
  m.out_dims = out_dims;
  m.pixels = count_pixels(out_dims);
  m.channels = layer.out_channels;
  m.rows = cfg.dims.rows;
  m.cols = active_cols >= 1 ? std::min(active_cols, cfg.dims.cols) : cfg.dims.cols;
  m.pixel_tiles = ceil_div(m.pixels, m.rows);
  m.channel_tiles = ceil_div(m.channels, m.cols);

  const auto ckk = static_cast<std::size_t>(layer.reduction_length());
  const auto r = static_cast<std::size_t>(m.active_rows());
  const auto c = static_cast<std::size_t>(m.active_cols());
  if (r * ckk > cfg.input_buffer_bytes) {
    throw BufferOverflowError(fmt::format("tile inputs need {} B, input buffer holds {} B",
                                          r * ckk, cfg.input_buffer_bytes));
  }
  if (c * ckk > cfg.weight_buffer_bytes) {
    throw BufferOverflowError(fmt::format("tile weights need {} B, weight buffer holds {} B",
                                          c * ckk, cfg.weight_buffer_bytes));
  }
  if (r * c > cfg.output_buffer_bytes) {
    throw BufferOverflowError(fmt::format("tile outputs need {} B, output buffer holds {} B",
                                          r * c, cfg.output_buffer_bytes));
  }
  return m;
}

nlohmann::json to_json(const TimelineReport& t) {
  return {{"t_iteration", t.t_iteration},
          {"t_2d_write", t.t_2d_write},
          {"t_dppu_write", t.t_dppu_write},
          {"idle", t.idle},
          {"port_stall", t.port_stall},
          {"fault_pe_num", t.fault_pe_num},
          {"t_stall", t.t_stall},
          {"t_penalty", t.t_penalty},
          {"iterations", t.iterations},
          {"total_cycles", t.total_cycles},
          {"active_cols", t.active_cols},
          {"mode", to_string(t.mode)},
          {"hca", t.hca}};
}

TimelineReport iteration_timeline(int col, int fault_pe_num, int dppu_size, int c, int k) {
  if (col < 0 || fault_pe_num < 0 || dppu_size < 0 || c < 0 || k < 0) {
    throw std::invalid_argument("iteration_timeline arguments must be >= 0");
  }
  const auto penalty = stall_penalty(fault_pe_num, dppu_size, c, k);
  const std::int64_t ckk = static_cast<std::int64_t>(c) * k * k;
  const int dppu_write = std::min(fault_pe_num, dppu_size);
  if (ckk < col + dppu_write) {
    throw InfeasibleError(fmt::format("iteration of {} cycles cannot hold {} column writes and {} "
                                      "DPPU writes",
                                      ckk, col, dppu_write));
  }
  TimelineReport t;
  t.t_iteration = ckk;
  t.t_2d_write = col;
  t.t_dppu_write = dppu_write;
  t.idle = ckk - col - dppu_write;
  t.fault_pe_num = fault_pe_num;
  t.t_stall = penalty.t_stall;
  t.t_penalty = penalty.t_penalty;
  t.iterations = 1;
  t.total_cycles = ckk + static_cast<std::int64_t>(std::ceil(penalty.t_penalty));
  t.active_cols = col;
  t.mode = fault_pe_num > dppu_size ? DegradeMode::kStall : DegradeMode::kFull;
  t.hca = true;
  return t;
}

namespace {

struct RegMask {
  std::uint32_t and_mask = ~0u;
  std::uint32_t or_mask = 0;

  std::uint32_t apply(std::uint32_t v) const { return (v & and_mask) | or_mask; }
};

struct Transient {
  std::uint64_t cycle = 0;
  Register reg = Register::kAccumulator;
  int bit = 0;
};

struct PeModel {
  RegMask regs[4];
  std::vector<Transient> transients;
};

// Operand source for one layer: operand(pixel, t) and weight(t, o) in the
// (kh, kw, c) reduction order.
struct Operands {
  const FxpTensor* input = nullptr;
  const FxpTensor* weights = nullptr;
  const LayerSpec* layer = nullptr;
  int out_w = 1;

  // Returns false for a padded position (operand latched as 0).
  bool operand(int pixel, int t, std::int8_t& a) const {
    if (layer->kind == LayerKind::kFullyConnected) {
      a = input->data[static_cast<std::size_t>(t)];
      return true;
    }
    const int c_in = layer->in_channels, k = layer->kernel;
    const int c = t % c_in;
    const int kw = (t / c_in) % k;
    const int kh = t / (c_in * k);
    const int oh = pixel / out_w, ow = pixel % out_w;
    const int ih = oh * layer->stride - layer->padding + kh;
    const int iw = ow * layer->stride - layer->padding + kw;
    const int in_h = input->dims[0], in_w = input->dims[1];
    if (ih < 0 || ih >= in_h || iw < 0 || iw >= in_w) {
      a = 0;
      return false;
    }
    a = input->data[(static_cast<std::size_t>(ih) * in_w + iw) * c_in + c];
    return true;
  }

  std::int8_t weight(int t, int o) const {
    return weights->data[static_cast<std::size_t>(t) * layer->out_channels + o];
  }
};

std::int32_t golden_mac(const Operands& ops, int pixel, int o, int ckk, std::int32_t bias) {
  std::int32_t acc = bias;
  std::int8_t a = 0;
  for (int t = 0; t < ckk; ++t) {
    if (!ops.operand(pixel, t, a)) continue;
    acc = wrap_add(acc, multiply(a, ops.weight(t, o)));
  }
  return acc;
}

std::int32_t faulty_mac(const Operands& ops, const PeModel& pe, int pixel, int o, int ckk,
                        std::int32_t bias, std::uint64_t tile_start) {
  const auto& ra = pe.regs[0];
  const auto& rb = pe.regs[1];
  const auto& rp = pe.regs[2];
  const auto& racc = pe.regs[3];
  std::uint32_t acc = racc.apply(static_cast<std::uint32_t>(bias));
  std::int8_t a = 0;
  for (int t = 0; t < ckk; ++t) {
    ops.operand(pixel, t, a);
    std::uint32_t ua = ra.apply(static_cast<std::uint8_t>(a)) & 0xffu;
    std::uint32_t ub = rb.apply(static_cast<std::uint8_t>(ops.weight(t, o))) & 0xffu;
    std::uint32_t up = 0;
    std::uint32_t flip[4] = {0, 0, 0, 0};
    if (!pe.transients.empty()) {
      const std::uint64_t now = tile_start + static_cast<std::uint64_t>(t);
      for (const auto& tr : pe.transients) {
        if (tr.cycle == now) flip[static_cast<int>(tr.reg)] ^= 1u << tr.bit;
      }
    }
    ua ^= flip[0];
    ub ^= flip[1];
    const auto prod = multiply(static_cast<std::int8_t>(static_cast<std::uint8_t>(ua)),
                               static_cast<std::int8_t>(static_cast<std::uint8_t>(ub)));
    up = rp.apply(static_cast<std::uint16_t>(prod)) & 0xffffu;
    up ^= flip[2];
    const auto p16 = static_cast<std::int16_t>(static_cast<std::uint16_t>(up));
    acc = racc.apply(acc + static_cast<std::uint32_t>(static_cast<std::int32_t>(p16)));
    acc ^= flip[3];
  }
  return static_cast<std::int32_t>(acc);
}

std::map<std::pair<int, int>, PeModel> build_pe_models(const FaultSet& faults) {
  std::map<std::pair<int, int>, PeModel> models;
  for (const auto& f : faults.faults()) {
    auto& pe = models[{f.row, f.col}];
    const int r = static_cast<int>(f.reg);
    const std::uint32_t bit = 1u << f.bit;
    switch (f.kind) {
      case FaultKind::kStuckAt0: pe.regs[r].and_mask &= ~bit; break;
      case FaultKind::kStuckAt1: pe.regs[r].or_mask |= bit; break;
      case FaultKind::kTransient: pe.transients.push_back({f.cycle, f.reg, f.bit}); break;
    }
  }
  return models;
}

}  // namespace

LayerRun simulate_layer(const FxpTensor& input, const FxpTensor& weights,
                        std::span<const std::int32_t> bias, const LayerSpec& layer,
                        const ArrayConfig& cfg, const FaultSet& faults,
                        const std::optional<HcaOptions>& hca) {
  const auto out_dims = output_dims(layer, input.dims);
  if (weights.dims != weight_dims(layer)) throw ShapeError("weight dims do not match layer");
  if (!bias.empty() && static_cast<int>(bias.size()) != layer.out_channels) {
    throw ShapeError("bias length does not match out_channels");
  }
  faults.validate(cfg.dims);
  const int out_frac = output_frac_bits(layer, input, weights);
  const int ckk = layer.reduction_length();

  bool use_hca = hca.has_value();
  if (use_hca) {
    hca->config.validate();
    hca->dppu.validate(hca->config);
    if (!dppu_functional(hca->dppu, hca->config)) {
      if (!hca->bypass_faulty_dppu) {
        throw InfeasibleError("HCA requested but the DPPU is not functional");
      }
      use_hca = false;
    }
  }

  // Faulty PEs that receive work at full width.
  const TileMapping full = map_layer(layer, out_dims, cfg);
  const int region_rows = full.active_rows();
  const int region_cols = full.active_cols();
  std::vector<PeFault> region_faults;
  for (const auto& f : faults.faults()) {
    if (f.row < region_rows && f.col < region_cols) region_faults.push_back(f);
  }
  const FaultSet region(std::move(region_faults));
  const int f_region = static_cast<int>(region.fault_pe_num());

  TimelineReport tl;
  tl.t_iteration = ckk;
  tl.hca = use_hca;
  int active_cols = region_cols;
  DegradeMode mode = DegradeMode::kFull;
  int dppu = 0;

  if (use_hca) {
    dppu = hca->config.dppu_size;
    if (f_region > dppu) {
      const ArrayDims region_dims{region_rows, region_cols};
      DegradePolicy policy = hca->policy;
      if (policy == DegradePolicy::kAuto) {
        const auto d = degrade_decision(region, hca->config, region_dims, layer.in_channels,
                                        layer.kernel, hca->dppu);
        policy = d.mode == DegradeMode::kStall ? DegradePolicy::kStall : DegradePolicy::kDiscard;
      }
      if (policy == DegradePolicy::kStall) {
        mode = DegradeMode::kStall;
      } else {
        mode = DegradeMode::kDiscard;
        active_cols = remaining_array(region, hca->config, region_dims);
        if (active_cols <= 0) {
          throw InfeasibleError("discarding leaves no usable column");
        }
      }
    }
  }

  const TileMapping mapping = map_layer(layer, out_dims, cfg, active_cols);
  active_cols = mapping.active_cols();
  const int tiles = mapping.tile_count();

  // Faulty PEs inside the region that is actually used.
  std::vector<PeCoord> used_faulty;
  for (const auto& pe : region.faulty_pes()) {
    if (pe.second < active_cols) used_faulty.push_back(pe);
  }
  const int f = static_cast<int>(used_faulty.size());

  LayerRun run;
  if (use_hca) run.repaired_pes = used_faulty;

  tl.t_2d_write = active_cols;
  tl.fault_pe_num = f;
  tl.iterations = tiles;
  tl.active_cols = active_cols;
  tl.mode = mode;
  if (use_hca) {
    const auto penalty = stall_penalty(f, dppu, layer.in_channels, layer.kernel);
    tl.t_dppu_write = std::min(f, dppu);
    tl.idle = std::max<std::int64_t>(0, ckk - active_cols - tl.t_dppu_write);
    tl.port_stall = std::max<std::int64_t>(
        0, active_cols + tl.t_dppu_write - std::max<std::int64_t>(ckk, active_cols));
    tl.t_stall = penalty.t_stall;
    tl.t_penalty = penalty.t_penalty;
    tl.total_cycles = static_cast<std::int64_t>(tiles) * ckk +
                      static_cast<std::int64_t>(std::ceil(tiles * penalty.t_penalty)) +
                      static_cast<std::int64_t>(tiles) * tl.port_stall;
  } else {
    tl.idle = std::max<std::int64_t>(0, ckk - active_cols);
    tl.total_cycles = static_cast<std::int64_t>(tiles) * ckk;
  }

  // Functional pass.
  Operands ops;
  ops.input = &input;
  ops.weights = &weights;
  ops.layer = &layer;
  ops.out_w = layer.kind == LayerKind::kConv ? out_dims[1] : 1;
  const auto models = use_hca ? std::map<std::pair<int, int>, PeModel>{} : build_pe_models(faults);

  FxpTensor out = FxpTensor::zeros(out_dims, out_frac);
  const int channels = layer.out_channels;
  for (int tile = 0; tile < tiles; ++tile) {
    const std::uint64_t tile_start = static_cast<std::uint64_t>(tile) * ckk;
    for (int r = 0; r < mapping.rows; ++r) {
      for (int c = 0; c < mapping.cols; ++c) {
        const auto e = mapping.element(tile, r, c);
        if (!e) continue;
        const std::int32_t b = bias.empty() ? 0 : bias[e->channel];
        std::int32_t acc;
        const auto it = models.find({r, c});
        if (it == models.end()) {
          acc = golden_mac(ops, e->pixel, e->channel, ckk, b);
        } else {
          acc = faulty_mac(ops, it->second, e->pixel, e->channel, ckk, b, tile_start);
        }
        out.data[static_cast<std::size_t>(e->pixel) * channels + e->channel] =
            finish_output(acc, layer, out_frac);
      }
    }
  }
  run.output = std::move(out);
  run.timeline = tl;
  return run;
}

NetworkRun forward_on_array(const Network& net, const FxpTensor& input, const ArrayConfig& cfg,
                            const FaultSet& faults, const std::optional<HcaOptions>& hca) {
  net.validate();
  NetworkRun run;
  FxpTensor x = input;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    auto layer_run = simulate_layer(x, net.weights[i], net.bias(i), net.layers[i], cfg, faults, hca);
    x = std::move(layer_run.output);
    run.timelines.push_back(layer_run.timeline);
  }
  run.output = std::move(x);
  return run;
}

}  // namespace fiadla
