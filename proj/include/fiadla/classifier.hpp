#pragma once

// Small-classifier fault experiment: synthetic 8x8 digit glyphs, a hand-set
// template-matching network, and accuracy over sampled PE fault sets.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "fiadla/array_sim.hpp"
#include "fiadla/faults.hpp"
#include "fiadla/fxp.hpp"
#include "fiadla/hardware.hpp"

namespace fiadla {

inline constexpr int kGlyphSize = 8;
inline constexpr int kClassCount = 10;

struct Dataset {
  std::vector<FxpTensor> samples;  // {8, 8, 1}, frac 0, pixels 0 or 1
  std::vector<int> labels;
  std::uint64_t seed = 0;

  std::size_t size() const { return samples.size(); }
};

struct GlyphNoise {
  double flip_prob = 0.03;   // per-pixel flip
  double shift_prob = 0.25;  // chance of a one-pixel shift in a random direction
};

// The ten noise-free glyphs (row-major 0/1 pixels).
const std::vector<std::vector<std::uint8_t>>& glyph_templates();

Dataset generate_dataset(std::size_t n, std::uint64_t seed, const GlyphNoise& noise = {});
// The ten templates, labels 0..9.
Dataset template_dataset();

// IDX (MNIST) images downsampled to 8x8 and binarized. Optional; not used by
// the default experiment.
Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         std::size_t limit = 0);

// Conv 3x3, 1 -> 8 identical identity channels, then an FC matcher whose
// score for class k is minus the Hamming distance to template k.
Network build_classifier();

int argmax(const FxpTensor& scores);

struct ClassifierRunOptions {
  ArrayConfig array{ArrayDims{32, 8}};
  FaultDistribution model = FaultDistribution::kRandom;
  std::optional<HcaOptions> hca;
  int jobs = 1;
};

double accuracy(const Network& net, const Dataset& data, const ArrayConfig& cfg,
                const FaultSet& faults, const std::optional<HcaOptions>& hca = std::nullopt);

// Fault set for configuration `index`; the stream depends only on (seed,
// index), so sets are nested across rates under the random model.
FaultSet classifier_faults(double pe_rate, int index, std::uint64_t seed,
                           const ClassifierRunOptions& opts);

// One accuracy per configuration, in configuration order.
std::vector<double> accuracy_under_faults(double pe_rate, int n_configs, const Dataset& data,
                                          std::uint64_t seed,
                                          const ClassifierRunOptions& opts = {});

struct ClassifierRow {
  double pe_rate = 0.0;
  int config_index = 0;
  double accuracy = 0.0;
};

// pe_rate,config_index,accuracy
void write_classifier_csv(std::ostream& out, const std::vector<ClassifierRow>& rows);

}  // namespace fiadla
