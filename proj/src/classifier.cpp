#include "fiadla/classifier.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

#include "fiadla/rng.hpp"

namespace fiadla {

namespace {

// 5x7 digits placed at column 1, row 0 of the 8x8 grid.
constexpr const char* kFont[kClassCount][7] = {
    {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."},
    {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."},
    {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"},
    {"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."},
    {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."},
    {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."},
    {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."},
    {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."},
    {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."},
    {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."},
};

FxpTensor glyph_tensor(const std::vector<std::uint8_t>& px) {
  std::vector<std::int8_t> data(px.begin(), px.end());
  return FxpTensor({kGlyphSize, kGlyphSize, 1}, std::move(data), 0);
}

}  // namespace

const std::vector<std::vector<std::uint8_t>>& glyph_templates() {
  static const auto templates = [] {
    std::vector<std::vector<std::uint8_t>> t(kClassCount,
                                             std::vector<std::uint8_t>(kGlyphSize * kGlyphSize));
    for (int d = 0; d < kClassCount; ++d) {
      for (int r = 0; r < 7; ++r) {
        for (int c = 0; c < 5; ++c) {
          t[d][static_cast<std::size_t>(r) * kGlyphSize + c + 1] = kFont[d][r][c] == '#' ? 1 : 0;
        }
      }
    }
    return t;
  }();
  return templates;
}

Dataset template_dataset() {
  Dataset d;
  for (int k = 0; k < kClassCount; ++k) {
    d.samples.push_back(glyph_tensor(glyph_templates()[k]));
    d.labels.push_back(k);
  }
  return d;
}

Dataset generate_dataset(std::size_t n, std::uint64_t seed, const GlyphNoise& noise) {
  Dataset d;
  d.seed = seed;
  Rng rng(derive_seed(seed, TaskKind::kDataset));
  static constexpr int kDr[4] = {-1, 1, 0, 0};
  static constexpr int kDc[4] = {0, 0, -1, 1};
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng.below(kClassCount));
    const auto& t = glyph_templates()[label];
    int dr = 0, dc = 0;
    const bool shift = rng.bernoulli(noise.shift_prob);
    const auto dir = rng.below(4);
    if (shift) {
      dr = kDr[dir];
      dc = kDc[dir];
    }
    std::vector<std::uint8_t> px(kGlyphSize * kGlyphSize, 0);
    for (int r = 0; r < kGlyphSize; ++r) {
      for (int c = 0; c < kGlyphSize; ++c) {
        const int sr = r - dr, sc = c - dc;
        std::uint8_t v = 0;
        if (sr >= 0 && sr < kGlyphSize && sc >= 0 && sc < kGlyphSize) {
          v = t[static_cast<std::size_t>(sr) * kGlyphSize + sc];
        }
        if (rng.bernoulli(noise.flip_prob)) v ^= 1;
        px[static_cast<std::size_t>(r) * kGlyphSize + c] = v;
      }
    }
    d.samples.push_back(glyph_tensor(px));
    d.labels.push_back(label);
  }
  return d;
}

namespace {

std::uint32_t read_be32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("truncated IDX file");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         b[3];
}

}  // namespace

Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                         std::size_t limit) {
  std::ifstream img(images, std::ios::binary), lab(labels, std::ios::binary);
  if (!img || !lab) throw std::runtime_error("cannot open IDX files");
  if (read_be32(img) != 0x803 || read_be32(lab) != 0x801) throw std::runtime_error("bad IDX magic");
  std::size_t n = read_be32(img);
  if (read_be32(lab) != n) throw std::runtime_error("IDX image/label counts differ");
  const std::uint32_t h = read_be32(img), w = read_be32(img);
  if (limit > 0) n = std::min(n, limit);
  Dataset d;
  std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w);
  for (std::size_t i = 0; i < n; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    char label = 0;
    lab.read(&label, 1);
    if (!img || !lab) throw std::runtime_error("truncated IDX file");
    std::vector<std::uint8_t> px(kGlyphSize * kGlyphSize);
    for (int r = 0; r < kGlyphSize; ++r) {
      for (int c = 0; c < kGlyphSize; ++c) {
        // Box average over the source block, threshold at half intensity.
        const std::uint32_t r0 = r * h / kGlyphSize, r1 = (r + 1) * h / kGlyphSize;
        const std::uint32_t c0 = c * w / kGlyphSize, c1 = (c + 1) * w / kGlyphSize;
        std::uint32_t sum = 0, cnt = 0;
        for (auto y = r0; y < r1; ++y) {
          for (auto x = c0; x < c1; ++x) {
            sum += buf[static_cast<std::size_t>(y) * w + x];
            ++cnt;
          }
        }
        px[static_cast<std::size_t>(r) * kGlyphSize + c] = cnt && sum / cnt >= 64 ? 1 : 0;
      }
    }
    d.samples.push_back(glyph_tensor(px));
    d.labels.push_back(static_cast<unsigned char>(label));
  }
  return d;
}

Network build_classifier() {
  constexpr int kChannels = 8;
  constexpr int kPixels = kGlyphSize * kGlyphSize;
  Network net;
  net.name = "glyph-classifier";
  net.input_dims = {kGlyphSize, kGlyphSize, 1};
  net.input_frac_bits = 0;

  LayerSpec conv;
  conv.kind = LayerKind::kConv;
  conv.kernel = 3;
  conv.padding = 1;
  conv.in_channels = 1;
  conv.out_channels = kChannels;
  std::vector<std::int8_t> wc(9 * kChannels, 0);
  for (int o = 0; o < kChannels; ++o) wc[(1 * 3 + 1) * kChannels + o] = 1;

  LayerSpec fc;
  fc.kind = LayerKind::kFullyConnected;
  fc.in_channels = kPixels * kChannels;
  fc.out_channels = kClassCount;
  fc.requant_shift = 3;
  std::vector<std::int8_t> wf(static_cast<std::size_t>(fc.in_channels) * kClassCount);
  std::vector<std::int32_t> bias(kClassCount);
  for (int k = 0; k < kClassCount; ++k) {
    const auto& t = glyph_templates()[k];
    int ones = 0;
    for (int p = 0; p < kPixels; ++p) {
      ones += t[p];
      for (int ch = 0; ch < kChannels; ++ch) {
        wf[(static_cast<std::size_t>(p) * kChannels + ch) * kClassCount + k] = t[p] ? 1 : -1;
      }
    }
    bias[k] = -ones * kChannels;
  }
  net.layers = {conv, fc};
  net.weights = {FxpTensor({3, 3, 1, kChannels}, std::move(wc), 0),
                 FxpTensor({fc.in_channels, kClassCount}, std::move(wf), 3)};
  net.biases = {{}, std::move(bias)};
  net.validate();
  return net;
}

int argmax(const FxpTensor& scores) {
  if (scores.data.empty()) throw ShapeError("argmax of an empty tensor");
  return static_cast<int>(std::max_element(scores.data.begin(), scores.data.end()) -
                          scores.data.begin());
}

double accuracy(const Network& net, const Dataset& data, const ArrayConfig& cfg,
                const FaultSet& faults, const std::optional<HcaOptions>& hca) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto run = forward_on_array(net, data.samples[i], cfg, faults, hca);
    if (argmax(run.output) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

FaultSet classifier_faults(double pe_rate, int index, std::uint64_t seed,
                           const ClassifierRunOptions& opts) {
  Rng rng(derive_seed(seed, TaskKind::kClassifier, static_cast<std::uint64_t>(index)));
  FaultModel model;
  model.kind = opts.model;
  model.pe_error_rate = pe_rate;
  return sample_faults(model, opts.array.dims, rng);
}

std::vector<double> accuracy_under_faults(double pe_rate, int n_configs, const Dataset& data,
                                          std::uint64_t seed, const ClassifierRunOptions& opts) {
  if (n_configs < 0) throw std::invalid_argument("n_configs must be >= 0");
  const Network net = build_classifier();
  std::vector<double> acc(static_cast<std::size_t>(n_configs));
  const int jobs = std::max(1, std::min(opts.jobs, n_configs));
  auto work = [&](int first) {
    for (int i = first; i < n_configs; i += jobs) {
      acc[i] = accuracy(net, data, opts.array, classifier_faults(pe_rate, i, seed, opts), opts.hca);
    }
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(work, j);
  }
  return acc;
}

void write_classifier_csv(std::ostream& out, const std::vector<ClassifierRow>& rows) {
  out << "pe_rate,config_index,accuracy\n";
  for (const auto& r : rows) out << fmt::format("{:.9g},{},{:.9g}\n", r.pe_rate, r.config_index, r.accuracy);
}

}  // namespace fiadla
