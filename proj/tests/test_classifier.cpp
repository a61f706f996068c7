#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "fiadla/classifier.hpp"
#include "fiadla/metrics.hpp"

using namespace fiadla;

TEST(Dataset, DeterministicAndSized) {
  const auto a = generate_dataset(50, 3);
  const auto b = generate_dataset(50, 3);
  ASSERT_EQ(a.size(), 50u);
  EXPECT_EQ(a.labels, b.labels);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.samples[i], b.samples[i]);
    EXPECT_EQ(a.samples[i].dims, (std::vector<int>{8, 8, 1}));
    for (auto v : a.samples[i].data) EXPECT_TRUE(v == 0 || v == 1);
    EXPECT_GE(a.labels[i], 0);
    EXPECT_LT(a.labels[i], kClassCount);
  }
  EXPECT_EQ(generate_dataset(0, 3).size(), 0u);
  EXPECT_NE(generate_dataset(50, 4).labels, a.labels);
}

TEST(Dataset, TemplatesAreDistinct) {
  const auto& t = glyph_templates();
  ASSERT_EQ(t.size(), 10u);
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(t[i].size(), 64u);
    for (std::size_t j = i + 1; j < t.size(); ++j) EXPECT_NE(t[i], t[j]);
  }
}

TEST(Classifier, PerfectOnTemplates) {
  const auto net = build_classifier();
  const auto data = template_dataset();
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(argmax(forward(net, data.samples[i])), data.labels[i]);
  }
  ArrayConfig cfg{ArrayDims{32, 8}};
  EXPECT_EQ(accuracy(net, data, cfg, {}), 1.0);
}

TEST(Classifier, ScoreIsNegativeHammingDistance) {
  const auto net = build_classifier();
  const auto data = generate_dataset(30, 8);
  const auto& t = glyph_templates();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto out = forward(net, data.samples[i]);
    for (int k = 0; k < kClassCount; ++k) {
      int hd = 0;
      for (int p = 0; p < 64; ++p) hd += (data.samples[i].data[p] != 0) != (t[k][p] != 0);
      EXPECT_EQ(out.data[k], std::max(-hd, -128)) << i << " " << k;
    }
  }
}

TEST(Classifier, ZeroRateEqualsFaultFree) {
  const auto net = build_classifier();
  const auto data = generate_dataset(60, 2);
  const double clean = accuracy(net, data, ArrayConfig{ArrayDims{32, 8}}, {});
  for (double a : accuracy_under_faults(0.0, 5, data, 1)) EXPECT_EQ(a, clean);
}

TEST(Classifier, TotalCorruptionNearChance) {
  const auto data = generate_dataset(60, 2);
  const auto acc = accuracy_under_faults(1.0, 10, data, 1);
  EXPECT_LE(std::accumulate(acc.begin(), acc.end(), 0.0) / acc.size(), 0.2);
}

TEST(Classifier, AccuracyFallsWithRateAndVaries) {
  const auto data = generate_dataset(80, 5);
  const std::vector<double> rates{0, 0.005, 0.01, 0.02, 0.04, 0.06};
  std::vector<double> means;
  for (double r : rates) {
    const auto acc = accuracy_under_faults(r, 20, data, 7);
    means.push_back(dispersion(acc).mean);
    if (r == 0.01) EXPECT_GT(dispersion(acc).std, 0.0);
  }
  EXPECT_LE(spearman(rates, means), -0.9);
}

TEST(Classifier, HcaRestoresRepairableConfigs) {
  const auto net = build_classifier();
  const auto data = generate_dataset(40, 6);
  ClassifierRunOptions o;
  const double clean = accuracy(net, data, o.array, {});
  o.hca = HcaOptions{};
  for (int i = 0; i < 20; ++i) {
    const auto f = classifier_faults(0.04, i, 3, o);
    if (f.fault_pe_num() > 16) continue;
    EXPECT_EQ(accuracy(net, data, o.array, f, o.hca), clean) << i;
  }
}

TEST(Classifier, JobsDoNotChangeResults) {
  const auto data = generate_dataset(30, 1);
  ClassifierRunOptions a, b;
  b.jobs = 3;
  EXPECT_EQ(accuracy_under_faults(0.02, 6, data, 4, a), accuracy_under_faults(0.02, 6, data, 4, b));
}

TEST(Classifier, Csv) {
  std::ostringstream os;
  write_classifier_csv(os, {{0.01, 0, 0.5}, {0.01, 1, 0.75}});
  EXPECT_EQ(os.str(), "pe_rate,config_index,accuracy\n0.01,0,0.5\n0.01,1,0.75\n");
}
