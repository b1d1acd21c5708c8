#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

#include "pfesta/engine/random.hpp"
#include "pfesta/model/params.hpp"
#include "pfesta/tasks/metrics.hpp"
#include "pfesta/tasks/world.hpp"

namespace pfesta::tasks {
namespace {

// Brute force over every positive/negative pair.
double pair_count_auc(const std::vector<double>& s, const std::vector<int>& l) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (l[i] == 1 && l[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

TEST(Auc, PerfectOrderingIsOne) { EXPECT_EQ(auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 1.0); }

TEST(Auc, AllTiesIsOneHalf) { EXPECT_EQ(auc({0.3, 0.3, 0.3, 0.3}, {0, 1, 0, 1}), 0.5); }

TEST(Auc, HandCountedExample) { EXPECT_DOUBLE_EQ(auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}), 0.75); }

TEST(Auc, SingleClassIsUndefined) {
  EXPECT_THROW(auc({0.1, 0.2}, {1, 1}), MetricError);
  EXPECT_THROW(auc({0.1, 0.2}, {0, 0}), MetricError);
}

TEST(Auc, MatchesPairCountingOnRandomInstances) {
  Rng rng = make_stream(1, {});
  std::uniform_int_distribution<int> len(2, 200), coin(0, 1), level(0, 9);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = len(rng);
    std::vector<double> s(n);
    std::vector<int> l(n);
    const bool coarse = trial % 2 == 0;  // many ties
    for (int i = 0; i < n; ++i) {
      s[i] = coarse ? level(rng) / 10.0 : u(rng);
      l[i] = coin(rng);
    }
    l[0] = 0;
    l[1] = 1;
    EXPECT_NEAR(auc(s, l), pair_count_auc(s, l), 1e-12) << "trial " << trial;
  }
}

TEST(Auc, OneVsRestAveragesPerClass) {
  const std::vector<std::vector<double>> scores = {{0.9, 0.1, 0.0}, {0.2, 0.7, 0.1}, {0.1, 0.2, 0.7}, {0.6, 0.3, 0.1}};
  const std::vector<std::size_t> classes = {0, 1, 2, 0};
  EXPECT_DOUBLE_EQ(mean_one_vs_rest_auc(scores, classes, 3), 1.0);
}

TEST(Mse, HandExamples) {
  EXPECT_EQ(mse(Tensor({2}, {1, 2}), Tensor({2}, {1, 2})), 0.0);
  EXPECT_EQ(mse(Tensor({3}, {2, 3, 4}), Tensor({3}, {1, 2, 3})), 1.0);
  EXPECT_EQ(mse(Tensor({2}, {0, 2}), Tensor({2}, {1, 0})), 2.5);
  EXPECT_THROW(mse(Tensor({2}), Tensor({3})), MetricError);
}

TEST(Dice, HandExamples) {
  const Tensor a({4}, {1, 1, 0, 0});
  EXPECT_EQ(dice(a, a), 1.0);
  EXPECT_EQ(dice(a, Tensor({4}, {0, 0, 1, 1})), 0.0);
  EXPECT_EQ(dice(Tensor({4}), Tensor({4})), 1.0);
  // |A| = 4, |B| = 6, overlap 3
  const Tensor A({10}, {1, 1, 1, 1, 0, 0, 0, 0, 0, 0});
  const Tensor B({10}, {1, 1, 1, 0, 1, 1, 1, 0, 0, 0});
  EXPECT_DOUBLE_EQ(dice(A, B), 0.6);
  EXPECT_THROW(dice(Tensor({2}), Tensor({3})), MetricError);
}

TEST(Dice, SymmetricAndThresholdedAtOneHalf) {
  Rng rng = make_stream(2, {});
  for (int i = 0; i < 100; ++i) {
    const auto a = uniform_tensor({8, 8}, 0, 1, rng);
    const auto b = uniform_tensor({8, 8}, 0, 1, rng);
    EXPECT_EQ(dice(a, b), dice(b, a));
  }
  EXPECT_EQ(dice(Tensor({2}, {0.5f, 0.49f}), Tensor({2}, {1, 0})), 1.0);
}

TEST(Allocate, LargestRemainderSumsToTotal) {
  EXPECT_EQ(allocate(10, {1, 1, 1}), (std::array<std::size_t, 3>{4, 3, 3}));
  EXPECT_EQ(allocate(7, {0.5, 0.5, 0}), (std::array<std::size_t, 3>{4, 3, 0}));
  EXPECT_THROW(allocate(3, {0, 0, 0}), WorldError);
}

TEST(World, BalancedEqualClientsDifferByAtMostOnePerClass) {
  WorldConfig cfg;
  cfg.tasks = {{TaskKind::Classification, "cls", {31, 31}, {}, 0, 6}};
  const auto world = generate_world(cfg);
  std::array<std::array<int, 3>, 2> counts{};
  for (std::size_t c = 0; c < 2; ++c)
    for (const auto& s : world.tasks[0].clients[c]) ++counts[c][s.latent.class_id];
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_LE(std::abs(counts[0][k] - counts[1][k]), 1);
    for (std::size_t c = 0; c < 2; ++c) EXPECT_LE(std::abs(counts[c][k] - counts[c][0]), 1);
  }
}

TEST(World, ReferenceSizesAndMissingClass) {
  WorldConfig cfg;
  cfg.image_size = 16;
  cfg.tasks = {{TaskKind::Classification, "cls", {1093, 875}, {{1, 1, 0}, {1, 1, 1}}, 0, 3},
               {TaskKind::Severity, "sev", {286, 4265}, {}, 0, 3}};
  const auto world = generate_world(cfg);
  EXPECT_EQ(world.tasks[0].clients[0].size(), 1093u);
  EXPECT_EQ(world.tasks[0].clients[1].size(), 875u);
  EXPECT_EQ(world.tasks[1].clients[0].size(), 286u);
  EXPECT_EQ(world.tasks[1].clients[1].size(), 4265u);
  for (const auto& s : world.tasks[0].clients[0]) EXPECT_NE(s.latent.class_id, 2u);
}

TEST(World, PartitionsAreDisjoint) {
  WorldConfig cfg;
  cfg.tasks = {{TaskKind::Segmentation, "seg", {20, 15, 9}, {}, 0, 12}};
  const auto world = generate_world(cfg);
  std::set<std::uint64_t> ids;
  std::size_t n = 0;
  for (const auto& part : world.tasks[0].clients)
    for (const auto& s : part) {
      ids.insert(s.id);
      ++n;
    }
  for (const auto& s : world.tasks[0].test) {
    ids.insert(s.id);
    ++n;
  }
  EXPECT_EQ(ids.size(), n);
}

TEST(World, InfeasibleSkewIsRejected) {
  WorldConfig cfg;
  cfg.tasks = {{TaskKind::Classification, "cls", {10, 10}, {{1, 0, 0}, {1, 0, 0}}, 12, 3}};
  EXPECT_THROW(generate_world(cfg), WorldError);
  cfg.tasks[0].pool_per_class = 20;
  EXPECT_NO_THROW(generate_world(cfg));
}

TEST(World, SameSeedSameBytes) {
  WorldConfig cfg;
  cfg.seed = 42;
  cfg.tasks = {{TaskKind::Classification, "cls", {12, 7}, skewed_weights(2, 0.5), 0, 6},
               {TaskKind::Segmentation, "seg", {5}, {}, 0, 3}};
  const auto a = generate_world(cfg);
  const auto b = generate_world(cfg);
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t c = 0; c < a.tasks[t].clients.size(); ++c)
      for (std::size_t i = 0; i < a.tasks[t].clients[c].size(); ++i) {
        EXPECT_EQ(a.tasks[t].clients[c][i].image, b.tasks[t].clients[c][i].image);
        EXPECT_EQ(a.tasks[t].clients[c][i].label, b.tasks[t].clients[c][i].label);
      }
  }
  cfg.seed = 43;
  EXPECT_NE(generate_world(cfg).tasks[0].clients[0][0].image, a.tasks[0].clients[0][0].image);
}

TEST(World, ClassificationAndSeverityShareLatents) {
  for (std::uint64_t i = 0; i < 50; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      const auto c = generate_sample(3, 0, TaskKind::Classification, k, i, 32);
      const auto s = generate_sample(3, 0, TaskKind::Severity, k, i, 32);
      EXPECT_EQ(c.image, s.image);
      float occupied = 0, left = 0, right = 0;
      for (std::size_t r = 0; r < kRegions; ++r) {
        EXPECT_EQ(s.label[r], c.latent.region_occupancy[r]);
        occupied += s.label[r];
        (r % 2 ? right : left) += s.label[r];
      }
      if (k == 0) EXPECT_EQ(occupied, 0);
      if (k == 1) EXPECT_TRUE(left > 0 && right > 0);
      if (k == 2) EXPECT_TRUE((left > 0) != (right > 0));
    }
}

TEST(World, SegmentationMaskMarksTheBand) {
  int with_band = 0;
  for (std::uint64_t i = 0; i < 40; ++i) {
    const auto s = generate_sample(4, 2, TaskKind::Segmentation, i % 3, i, 32);
    float area = 0;
    for (float v : s.label.data()) area += v;
    EXPECT_EQ(area > 0, s.latent.has_band);
    with_band += s.latent.has_band;
  }
  EXPECT_GT(with_band, 5);
  EXPECT_LT(with_band, 35);
}

constexpr std::size_t kFeatures = 15;

// Region means and maxima as features, one-vs-rest logistic regression by
// gradient descent.
std::vector<double> probe_features(const Sample& s) {
  std::vector<double> f;
  for (std::size_t r = 0; r < kRegions; ++r) {
    const std::size_t y0 = (r / 2) * 32 / 3, y1 = (r / 2 + 1) * 32 / 3, x0 = (r % 2) * 16, x1 = x0 + 16;
    double sum = 0, mx = -1e9;
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t x = x0; x < x1; ++x) {
        sum += s.image[y * 32 + x];
        mx = std::max<double>(mx, s.image[y * 32 + x]);
      }
    f.push_back(sum / ((y1 - y0) * (x1 - x0)));
    f.push_back(mx);
  }
  // strongest response per side, and the weaker of the two
  const double left = std::max({f[1], f[5], f[9]}), right = std::max({f[3], f[7], f[11]});
  f.push_back(left + right);
  f.push_back(std::min(left, right));
  f.push_back(1.0);
  return f;
}

TEST(World, LinearProbeSeparatesClasses) {
  WorldConfig cfg;
  cfg.seed = 5;
  cfg.tasks = {{TaskKind::Classification, "cls", {300}, {}, 0, 150}};
  const auto world = generate_world(cfg);
  const auto& train = world.tasks[0].clients[0];
  const auto& test = world.tasks[0].test;
  std::vector<std::vector<double>> w(3, std::vector<double>(kFeatures, 0.0));
  for (int epoch = 0; epoch < 400; ++epoch) {
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<double> grad(kFeatures, 0.0);
      for (const auto& s : train) {
        const auto f = probe_features(s);
        double z = 0;
        for (std::size_t j = 0; j < kFeatures; ++j) z += w[k][j] * f[j];
        const double err = 1 / (1 + std::exp(-z)) - (s.latent.class_id == k ? 1.0 : 0.0);
        for (std::size_t j = 0; j < kFeatures; ++j) grad[j] += err * f[j] / train.size();
      }
      for (std::size_t j = 0; j < kFeatures; ++j) w[k][j] -= 2.0 * grad[j];
    }
  }
  std::vector<std::vector<double>> scores;
  std::vector<std::size_t> classes;
  for (const auto& s : test) {
    const auto f = probe_features(s);
    std::vector<double> row;
    for (std::size_t k = 0; k < 3; ++k) {
      double z = 0;
      for (std::size_t j = 0; j < kFeatures; ++j) z += w[k][j] * f[j];
      row.push_back(z);
    }
    scores.push_back(row);
    classes.push_back(s.latent.class_id);
  }
  EXPECT_GT(mean_one_vs_rest_auc(scores, classes, 3), 0.9);
}

TEST(World, DumpWritesCheckpointAndManifest) {
  WorldConfig cfg;
  cfg.image_size = 8;
  cfg.tasks = {{TaskKind::Severity, "sev", {4, 2}, {}, 0, 3}};
  const auto world = generate_world(cfg);
  const auto dir = std::filesystem::temp_directory_path() / "pfesta_world_dump_test";
  std::filesystem::remove_all(dir);
  dump_world(world, dir.string());
  const auto tensors = model::load_checkpoint((dir / "sev.bin").string());
  EXPECT_EQ(tensors.size(), 2u * (4 + 2 + 3));
  const auto& s = world.tasks[0].clients[1][0];
  EXPECT_EQ(tensors.at("client1/" + std::to_string(s.id) + "/image"), s.image);
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.txt"));
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace pfesta::tasks
