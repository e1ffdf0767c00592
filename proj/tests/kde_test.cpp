// Copyright 2026 The GazeKit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "gazekit/kde.hpp"
#include "test_util.hpp"

namespace gazekit {
namespace {

// Per-pixel double loop over points; each axis kernel is truncated at
// max(1, ceil(4 bw)) and renormalized over the grid.
Grid brute_force_kde(const std::vector<GridPoint>& pts, GridShape shape, double bw) {
  const int r = std::max(1, static_cast<int>(std::ceil(4 * bw)));
  const auto axis_norm = [&](int c, int n) {
    double z = 0.0;
    for (int i = 0; i < n; ++i)
      if (std::abs(i - c) <= r) z += std::exp(-(i - c) * (i - c) / (2 * bw * bw));
    return z;
  };
  Grid out = Grid::Zero(shape.height, shape.width);
  for (const auto& p : pts) {
    const double zx = axis_norm(p.x, shape.width), zy = axis_norm(p.y, shape.height);
    for (int y = 0; y < shape.height; ++y)
      for (int x = 0; x < shape.width; ++x) {
        if (std::abs(x - p.x) > r || std::abs(y - p.y) > r) continue;
        out(y, x) += std::exp(-(x - p.x) * (x - p.x) / (2 * bw * bw)) / zx *
                     std::exp(-(y - p.y) * (y - p.y) / (2 * bw * bw)) / zy;
      }
  }
  return out / static_cast<double>(pts.size());
}

FixationDataset make_dataset(const std::map<std::string, std::map<std::string, std::vector<GridPoint>>>& data,
                             GridShape shape) {
  std::vector<FixationRecord> records;
  std::map<std::string, GridShape> grids;
  for (const auto& [image, subjects] : data) {
    grids[image] = shape;
    for (const auto& [subject, pts] : subjects)
      for (const auto& p : pts) records.push_back({image, subject, p.x, p.y});
  }
  return FixationDataset(records, grids);
}

TEST(Kde, MatchesBruteForce) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ubw(0.3, 9.0);
  for (int t = 0; t < 30; ++t) {
    const GridShape shape{8 + t % 25, 32 - t % 11};
    const auto pts = testing::random_points(1 + t % 50, shape.height, shape.width, rng);
    const double bw = ubw(rng);
    const Grid k = kde_grid(pts, shape, bw);
    EXPECT_LT((k - brute_force_kde(pts, shape, bw)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(k.sum(), 1.0, 1e-9);
  }
}

TEST(Kde, RejectsBadInput) {
  EXPECT_THROW(kde_grid({}, {4, 4}, 1.0), ValidationError);
  EXPECT_THROW(kde_grid({{0, 0}}, {4, 4}, 0.0), ValidationError);
  EXPECT_THROW(kde_grid({{4, 0}}, {4, 4}, 1.0), ValidationError);
}

TEST(CenterBiasFit, CenterFixationsTinyBandwidth) {
  std::map<std::string, std::map<std::string, std::vector<GridPoint>>> data;
  for (const char* id : {"a", "b", "c", "d"}) data[id]["s"] = std::vector<GridPoint>(10, GridPoint{8, 8});
  const auto prior = fit_center_bias(make_dataset(data, {17, 17}), {17, 17}, {0.1, 0.2});
  EXPECT_GT(std::exp(prior.log_p(8, 8)), 0.99);
  EXPECT_NEAR(prior.log_p.array().exp().sum(), 1.0, 1e-9);
  EXPECT_FALSE(prior.uniform);
}

TEST(CenterBiasFit, UniformFixationsLargeBandwidth) {
  std::mt19937_64 rng(2);
  std::map<std::string, std::map<std::string, std::vector<GridPoint>>> data;
  for (int i = 0; i < 20; ++i) data["img" + std::to_string(i)]["s"] = testing::random_points(5000, 24, 32, rng);
  // Kernels are renormalized over the grid, which lifts cells near the border;
  // the effect vanishes once the bandwidth exceeds the grid size.
  const auto prior = fit_center_bias(make_dataset(data, {24, 32}), {24, 32}, {40.0, 80.0}, 3);
  const Grid ratio = prior.log_p.array().exp() * (24.0 * 32.0);
  EXPECT_LT((ratio.array() - 1.0).abs().maxCoeff(), 0.1);
  EXPECT_NEAR(prior.log_p.array().exp().sum(), 1.0, 1e-9);
}

TEST(CenterBiasFit, Errors) {
  EXPECT_THROW(fit_center_bias(FixationDataset{}, {4, 4}, {1.0}), ValidationError);
  std::map<std::string, std::map<std::string, std::vector<GridPoint>>> data;
  data["a"]["s"] = {{1, 1}};
  EXPECT_THROW(fit_center_bias(make_dataset(data, {4, 4}), {4, 4}, {}), ValidationError);
}

TEST(CenterBiasFit, DeterministicForSeed) {
  std::mt19937_64 rng(4);
  std::map<std::string, std::map<std::string, std::vector<GridPoint>>> data;
  for (int i = 0; i < 12; ++i) data["i" + std::to_string(i)]["s"] = testing::random_points(30, 16, 16, rng);
  const auto ds = make_dataset(data, {16, 16});
  const auto a = fit_center_bias(ds, {16, 16}, {1, 2, 3, 4}, 9);
  const auto b = fit_center_bias(ds, {16, 16}, {1, 2, 3, 4}, 9);
  EXPECT_EQ(a.log_p, b.log_p);
  EXPECT_EQ(a.bandwidth, b.bandwidth);
}

TEST(CenterBiasIo, RoundTripRenormalizes) {
  testing::TempDir dir("cb");
  std::mt19937_64 rng(5);
  const auto prior = CenterBiasPrior::from_log_density(testing::random_grid(9, 11, rng, -6, 0), 2.5);
  save_center_bias(prior, dir / "cb.fmap");
  EXPECT_TRUE(std::filesystem::exists(dir / "cb.fmap.txt"));
  const auto back = load_center_bias(dir / "cb.fmap");
  EXPECT_EQ(back.bandwidth, 2.5);
  EXPECT_NEAR(back.log_p.array().exp().sum(), 1.0, 1e-12);
  EXPECT_LT((back.log_p - prior.log_p).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(GoldStandard, PeaksAtOtherSubject) {
  SubjectFixations s{{"A", {{3, 5}}}, {"B", {{7, 1}, {0, 0}}}};
  const auto baseline = CenterBiasPrior::make_uniform({8, 9});
  const DensityMap d = gold_standard_density(s, "B", {8, 9}, {0.5, 0.0}, baseline);
  Eigen::Index r, c;
  d.p.maxCoeff(&r, &c);
  EXPECT_EQ(r, 5);
  EXPECT_EQ(c, 3);
  EXPECT_NO_THROW(check_density(d));
}

TEST(GoldStandard, FullMixtureIsBaseline) {
  std::mt19937_64 rng(6);
  SubjectFixations s{{"A", {{3, 5}}}, {"B", {{7, 1}}}};
  const auto baseline = CenterBiasPrior::from_log_density(testing::random_grid(8, 9, rng, -3, 0));
  const DensityMap d = gold_standard_density(s, "B", {8, 9}, {1.0, 1.0}, baseline);
  EXPECT_EQ(d.p, baseline.density_for({8, 9}).p);
}

TEST(GoldStandard, MatchesBruteForceMixture) {
  std::mt19937_64 rng(7);
  const GridShape shape{32, 32};
  const auto baseline = CenterBiasPrior::from_log_density(testing::random_grid(32, 32, rng, -2, 0));
  for (int t = 0; t < 10; ++t) {
    SubjectFixations s;
    for (int k = 0; k < 4; ++k) s["s" + std::to_string(k)] = testing::random_points(12, 32, 32, rng);
    const KdeModel m{0.5 + t, 0.05 * t};
    std::vector<GridPoint> others;
    for (const auto& [id, p] : s)
      if (id != "s2") others.insert(others.end(), p.begin(), p.end());
    Grid oracle = (1 - m.mix_eps) * brute_force_kde(others, shape, m.bandwidth).array() +
                  m.mix_eps * baseline.log_p.array().exp();
    oracle /= oracle.sum();
    EXPECT_LT((gold_standard_density(s, "s2", shape, m, baseline).p - oracle).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(GoldStandard, IgnoresHeldOutSubject) {
  std::mt19937_64 rng(8);
  const auto baseline = CenterBiasPrior::make_uniform({20, 20});
  SubjectFixations s{{"a", testing::random_points(5, 20, 20, rng)}, {"b", testing::random_points(5, 20, 20, rng)},
                     {"c", testing::random_points(5, 20, 20, rng)}};
  const Grid before = gold_standard_density(s, "b", {20, 20}, {2.0, 0.1}, baseline).p;
  s["b"] = testing::random_points(17, 20, 20, rng);
  EXPECT_EQ(gold_standard_density(s, "b", {20, 20}, {2.0, 0.1}, baseline).p, before);
}

TEST(GoldStandard, NeedsOtherSubjects) {
  SubjectFixations s{{"A", {{3, 5}}}};
  EXPECT_THROW(gold_standard_density(s, "A", {8, 9}, {1.0, 0.0}, CenterBiasPrior::make_uniform({8, 9})),
               ValidationError);
}

TEST(GoldBandwidth, ForcedChoices) {
  std::mt19937_64 rng(9);
  std::map<std::string, std::map<std::string, std::vector<GridPoint>>> data;
  for (int i = 0; i < 3; ++i)
    for (int s = 0; s < 3; ++s) data["i" + std::to_string(i)]["s" + std::to_string(s)] = testing::random_points(3, 10, 10, rng);
  const auto ds = make_dataset(data, {10, 10});
  const auto baseline = CenterBiasPrior::make_uniform({10, 10});
  EXPECT_EQ(learn_gold_bandwidth(ds, {2.7}, {0.0, 0.3}, baseline).bandwidth, 2.7);
  EXPECT_EQ(learn_gold_bandwidth(ds, {1, 2, 3}, {0.0}, baseline).mix_eps, 0.0);
}

TEST(GoldBandwidth, RejectsSingleSubjectImages) {
  std::map<std::string, std::map<std::string, std::vector<GridPoint>>> data;
  data["a"]["s1"] = {{1, 1}};
  data["a"]["s2"] = {{2, 2}};
  data["b"]["s1"] = {{1, 1}};
  EXPECT_THROW(learn_gold_bandwidth(make_dataset(data, {4, 4}), {1.0}, {0.0}, CenterBiasPrior::make_uniform({4, 4})),
               ValidationError);
}

TEST(GoldBandwidth, RecoversPlantedBandwidth) {
  // Five subjects with one fixation each per image; at that sample size the
  // leave-one-subject-out optimum sits at the generating std.
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> centre(20.0, 44.0);
  std::normal_distribution<double> n(0.0, 4.0);
  std::map<std::string, std::map<std::string, std::vector<GridPoint>>> data;
  for (int i = 0; i < 80; ++i) {
    const double cx = centre(rng), cy = centre(rng);
    for (int s = 0; s < 5; ++s) {
      const int x = static_cast<int>(std::floor(cx + n(rng))), y = static_cast<int>(std::floor(cy + n(rng)));
      data["i" + std::to_string(i)]["s" + std::to_string(s)] = {{std::clamp(x, 0, 63), std::clamp(y, 0, 63)}};
    }
  }
  std::vector<double> grid;
  for (double b = 1.0; b <= 8.0; b += 0.5) grid.push_back(b);
  const KdeModel m = learn_gold_bandwidth(make_dataset(data, {64, 64}), grid, {0.0},
                                          CenterBiasPrior::make_uniform({64, 64}));
  EXPECT_GE(m.bandwidth, 3.5);
  EXPECT_LE(m.bandwidth, 4.5);
}

TEST(Regrid, CellCentres) {
  EXPECT_EQ(regrid({0, 0}, {10, 10}, {5, 5}), (GridPoint{0, 0}));
  EXPECT_EQ(regrid({9, 9}, {10, 10}, {5, 5}), (GridPoint{4, 4}));
  EXPECT_EQ(regrid({3, 1}, {4, 4}, {8, 8}), (GridPoint{7, 3}));
}

}  // namespace
}  // namespace gazekit
