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

#include "gazekit/kde.hpp"

#include "gazekit/atomic_file.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace gazekit {

namespace {

Grid count_grid(const std::vector<GridPoint>& points, GridShape shape) {
  Grid counts = Grid::Zero(shape.height, shape.width);
  for (const auto& p : points) {
    if (p.x < 0 || p.y < 0 || p.x >= shape.width || p.y >= shape.height) {
      throw ValidationError("fixation (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") outside the " +
                            std::to_string(shape.height) + "x" + std::to_string(shape.width) + " grid");
    }
    counts(p.y, p.x) += 1.0;
  }
  return counts;
}

void check_bandwidth(double bandwidth) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw ValidationError("KDE bandwidth must be positive, got " + std::to_string(bandwidth));
  }
}

void check_baseline_shape(const CenterBiasPrior& baseline, GridShape shape, const std::string& image_id) {
  if (baseline.shape() != shape) {
    throw ValidationError("center bias grid does not match the grid of image '" + image_id + "'");
  }
}

std::vector<GridPoint> pooled_fixations(const FixationDataset& data, const std::vector<std::string>& ids,
                                        GridShape shape) {
  std::vector<GridPoint> pooled;
  for (const auto& id : ids) {
    const GridShape from = data.grid(id);
    for (const auto& p : data.fixations(id))
      if (auto q = regrid(p, from, shape)) pooled.push_back(*q);
  }
  return pooled;
}

Grid floored_kde(const std::vector<GridPoint>& points, GridShape shape, double bandwidth) {
  const double w = kCenterBiasUniformWeight;
  return (1.0 - w) * kde_grid(points, shape, bandwidth).array() + w / shape.cells();
}

}  // namespace

std::optional<GridPoint> regrid(GridPoint p, GridShape from, GridShape to) {
  if (from == to) return p;
  return map_fixation_to_grid(p.x + 0.5, p.y + 0.5, from.width, from.height, to.width, to.height);
}

Eigen::MatrixXd kde_axis_operator(int n, double bandwidth) {
  check_bandwidth(bandwidth);
  const int radius = kernel_radius(bandwidth);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int c = 0; c < n; ++c) {
    for (int i = std::max(0, c - radius); i <= std::min(n - 1, c + radius); ++i) {
      const double d = i - c;
      A(c, i) = std::exp(-0.5 * d * d / (bandwidth * bandwidth));
    }
    A.row(c) /= A.row(c).sum();
  }
  return A;
}

Grid kde_grid(const std::vector<GridPoint>& points, GridShape shape, double bandwidth) {
  if (points.empty()) throw ValidationError("KDE of an empty point set");
  const Grid counts = count_grid(points, shape);
  const Eigen::MatrixXd Ay = kde_axis_operator(shape.height, bandwidth);
  const Eigen::MatrixXd Ax = kde_axis_operator(shape.width, bandwidth);
  Grid density = Ay.transpose() * counts * Ax;
  return density / static_cast<double>(points.size());
}

CenterBiasPrior fit_center_bias(const FixationDataset& train, GridShape shape, const std::vector<double>& bandwidths,
                                std::uint64_t seed) {
  if (train.empty()) throw ValidationError("cannot fit a center bias to an empty dataset");
  if (bandwidths.empty()) throw ValidationError("center bias bandwidth grid is empty");
  if (shape.height <= 0 || shape.width <= 0) throw ValidationError("center bias grid must be non-empty");
  for (double b : bandwidths) check_bandwidth(b);

  double chosen = bandwidths.front();
  if (bandwidths.size() > 1) {
    std::vector<std::string> ids = train.image_ids();
    if (ids.size() < 2) throw ValidationError("center bias bandwidth selection needs at least 2 images");
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.1 * ids.size())));
    const std::vector<std::string> held(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_hold));
    const std::vector<std::string> fit(ids.begin() + static_cast<std::ptrdiff_t>(n_hold), ids.end());

    const auto fit_points = pooled_fixations(train, fit, shape);
    const auto held_points = pooled_fixations(train, held, shape);
    if (fit_points.empty() || held_points.empty()) {
      throw ValidationError("center bias hold-out split left no fixations on one side");
    }
    double best = -std::numeric_limits<double>::infinity();
    for (double b : bandwidths) {
      const Grid p = floored_kde(fit_points, shape, b);
      double ll = 0.0;
      for (const auto& q : held_points) ll += std::log(p(q.y, q.x));
      ll /= static_cast<double>(held_points.size());
      if (ll > best) {
        best = ll;
        chosen = b;
      }
    }
  }

  const auto all_points = pooled_fixations(train, train.image_ids(), shape);
  if (all_points.empty()) throw ValidationError("no fixations fall inside the center bias grid");
  return CenterBiasPrior::from_log_density(floored_kde(all_points, shape, chosen).array().log(), chosen);
}

DensityMap gold_standard_density(const SubjectFixations& subjects, const std::string& held_out, GridShape shape,
                                 const KdeModel& model, const CenterBiasPrior& baseline, std::string image_id) {
  if (!(model.mix_eps >= 0.0 && model.mix_eps <= 1.0)) throw ValidationError("mix_eps must lie in [0, 1]");
  check_baseline_shape(baseline, shape, image_id);
  std::vector<GridPoint> others;
  for (const auto& [subject, points] : subjects)
    if (subject != held_out) others.insert(others.end(), points.begin(), points.end());
  if (others.empty()) {
    throw ValidationError("image '" + image_id + "' has no fixations from subjects other than '" + held_out + "'");
  }
  if (model.mix_eps == 1.0) return baseline.density_for(shape, std::move(image_id));
  Grid p = (1.0 - model.mix_eps) * kde_grid(others, shape, model.bandwidth).array() +
           model.mix_eps * baseline.log_p.array().exp();
  p /= p.sum();
  return {std::move(image_id), std::move(p)};
}

KdeModel learn_gold_bandwidth(const FixationDataset& dataset, const std::vector<double>& bandwidths,
                              const std::vector<double>& eps_grid, const CenterBiasPrior& baseline) {
  if (bandwidths.empty() || eps_grid.empty()) throw ValidationError("gold standard search grid is empty");
  for (double e : eps_grid)
    if (!(e >= 0.0 && e < 1.0)) throw ValidationError("mix_eps candidates must lie in [0, 1)");
  for (const auto& id : dataset.image_ids()) {
    if (dataset.subjects(id).size() < 2) {
      throw ValidationError("image '" + id + "' has fewer than 2 subjects; the gold standard needs at least 2");
    }
    check_baseline_shape(baseline, dataset.grid(id), id);
  }
  const Grid base_p = baseline.log_p.array().exp();

  // total[b][e]: summed leave-one-subject-out log-likelihood.
  std::vector<std::vector<double>> total(bandwidths.size(), std::vector<double>(eps_grid.size(), 0.0));
  for (std::size_t bi = 0; bi < bandwidths.size(); ++bi) {
    for (const auto& id : dataset.image_ids()) {
      const GridShape shape = dataset.grid(id);
      for (const auto& [subject, own] : dataset.subjects(id)) {
        std::vector<GridPoint> others;
        for (const auto& [other, points] : dataset.subjects(id))
          if (other != subject) others.insert(others.end(), points.begin(), points.end());
        const Grid kde = kde_grid(others, shape, bandwidths[bi]);
        for (std::size_t ei = 0; ei < eps_grid.size(); ++ei) {
          const double eps = eps_grid[ei];
          for (const auto& q : own) total[bi][ei] += std::log((1.0 - eps) * kde(q.y, q.x) + eps * base_p(q.y, q.x));
        }
      }
    }
  }

  KdeModel best{bandwidths.front(), eps_grid.front()};
  double best_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t bi = 0; bi < bandwidths.size(); ++bi)
    for (std::size_t ei = 0; ei < eps_grid.size(); ++ei)
      if (total[bi][ei] > best_ll) {
        best_ll = total[bi][ei];
        best = {bandwidths[bi], eps_grid[ei]};
      }
  return best;
}

double gold_log_likelihood(const FixationDataset& dataset, const std::string& image_id, const KdeModel& model,
                           const CenterBiasPrior& baseline) {
  const GridShape shape = dataset.grid(image_id);
  const auto& subjects = dataset.subjects(image_id);
  double ll = 0.0;
  for (const auto& [subject, own] : subjects) {
    const DensityMap gold = gold_standard_density(subjects, subject, shape, model, baseline, image_id);
    for (const auto& q : own) ll += std::log(gold.p(q.y, q.x));
  }
  return ll;
}

void save_center_bias(const CenterBiasPrior& prior, const std::filesystem::path& path) {
  const GridShape shape = prior.shape();
  FeatureStack::Values values(1, shape.cells());
  for (int y = 0; y < shape.height; ++y)
    for (int x = 0; x < shape.width; ++x) values(0, y * shape.width + x) = static_cast<float>(prior.log_p(y, x));
  const FeatureStack stack("centerbias", shape.height, shape.width, std::move(values));
  write_atomically(path, [&](const std::filesystem::path& tmp) { save_feature_stack(stack, tmp); });

  std::ostringstream line;
  line.precision(17);
  line << "bandwidth=" << prior.bandwidth << '\n';
  write_atomically(path.string() + ".txt", [&](const std::filesystem::path& tmp) {
    std::ofstream side(tmp, std::ios::trunc);
    side << line.str();
    if (!side) throw Error("cannot write center bias sidecar for '" + path.string() + "'");
  });
}

CenterBiasPrior load_center_bias(const std::filesystem::path& path) {
  const FeatureStack stack = load_feature_stack(path);
  if (stack.channels() != 1) throw FormatError("'" + path.string() + "': a center bias FMAP must have C = 1");
  const Grid log_p = stack.channel(0);

  double bandwidth = 0.0;
  std::ifstream side(path.string() + ".txt");
  std::string line;
  while (side && std::getline(side, line)) {
    if (line.rfind("bandwidth=", 0) == 0) bandwidth = std::stod(line.substr(10));
  }
  if (log_p.maxCoeff() == log_p.minCoeff()) return CenterBiasPrior::make_uniform(shape_of(log_p));
  return CenterBiasPrior::from_log_density(log_p, bandwidth);
}

}  // namespace gazekit
