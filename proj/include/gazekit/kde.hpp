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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gazekit/density.hpp"

namespace gazekit {

/// Cross-subject kernel density model: a Gaussian KDE of the other
/// subjects' fixations mixed with the center bias.
struct KdeModel {
  double bandwidth = 1.0;  // grid cells
  double mix_eps = 0.0;    // weight of the center bias, in [0, 1)
};

// Weight of the uniform component folded into the fitted center bias. It keeps
// every cell at positive density so log-likelihoods stay finite.
inline constexpr double kCenterBiasUniformWeight = 1e-6;

// n x n matrix whose row c holds the truncated Gaussian centred on cell c,
// renormalized over [0, n).
Eigen::MatrixXd kde_axis_operator(int n, double bandwidth);

// Isotropic KDE on the grid. Each kernel is truncated at the shared kernel
// radius and renormalized over the grid, so the result sums to 1.
Grid kde_grid(const std::vector<GridPoint>& points, GridShape shape, double bandwidth);

// Pooled KDE of all fixations. The bandwidth is chosen from `bandwidths` by
// average log-likelihood on a seeded 10% hold-out of images, then refitted
// on everything.
CenterBiasPrior fit_center_bias(const FixationDataset& train, GridShape shape, const std::vector<double>& bandwidths,
                                std::uint64_t seed = 0);

using SubjectFixations = std::map<std::string, std::vector<GridPoint>>;

// (1 - mix_eps) * KDE(all subjects except `held_out`) + mix_eps * baseline.
// mix_eps = 1 returns the baseline itself.
DensityMap gold_standard_density(const SubjectFixations& subjects, const std::string& held_out, GridShape shape,
                                 const KdeModel& model, const CenterBiasPrior& baseline, std::string image_id = {});

// The (bandwidth, mix_eps) pair maximizing the leave-one-subject-out
// log-likelihood summed over all images and subjects. Grid order breaks ties.
KdeModel learn_gold_bandwidth(const FixationDataset& dataset, const std::vector<double>& bandwidths,
                              const std::vector<double>& eps_grid, const CenterBiasPrior& baseline);

// Leave-one-subject-out log-likelihood (nats) summed over the image's fixations.
double gold_log_likelihood(const FixationDataset& dataset, const std::string& image_id, const KdeModel& model,
                           const CenterBiasPrior& baseline);

// Map a fixation from its image grid to another grid via the cell centre.
std::optional<GridPoint> regrid(GridPoint p, GridShape from, GridShape to);

// FMAP with C = 1 holding log_p, plus `<path>.txt` with `bandwidth=<value>`.
void save_center_bias(const CenterBiasPrior& prior, const std::filesystem::path& path);
CenterBiasPrior load_center_bias(const std::filesystem::path& path);

}  // namespace gazekit
