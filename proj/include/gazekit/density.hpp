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

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "gazekit/data_model.hpp"

namespace gazekit {

/// Image-independent prior, stored as a normalized log-density on one grid.
struct CenterBiasPrior {
  Grid log_p;
  bool uniform = false;
  // KDE bandwidth the prior was fitted with (0 for uniform priors).
  double bandwidth = 0.0;

  GridShape shape() const { return shape_of(log_p); }

  // Log-density on `shape`. Uniform priors adapt to any grid; fitted priors
  // must match it exactly.
  Grid log_density_for(GridShape shape) const;
  // exp(log_density_for(shape)).
  DensityMap density_for(GridShape shape, std::string image_id = {}) const;

  static CenterBiasPrior make_uniform(GridShape shape);
  // Shifts log_p so that sum(exp(log_p)) == 1.
  static CenterBiasPrior from_log_density(Grid log_p, double bandwidth = 0.0);
};

// Truncation radius shared by the blur and the KDE models: max(1, ceil(4 sigma)).
int kernel_radius(double sigma);

// Normalized Gaussian taps for offsets -R..R.
Eigen::VectorXd gaussian_kernel(double sigma);

// Index into [0, n) under half-sample symmetric reflection (d c b a | a b c d | d c b a).
int reflect_index(int i, int n);

// n x n matrix B with (B v)_i = sum_k g_k v[reflect(i - k)]. Columns sum to 1,
// so B preserves mass.
Eigen::MatrixXd blur_operator(int n, double sigma);
// Elementwise derivative of blur_operator w.r.t. sigma.
Eigen::MatrixXd blur_operator_dsigma(int n, double sigma);

// Separable Gaussian blur with reflect padding: S = B_h O B_w^T.
Grid gaussian_blur(const Eigen::Ref<const Grid>& O, double sigma);

struct BlurGradients {
  Grid grad_O;
  double grad_rho = 0.0;
};

// Adjoint of gaussian_blur, plus d/d rho with sigma = exp(rho).
BlurGradients blur_backward(const Eigen::Ref<const Grid>& grad_S, const Eigen::Ref<const Grid>& O, double sigma);

Grid add_center_bias(const Eigen::Ref<const Grid>& S, const CenterBiasPrior& prior);

// Max-subtracted log(softmax). Accepts -inf cells but needs one finite cell.
Grid log_softmax2d(const Eigen::Ref<const Grid>& S);
DensityMap softmax2d(const Eigen::Ref<const Grid>& S, std::string image_id = {});

// n i.i.d. cells drawn from the density, reproducible for a given seed.
std::vector<GridPoint> sample_fixations(const DensityMap& density, std::size_t n, std::uint64_t seed);

// Ranks cells by log-density (ties by row-major index) and assigns level
// floor(rank * 256 / N), so each level holds floor(N/256) or ceil(N/256) cells.
LevelGrid quantize_equal_mass_256(const Eigen::Ref<const Grid>& log_p);

void write_pgm(const LevelGrid& levels, const std::filesystem::path& path);
LevelGrid read_pgm(const std::filesystem::path& path);

/// Density levels separating four regions of (nearly) equal probability mass.
/// Region 0 holds the densest cells; t1 >= t2 >= t3.
struct ContourThresholds {
  double t1 = 0.0;
  double t2 = 0.0;
  double t3 = 0.0;
};

struct ContourRegions {
  ContourThresholds thresholds;
  Eigen::MatrixXi region;       // 0..3 per cell
  std::array<double, 4> mass{};
};

// Cells are taken in order of decreasing density (ties by row-major index);
// region j ends at the first cell whose cumulative mass reaches (j+1)/4.
// Each threshold is the density of the last cell in its region.
ContourRegions contour_regions(const DensityMap& density);
ContourThresholds contour_thresholds(const DensityMap& density);

}  // namespace gazekit
