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

#include "gazekit/density.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

namespace gazekit {

namespace {

void check_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ValidationError("blur sigma must be positive and finite, got " + std::to_string(sigma));
  }
}

Eigen::MatrixXd operator_from_taps(int n, const Eigen::VectorXd& taps) {
  const int radius = static_cast<int>(taps.size() / 2);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int k = -radius; k <= radius; ++k) B(i, reflect_index(i - k, n)) += taps[k + radius];
  return B;
}

// Rows are y, columns x; all four index conversions below assume it.
std::vector<Eigen::Index> row_major_order(const Grid& g) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(g.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  return idx;
}

double at_row_major(const Grid& g, Eigen::Index i) { return g(i / g.cols(), i % g.cols()); }

}  // namespace

CenterBiasPrior CenterBiasPrior::make_uniform(GridShape shape) {
  if (shape.height <= 0 || shape.width <= 0) throw ValidationError("uniform prior needs a non-empty grid");
  CenterBiasPrior prior;
  prior.log_p = Grid::Constant(shape.height, shape.width, -std::log(static_cast<double>(shape.cells())));
  prior.uniform = true;
  return prior;
}

Grid CenterBiasPrior::log_density_for(GridShape target) const {
  if (uniform && target != shape()) return make_uniform(target).log_p;
  if (target != shape()) {
    throw ValidationError("center bias grid " + std::to_string(log_p.rows()) + "x" + std::to_string(log_p.cols()) +
                          " does not match image grid " + std::to_string(target.height) + "x" +
                          std::to_string(target.width));
  }
  return log_p;
}

DensityMap CenterBiasPrior::density_for(GridShape target, std::string image_id) const {
  return {std::move(image_id), log_density_for(target).array().exp()};
}

CenterBiasPrior CenterBiasPrior::from_log_density(Grid log_p, double bandwidth) {
  CenterBiasPrior prior;
  prior.log_p = log_softmax2d(log_p);
  prior.bandwidth = bandwidth;
  return prior;
}

int kernel_radius(double sigma) { return std::max(1, static_cast<int>(std::ceil(4.0 * sigma))); }

Eigen::VectorXd gaussian_kernel(double sigma) {
  check_sigma(sigma);
  const int radius = kernel_radius(sigma);
  Eigen::VectorXd taps(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k) taps[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
  return taps / taps.sum();
}

int reflect_index(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

Eigen::MatrixXd blur_operator(int n, double sigma) { return operator_from_taps(n, gaussian_kernel(sigma)); }

Eigen::MatrixXd blur_operator_dsigma(int n, double sigma) {
  const Eigen::VectorXd g = gaussian_kernel(sigma);
  const int radius = static_cast<int>(g.size() / 2);
  Eigen::VectorXd k2(g.size());
  for (int k = -radius; k <= radius; ++k) k2[k + radius] = static_cast<double>(k) * k;
  // d g_k / d sigma = g_k (k^2 - E_g[k^2]) / sigma^3
  const double mean_k2 = g.dot(k2);
  const Eigen::VectorXd dg = (g.array() * (k2.array() - mean_k2)).matrix() / (sigma * sigma * sigma);
  return operator_from_taps(n, dg);
}

Grid gaussian_blur(const Eigen::Ref<const Grid>& O, double sigma) {
  check_sigma(sigma);
  const Eigen::MatrixXd Bh = blur_operator(static_cast<int>(O.rows()), sigma);
  const Eigen::MatrixXd Bw = blur_operator(static_cast<int>(O.cols()), sigma);
  return Bh * O * Bw.transpose();
}

BlurGradients blur_backward(const Eigen::Ref<const Grid>& grad_S, const Eigen::Ref<const Grid>& O, double sigma) {
  check_sigma(sigma);
  if (grad_S.rows() != O.rows() || grad_S.cols() != O.cols()) {
    throw ValidationError("blur_backward: gradient and input shapes differ");
  }
  const int h = static_cast<int>(O.rows());
  const int w = static_cast<int>(O.cols());
  const Eigen::MatrixXd Bh = blur_operator(h, sigma);
  const Eigen::MatrixXd Bw = blur_operator(w, sigma);
  const Eigen::MatrixXd dBh = blur_operator_dsigma(h, sigma);
  const Eigen::MatrixXd dBw = blur_operator_dsigma(w, sigma);

  BlurGradients out;
  out.grad_O = Bh.transpose() * grad_S * Bw;
  const Grid dS = dBh * O * Bw.transpose() + Bh * O * dBw.transpose();
  out.grad_rho = sigma * grad_S.cwiseProduct(dS).sum();
  return out;
}

Grid add_center_bias(const Eigen::Ref<const Grid>& S, const CenterBiasPrior& prior) {
  if (S.rows() != prior.log_p.rows() || S.cols() != prior.log_p.cols()) {
    throw ValidationError("center bias grid " + std::to_string(prior.log_p.rows()) + "x" +
                          std::to_string(prior.log_p.cols()) + " does not match saliency grid " +
                          std::to_string(S.rows()) + "x" + std::to_string(S.cols()));
  }
  return S + prior.log_p;
}

Grid log_softmax2d(const Eigen::Ref<const Grid>& S) {
  if (S.size() == 0) throw ValidationError("softmax of an empty grid");
  if (S.hasNaN() || (S.array() == std::numeric_limits<double>::infinity()).any()) {
    throw ValidationError("softmax input contains NaN or +inf");
  }
  const double m = S.maxCoeff();
  if (m == -std::numeric_limits<double>::infinity()) throw ValidationError("softmax input is -inf everywhere");
  const double lse = m + std::log((S.array() - m).exp().sum());
  return S.array() - lse;
}

DensityMap softmax2d(const Eigen::Ref<const Grid>& S, std::string image_id) {
  const Grid log_p = log_softmax2d(S);
  // Eigen's vectorized exp clamps its argument, so -inf would map to a denormal.
  Grid p = (log_p.array() == -std::numeric_limits<double>::infinity()).select(0.0, log_p.array().exp());
  p /= p.sum();
  return {std::move(image_id), std::move(p)};
}

std::vector<GridPoint> sample_fixations(const DensityMap& density, std::size_t n, std::uint64_t seed) {
  const Grid& p = density.p;
  std::vector<double> cumulative(static_cast<std::size_t>(p.size()));
  double running = 0.0;
  Eigen::Index last_positive = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double mass = at_row_major(p, i);
    if (mass > 0.0) last_positive = i;
    running += mass;
    cumulative[static_cast<std::size_t>(i)] = running;
  }

  std::mt19937_64 rng(seed);
  std::vector<GridPoint> samples;
  samples.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double u = std::generate_canonical<double, 64>(rng) * running;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    Eigen::Index cell = it == cumulative.end() ? last_positive : static_cast<Eigen::Index>(it - cumulative.begin());
    samples.push_back({static_cast<int>(cell % p.cols()), static_cast<int>(cell / p.cols())});
  }
  return samples;
}

LevelGrid quantize_equal_mass_256(const Eigen::Ref<const Grid>& log_p) {
  const Grid g = log_p;
  const auto n = static_cast<std::uint64_t>(g.size());
  if (n < 256) throw ValidationError("equal-mass quantization needs at least 256 cells, got " + std::to_string(n));
  if (g.hasNaN()) throw ValidationError("cannot quantize a log-density containing NaN");

  auto order = row_major_order(g);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return at_row_major(g, a) < at_row_major(g, b); });
  LevelGrid levels(g.rows(), g.cols());
  for (std::uint64_t rank = 0; rank < n; ++rank) {
    const Eigen::Index cell = order[rank];
    levels(cell / g.cols(), cell % g.cols()) = static_cast<std::uint8_t>(rank * 256 / n);
  }
  return levels;
}

void write_pgm(const LevelGrid& levels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << "P5\n" << levels.cols() << ' ' << levels.rows() << "\n255\n";
  for (Eigen::Index y = 0; y < levels.rows(); ++y)
    for (Eigen::Index x = 0; x < levels.cols(); ++x) out.put(static_cast<char>(levels(y, x)));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

LevelGrid read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  if (!(in >> magic >> w >> h >> maxval) || magic != "P5" || maxval != 255 || w <= 0 || h <= 0) {
    throw FormatError("'" + path.string() + "' is not an 8-bit binary PGM");
  }
  in.get();
  LevelGrid levels(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int c = in.get();
      if (c == std::char_traits<char>::eof()) throw FormatError("'" + path.string() + "': truncated PGM");
      levels(y, x) = static_cast<std::uint8_t>(c);
    }
  return levels;
}

ContourRegions contour_regions(const DensityMap& density) {
  const Grid& p = density.p;
  if (p.size() == 0) throw ValidationError("contours of an empty density");
  auto order = row_major_order(p);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return at_row_major(p, a) > at_row_major(p, b); });

  const double total = p.sum();
  constexpr double kSlack = 1e-12;
  ContourRegions out;
  out.region = Eigen::MatrixXi::Constant(p.rows(), p.cols(), 3);
  std::array<double*, 3> thresholds = {&out.thresholds.t1, &out.thresholds.t2, &out.thresholds.t3};

  int region = 0;
  double cumulative = 0.0;
  for (Eigen::Index cell : order) {
    const double mass = at_row_major(p, cell);
    cumulative += mass;
    out.region(cell / p.cols(), cell % p.cols()) = region;
    out.mass[static_cast<std::size_t>(region)] += mass;
    // A single heavy cell can close several regions at once; those stay empty.
    while (region < 3 && cumulative >= (region + 1) * 0.25 * total - kSlack) {
      *thresholds[static_cast<std::size_t>(region)] = mass;
      ++region;
    }
  }
  return out;
}

ContourThresholds contour_thresholds(const DensityMap& density) { return contour_regions(density).thresholds; }

}  // namespace gazekit
