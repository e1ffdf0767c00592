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

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "gazekit/trainer.hpp"
#include "test_util.hpp"

namespace gazekit::testing {

struct GradientCheck {
  double max_relative_error = 0.0;
  Eigen::Index worst_parameter = -1;
  Eigen::Index parameters = 0;
};

// Signs of every hidden pre-activation, concatenated over the images.
inline std::vector<bool> relu_pattern(std::span<const ImageSample> batch, const ReadoutParams& params) {
  std::vector<bool> signs;
  for (const auto& s : batch) {
    const auto fw = readout_forward(*s.features, params);
    for (std::size_t l = 0; l + 1 < fw.cache.pre.size(); ++l)
      for (Eigen::Index i = 0; i < fw.cache.pre[l].size(); ++i) signs.push_back(fw.cache.pre[l].data()[i] > 0.0);
  }
  return signs;
}

// Central difference of f along coordinate i. The step starts at `step` and is
// divided by 10 while x +- h would move some hidden unit across the ReLU kink,
// so the difference never straddles a point where the loss is not smooth.
template <typename Loss, typename Pattern>
double kink_free_difference(const Loss& f, const Pattern& pattern, const Eigen::VectorXd& x, Eigen::Index i,
                            double step) {
  const auto base = pattern(x);
  for (double h = step;; h /= 10) {
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    if (h < step * 1e-4 || (pattern(xp) == base && pattern(xm) == base)) return (f(xp) - f(xm)) / (2 * h);
  }
}

struct LossInstance {
  std::vector<ImageSample> batch;
  ReadoutParams params;
  CenterBiasPrior prior;
};

// Random instance with grids up to 16x16 and up to 8 channels. Draws are
// repeated while 4 sigma is within `margin` of an integer, where the kernel
// truncation radius jumps.
inline LossInstance random_loss_instance(std::mt19937_64& rng, double margin) {
  std::uniform_int_distribution<int> dim(3, 16), chans(1, 8), nimg(1, 2), nfix(1, 12);
  std::uniform_real_distribution<double> urho(std::log(0.4), std::log(3.0)), ubias(-0.3, 0.3);
  for (;;) {
    const int h = dim(rng), w = dim(rng), c = chans(rng);
    LossInstance inst;
    const int images = nimg(rng);
    for (int i = 0; i < images; ++i) {
      ImageSample s;
      s.features = std::make_shared<const FeatureStack>(random_stack("i" + std::to_string(i), c, h, w, rng));
      s.fixations = random_points(nfix(rng), h, w, rng);
      inst.batch.push_back(std::move(s));
    }
    inst.params = init_params(default_channel_plan(c), rng());
    for (auto& l : inst.params.layers)
      for (Eigen::Index j = 0; j < l.bias.size(); ++j) l.bias(j) += ubias(rng);
    inst.params.rho = urho(rng);
    inst.prior = CenterBiasPrior::from_log_density(random_grid(h, w, rng, -2.0, 0.0));
    const double four_sigma = 4.0 * inst.params.sigma();
    if (std::abs(four_sigma - std::round(four_sigma)) < margin) continue;
    return inst;
  }
}

// Central differences of nll_loss for every parameter against the analytic
// gradient. Relative error is |a - n| / max(|a|, |n|, floor).
inline GradientCheck check_loss_gradient(const LossInstance& inst, double step, double floor) {
  const LossAndGrads lg = nll_loss_and_grads(inst.batch, inst.params, inst.prior);
  const Eigen::VectorXd analytic = flatten(lg.grads);
  const Eigen::VectorXd x = flatten(inst.params);
  const auto loss = [&](const Eigen::VectorXd& v) { return nll_loss(inst.batch, unflatten(v, inst.params), inst.prior); };
  const auto pattern = [&](const Eigen::VectorXd& v) { return relu_pattern(inst.batch, unflatten(v, inst.params)); };
  GradientCheck out;
  out.parameters = x.size();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double numeric = kink_free_difference(loss, pattern, x, i, step);
    const double e = relative_error(analytic(i), numeric, floor);
    if (e > out.max_relative_error) {
      out.max_relative_error = e;
      out.worst_parameter = i;
    }
  }
  return out;
}

}  // namespace gazekit::testing
