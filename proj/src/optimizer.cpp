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

#include "gazekit/optimizer.hpp"

#include <cmath>
#include <deque>

namespace gazekit {

void adam_step(AdamState& state, Eigen::VectorXd& x, const Eigen::VectorXd& grad, double lr) {
  if (grad.size() != x.size() || state.m.size() != x.size()) {
    throw ValidationError("Adam state, parameters and gradient differ in size");
  }
  if (!grad.allFinite()) {
    Eigen::Index bad = 0;
    while (std::isfinite(grad[bad])) ++bad;
    throw NumericalError("non-finite gradient at parameter " + std::to_string(bad) + " (step " +
                         std::to_string(state.step + 1) + ")");
  }
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  x.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

ReadoutParams optimizer_step(AdamState& state, const ReadoutParams& params, const ParamGradients& grads, double lr) {
  Eigen::VectorXd x = flatten(params);
  adam_step(state, x, flatten(grads), lr);
  return unflatten(x, params);
}

LbfgsResult lbfgs_minimize(const Objective& f, Eigen::VectorXd x0, int max_iterations, int memory,
                           double gradient_tolerance) {
  LbfgsResult result;
  result.x = std::move(x0);
  Eigen::VectorXd g(result.x.size());
  result.value = f(result.x, g);
  if (!std::isfinite(result.value) || !g.allFinite()) throw NumericalError("L-BFGS start point is not finite");

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  for (int it = 0; it < max_iterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() < gradient_tolerance) break;

    // Two-loop recursion.
    Eigen::VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += s_hist[i] * (alpha[i] - beta);
    }
    Eigen::VectorXd direction = -q;
    double slope = g.dot(direction);
    if (slope >= 0.0) {
      direction = -g;
      slope = -g.squaredNorm();
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    double step = s_hist.empty() ? std::min(1.0, 1.0 / g.norm()) : 1.0;
    Eigen::VectorXd x_new, g_new(g.size());
    double value_new = 0.0;
    bool accepted = false;
    for (int tries = 0; tries < 40; ++tries) {
      x_new = result.x + step * direction;
      value_new = f(x_new, g_new);
      if (std::isfinite(value_new) && g_new.allFinite() && value_new <= result.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    Eigen::VectorXd s = x_new - result.x;
    Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    result.x = std::move(x_new);
    result.value = value_new;
    g = g_new;
    result.iterations = it + 1;
  }
  return result;
}

}  // namespace gazekit
