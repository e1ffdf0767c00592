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

#include <functional>

#include "gazekit/readout.hpp"

namespace gazekit {

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(Eigen::Index n = 0) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

// One bias-corrected Adam update of `x` in place. Throws NumericalError on
// non-finite gradients, leaving `x` and `state` untouched.
void adam_step(AdamState& state, Eigen::VectorXd& x, const Eigen::VectorXd& grad, double lr);

// Adam update of every readout weight, bias and rho.
ReadoutParams optimizer_step(AdamState& state, const ReadoutParams& params, const ParamGradients& grads, double lr);

// f(x, grad) returns the objective and writes its gradient.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
};

// Limited-memory BFGS with a backtracking Armijo line search.
LbfgsResult lbfgs_minimize(const Objective& f, Eigen::VectorXd x0, int max_iterations, int memory = 10,
                           double gradient_tolerance = 1e-9);

}  // namespace gazekit
