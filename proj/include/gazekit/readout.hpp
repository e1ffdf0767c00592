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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "gazekit/data_model.hpp"

namespace gazekit {

struct DenseLayer {
  Eigen::MatrixXd weight;  // C_out x C_in
  Eigen::VectorXd bias;    // C_out
};

/// Weights of the 1x1-convolution readout stack plus the blur bandwidth,
/// stored as rho = log(sigma) so that sigma stays positive under gradient steps.
///
/// Gradients share this layout (see ParamGradients): each field then holds
/// the derivative of the loss w.r.t. the matching parameter.
struct ReadoutParams {
  std::vector<DenseLayer> layers;
  double rho = 0.0;

  double sigma() const { return std::exp(rho); }
  int input_channels() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
  // [C_in, C_out(1), ..., C_out(L)]
  std::vector<int> channel_plan() const;
  Eigen::Index parameter_count() const;

  // Throws ValidationError on inconsistent shapes, a final width != 1 or
  // non-finite entries.
  void validate() const;

  // Same shapes, every entry zero.
  ReadoutParams zeros_like() const;

  ReadoutParams& operator+=(const ReadoutParams& other);
  ReadoutParams& operator*=(double s);
};

using ParamGradients = ReadoutParams;

/// Everything the backward pass needs: the layer inputs and pre-activations.
struct ForwardCache {
  int height = 0;
  int width = 0;
  Eigen::MatrixXd input;                   // C_in x (H*W)
  std::vector<Eigen::MatrixXd> pre;        // z_l = W_l a_{l-1} + b_l
  std::vector<Eigen::MatrixXd> post;       // a_l = relu(z_l) for hidden layers
};

struct ReadoutOutput {
  Grid O;
  ForwardCache cache;
};

// Applies the layers pixelwise. ReLU follows every layer except the last,
// which is affine.
ReadoutOutput readout_forward(const FeatureStack& features, const ReadoutParams& params);
ReadoutOutput readout_forward(const Eigen::MatrixXd& input, int height, int width, const ReadoutParams& params);

// Weight and bias gradients given dLoss/dO. The returned rho slot is 0;
// feature gradients are never formed.
ParamGradients readout_backward(const ForwardCache& cache, const ReadoutParams& params, const Grid& grad_O);

// Weights ~ N(0, 1/C_in), biases 0.1, sigma 5 grid cells. The plan is
// [C_in, widths..., 1]; the default readout uses [C_in, 16, 32, 2, 1].
ReadoutParams init_params(const std::vector<int>& channel_plan, std::uint64_t seed);

std::vector<int> default_channel_plan(int input_channels);

// Packs all parameters (layer by layer: weight row-major, then bias; rho last).
Eigen::VectorXd flatten(const ReadoutParams& params);
ReadoutParams unflatten(const Eigen::VectorXd& flat, const ReadoutParams& like);

// RPAR: "RPAR", u32 version = 1, u32 plan length, u32 plan entries, f64 rho,
// then for each layer the weight (row-major) and bias, little-endian binary64.
void save_params(const ReadoutParams& params, const std::filesystem::path& path);
ReadoutParams load_params(const std::filesystem::path& path);

}  // namespace gazekit
