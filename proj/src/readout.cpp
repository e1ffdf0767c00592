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

#include "gazekit/readout.hpp"

#include <fstream>
#include <random>

#include "binary_io.hpp"

namespace gazekit {

namespace {

using RowMajorGrid = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr char kRparMagic[4] = {'R', 'P', 'A', 'R'};
constexpr std::uint32_t kRparVersion = 1;

// 1 x (H*W) row in row-major pixel order <-> H x W grid.
Grid row_to_grid(const Eigen::MatrixXd& row, int height, int width) {
  return Eigen::Map<const RowMajorGrid>(row.data(), height, width);
}

Eigen::MatrixXd grid_to_row(const Grid& g) {
  RowMajorGrid rm = g;
  return Eigen::Map<const Eigen::MatrixXd>(rm.data(), 1, rm.size());
}

}  // namespace

std::vector<int> ReadoutParams::channel_plan() const {
  std::vector<int> plan;
  if (layers.empty()) return plan;
  plan.push_back(static_cast<int>(layers.front().weight.cols()));
  for (const auto& l : layers) plan.push_back(static_cast<int>(l.weight.rows()));
  return plan;
}

Eigen::Index ReadoutParams::parameter_count() const {
  Eigen::Index n = 1;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void ReadoutParams::validate() const {
  if (layers.empty()) throw ValidationError("readout has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.weight.rows() == 0 || l.weight.cols() == 0 || l.bias.size() != l.weight.rows()) {
      throw ValidationError("readout layer " + std::to_string(i) + " has inconsistent shapes");
    }
    if (i > 0 && l.weight.cols() != layers[i - 1].weight.rows()) {
      throw ValidationError("readout layer " + std::to_string(i) + " input width does not match previous layer");
    }
    if (!l.weight.allFinite() || !l.bias.allFinite()) {
      throw ValidationError("readout layer " + std::to_string(i) + " has non-finite parameters");
    }
  }
  if (layers.back().weight.rows() != 1) throw ValidationError("readout must end in a single output channel");
  if (!std::isfinite(rho)) throw ValidationError("blur parameter rho is not finite");
}

ReadoutParams ReadoutParams::zeros_like() const {
  ReadoutParams z;
  for (const auto& l : layers) {
    z.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  }
  return z;
}

ReadoutParams& ReadoutParams::operator+=(const ReadoutParams& other) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += other.layers[i].weight;
    layers[i].bias += other.layers[i].bias;
  }
  rho += other.rho;
  return *this;
}

ReadoutParams& ReadoutParams::operator*=(double s) {
  for (auto& l : layers) {
    l.weight *= s;
    l.bias *= s;
  }
  rho *= s;
  return *this;
}

ReadoutOutput readout_forward(const FeatureStack& features, const ReadoutParams& params) {
  return readout_forward(features.values.cast<double>(), features.height, features.width, params);
}

ReadoutOutput readout_forward(const Eigen::MatrixXd& input, int height, int width, const ReadoutParams& params) {
  if (input.rows() != params.input_channels()) {
    throw ValidationError("feature channels (" + std::to_string(input.rows()) + ") do not match readout input (" +
                          std::to_string(params.input_channels()) + ")");
  }
  if (input.cols() != static_cast<Eigen::Index>(height) * width) {
    throw ValidationError("feature pixel count does not match H*W");
  }
  ReadoutOutput out;
  auto& cache = out.cache;
  cache.height = height;
  cache.width = width;
  cache.input = input;
  const std::size_t n_layers = params.layers.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Eigen::MatrixXd& a = l == 0 ? cache.input : cache.post.back();
    Eigen::MatrixXd z = params.layers[l].weight * a;
    z.colwise() += params.layers[l].bias;
    cache.pre.push_back(std::move(z));
    if (l + 1 < n_layers) cache.post.push_back(cache.pre.back().cwiseMax(0.0));
  }
  out.O = row_to_grid(cache.pre.back(), height, width);
  return out;
}

ParamGradients readout_backward(const ForwardCache& cache, const ReadoutParams& params, const Grid& grad_O) {
  const std::size_t n_layers = params.layers.size();
  if (grad_O.rows() != cache.height || grad_O.cols() != cache.width || cache.pre.size() != n_layers ||
      cache.post.size() + 1 != n_layers) {
    throw ValidationError("readout_backward: gradient or cache shape mismatch");
  }
  ParamGradients grads = params.zeros_like();
  Eigen::MatrixXd delta = grid_to_row(grad_O);  // dLoss/dz for the current layer
  for (std::size_t l = n_layers; l-- > 0;) {
    const Eigen::MatrixXd& a = l == 0 ? cache.input : cache.post[l - 1];
    grads.layers[l].weight.noalias() = delta * a.transpose();
    grads.layers[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd upstream = params.layers[l].weight.transpose() * delta;
    delta = (cache.pre[l - 1].array() > 0.0).select(upstream, 0.0);
  }
  return grads;
}

std::vector<int> default_channel_plan(int input_channels) { return {input_channels, 16, 32, 2, 1}; }

ReadoutParams init_params(const std::vector<int>& plan, std::uint64_t seed) {
  if (plan.size() < 2 || plan.back() != 1) {
    throw ValidationError("channel plan needs at least an input and a final width of 1");
  }
  for (int c : plan)
    if (c <= 0) throw ValidationError("channel plan entries must be positive");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ReadoutParams params;
  for (std::size_t l = 0; l + 1 < plan.size(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(plan[l]));
    DenseLayer layer{Eigen::MatrixXd(plan[l + 1], plan[l]), Eigen::VectorXd::Constant(plan[l + 1], 0.1)};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = scale * normal(rng);
    params.layers.push_back(std::move(layer));
  }
  params.rho = std::log(5.0);
  return params;
}

Eigen::VectorXd flatten(const ReadoutParams& params) {
  Eigen::VectorXd flat(params.parameter_count());
  Eigen::Index k = 0;
  for (const auto& l : params.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) flat[k++] = l.weight(r, c);
    flat.segment(k, l.bias.size()) = l.bias;
    k += l.bias.size();
  }
  flat[k] = params.rho;
  return flat;
}

ReadoutParams unflatten(const Eigen::VectorXd& flat, const ReadoutParams& like) {
  if (flat.size() != like.parameter_count()) throw ValidationError("flat parameter vector has the wrong length");
  ReadoutParams params = like.zeros_like();
  Eigen::Index k = 0;
  for (auto& l : params.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat[k++];
    l.bias = flat.segment(k, l.bias.size());
    k += l.bias.size();
  }
  params.rho = flat[k];
  return params;
}

void save_params(const ReadoutParams& params, const std::filesystem::path& path) {
  params.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(kRparMagic, 4);
  detail::write_le<std::uint32_t>(out, kRparVersion);
  const auto plan = params.channel_plan();
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(plan.size()));
  for (int c : plan) detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(c));
  detail::write_le<double>(out, params.rho);
  for (const auto& l : params.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) detail::write_le<double>(out, l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) detail::write_le<double>(out, l.bias[r]);
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

ReadoutParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kRparMagic)) {
    throw FormatError("'" + path.string() + "': not an RPAR file");
  }
  if (detail::read_le<std::uint32_t>(in, "RPAR version") != kRparVersion) {
    throw FormatError("'" + path.string() + "': unsupported RPAR version");
  }
  const auto n = detail::read_le<std::uint32_t>(in, "RPAR plan length");
  if (n < 2 || n > 64) throw FormatError("'" + path.string() + "': implausible channel plan length");
  std::vector<int> plan(n);
  for (auto& c : plan) {
    const auto v = detail::read_le<std::uint32_t>(in, "RPAR plan");
    if (v == 0 || v > (1u << 24)) throw FormatError("'" + path.string() + "': implausible channel width");
    c = static_cast<int>(v);
  }
  ReadoutParams params;
  params.rho = detail::read_le<double>(in, "RPAR rho");
  for (std::size_t l = 0; l + 1 < plan.size(); ++l) {
    DenseLayer layer{Eigen::MatrixXd(plan[l + 1], plan[l]), Eigen::VectorXd(plan[l + 1])};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = detail::read_le<double>(in, "RPAR weights");
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias[r] = detail::read_le<double>(in, "RPAR biases");
    params.layers.push_back(std::move(layer));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("'" + path.string() + "': trailing bytes");
  params.validate();
  return params;
}

}  // namespace gazekit
