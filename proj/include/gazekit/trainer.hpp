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
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gazekit/density.hpp"
#include "gazekit/kde.hpp"
#include "gazekit/optimizer.hpp"
#include "gazekit/readout.hpp"

namespace gazekit {

enum class OptimizerKind { kAdam, kAdamLbfgs };
enum class ReadoutKind { kFull, kLinear };

struct TrainConfig {
  int batch_size_pretrain = 100;
  int batch_size_finetune = 10;
  int min_epochs = 20;
  int max_epochs = 800;
  int lookback = 5;
  int window = 3;
  double learning_rate = 0.01;
  double lr_decay = 1.0;  // per-epoch multiplier
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  int lbfgs_iterations = 50;
  int folds = 10;
  // Ablations.
  ReadoutKind readout = ReadoutKind::kFull;
  bool pretrain = true;
  std::vector<int> feature_channels;  // empty: all channels

  void validate() const;
};

// Flat `key=value` text, `#` starts a comment. Unknown keys are errors.
TrainConfig parse_train_config(const std::string& text, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});
std::string format_train_config(const TrainConfig& cfg);
// "0-3,7" -> {0, 1, 2, 3, 7}
std::vector<int> parse_channel_list(const std::string& text);

struct EpochRecord {
  int epoch = 0;
  double train_ll = 0.0;  // bits/fixation, running mean over the epoch's batches
  double val_ll = 0.0;    // bits/fixation on the stopping set
};

struct EpochHistory {
  std::vector<EpochRecord> epochs;
};

// False before cfg.min_epochs; true at cfg.max_epochs; otherwise true iff
// each of the last `window` epochs is worse than the epoch `lookback` before it.
bool should_stop(const EpochHistory& history, const TrainConfig& cfg);

struct ImageSample {
  std::shared_ptr<const FeatureStack> features;
  std::vector<GridPoint> fixations;
};

// log p(x, y | image) for the full model: readout, blur, prior, softmax.
Grid model_log_density(const FeatureStack& features, const ReadoutParams& params, const Grid& prior_log_p);

struct LossAndGrads {
  double loss = 0.0;  // -(1/N) sum log2 p, bits/fixation
  ParamGradients grads;
  std::size_t fixations = 0;
};

LossAndGrads nll_loss_and_grads(std::span<const ImageSample> batch, const ReadoutParams& params,
                                const CenterBiasPrior& prior);
// Forward-only loss, bits/fixation.
double nll_loss(std::span<const ImageSample> batch, const ReadoutParams& params, const CenterBiasPrior& prior);

struct TrainRun {
  ReadoutParams params;  // parameters from the best validation epoch
  EpochHistory history;
  int best_epoch = 0;
};

// Overrides the stopping-set metric; receives the parameters after each epoch.
using ValidationFn = std::function<double(const ReadoutParams& params, int epoch)>;

// Seeded-shuffle mini-batch Adam until should_stop on the validation metric.
TrainRun train_readout(ReadoutParams start, std::span<const ImageSample> train, std::span<const ImageSample> val,
                       const CenterBiasPrior& prior, const TrainConfig& cfg, int batch_size, std::uint64_t seed,
                       const ValidationFn& validation = {});

std::vector<int> channel_plan_for(const TrainConfig& cfg, int input_channels);

// Random init, batch size cfg.batch_size_pretrain.
TrainRun pretrain(std::span<const ImageSample> train, std::span<const ImageSample> val, const CenterBiasPrior& prior,
                  const TrainConfig& cfg);

// Seeded assignment of image ids to k folds of sizes differing by at most 1.
std::map<std::string, int> assign_folds(std::vector<std::string> image_ids, int k, std::uint64_t seed);

struct TrainLogRow {
  std::string run;
  int epoch = 0;
  double train_ll = 0.0;
  double val_ll = 0.0;
};

struct ModelBundle {
  ReadoutParams pretrained;
  std::vector<ReadoutParams> fold_models;
  std::map<std::string, int> folds;
  CenterBiasPrior prior;
  std::vector<int> feature_channels;  // applied before the readout; empty: all
  std::vector<TrainLogRow> train_log;
  std::vector<EpochHistory> fold_histories;  // in-memory only

  int fold_count() const { return static_cast<int>(fold_models.size()); }
};

// One training run per fold, each starting from `pretrained` and stopping on
// its held-out fold. Samples are keyed by image id.
ModelBundle finetune_cv(const std::map<std::string, ImageSample>& dataset, const ReadoutParams& pretrained,
                        const CenterBiasPrior& prior, const TrainConfig& cfg, int k);

struct PredictMode {
  enum class Kind { kMixture, kLeaveOut, kSingle };
  Kind kind = Kind::kMixture;
  int index = 0;

  static PredictMode mixture() { return {Kind::kMixture, 0}; }
  static PredictMode leave_out() { return {Kind::kLeaveOut, 0}; }
  static PredictMode single(int i) { return {Kind::kSingle, i}; }
};

// Mixture averages the fold densities; leave-out uses the model whose
// training folds excluded the image. Without the center bias a uniform prior
// is used.
DensityMap predict(const ModelBundle& bundle, const FeatureStack& image, PredictMode mode, bool with_center_bias);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& dir);
ModelBundle load_bundle(const std::filesystem::path& dir);

}  // namespace gazekit
