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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gazekit/density.hpp"
#include "gazekit/kde.hpp"

namespace gazekit {

using DensitySet = std::map<std::string, DensityMap>;

// Natural-log likelihood summed over the fixations (-inf on a zero-density cell).
double log_likelihood_nats(const Grid& density, std::span<const GridPoint> fixations);

struct LogLikelihood {
  double bits_per_fixation = 0.0;
  std::size_t fixations = 0;
  // First image with a fixation on a zero-density cell, if any.
  std::optional<std::string> zero_density_image;
};

// (1/N) sum log2 p(x_i, y_i | I_i) over every fixation in the dataset.
LogLikelihood avg_log_likelihood(const DensitySet& model, const FixationDataset& fixations);

// Bits/fixation the model gains over the baseline on the same fixations.
double information_gain(const DensitySet& model, const DensitySet& baseline, const FixationDataset& fixations);

// 100 * ig_model / ig_gold. Undefined (ValidationError) unless ig_gold > 0.
double ig_explained(double ig_model, double ig_gold);
double ig_explained(const DensitySet& model, const DensitySet& gold, const DensitySet& baseline,
                    const FixationDataset& fixations);

// P(positive score > negative score) with ties counted 1/2.
double auc_from_scores(std::span<const double> positives, std::span<const double> negatives);

// Positives: distinct fixated cells. Negatives: every other cell.
double auc(const Grid& saliency, std::span<const GridPoint> fixations);

// Negatives: min(100 * positives, pool size) draws with replacement from the
// pool of other images' fixation locations.
double shuffled_auc(const Grid& saliency, std::span<const GridPoint> fixations, std::span<const GridPoint> pool,
                    std::uint64_t seed);

struct EvalRow {
  std::string image_id;
  std::size_t n_fixations = 0;
  double ll_model = 0.0;     // bits/fixation on this image
  double ll_baseline = 0.0;
  double ll_gold = 0.0;
  double ig_model = 0.0;     // ll_model - ll_baseline
  double ig_gold = 0.0;      // ll_gold - ll_baseline
  double auc = 0.0;
  double sauc = 0.0;
};

struct EvalSummary {
  std::size_t images = 0;
  std::size_t fixations = 0;
  double ll_model = 0.0;
  double ll_baseline = 0.0;
  double ll_gold = 0.0;
  double ig_model = 0.0;  // fixation-weighted mean of per-image IG
  double ig_gold = 0.0;
  std::optional<double> ig_explained;  // percent; empty when ig_gold <= 0
  double auc = 0.0;   // mean over images
  double sauc = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  EvalSummary summary;
};

// Aggregates per-image rows (fixation-weighted for likelihoods and IG).
EvalReport assemble_report(std::vector<EvalRow> rows);

struct ModelMaps {
  DensityMap with_center_bias;   // scored by log-likelihood and AUC
  Grid without_center_bias;      // scored by shuffled AUC
};

using ModelFn = std::function<ModelMaps(const std::string& image_id)>;
// Summed natural-log likelihood of the image's fixations under the gold model.
using GoldFn = std::function<double(const std::string& image_id)>;

EvalReport build_eval_report(const ModelFn& model, const FixationDataset& dataset, const CenterBiasPrior& baseline,
                             const GoldFn& gold, std::uint64_t seed = 0);
EvalReport build_eval_report(const ModelFn& model, const FixationDataset& dataset, const CenterBiasPrior& baseline,
                             const KdeModel& gold, std::uint64_t seed = 0);

// per_image.csv, summary.json and scatter.csv (image_id,ig_gold,ig_model).
void write_eval_report(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace gazekit
