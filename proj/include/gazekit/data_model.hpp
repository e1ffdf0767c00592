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

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gazekit/types.hpp"

namespace gazekit {

/// Frozen deep features of one image: C channels on an H x W grid.
/// `values` is C x (H*W), each row a channel in row-major pixel order, which
/// is also the FMAP payload order.
struct FeatureStack {
  using Values = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  std::string image_id;
  int height = 0;
  int width = 0;
  Values values;

  FeatureStack() = default;
  FeatureStack(std::string id, int height, int width, Values values);

  int channels() const { return static_cast<int>(values.rows()); }
  GridShape shape() const { return {height, width}; }

  // Channel c viewed as an H x W grid.
  Grid channel(int c) const;

  // Throws ValidationError naming the first channel holding a NaN/Inf.
  void check_finite() const;

  // Keeps only the listed channels, in the given order.
  FeatureStack select_channels(const std::vector<int>& keep) const;
};

struct FixationRecord {
  std::string image_id;
  std::string subject_id;
  int x = 0;
  int y = 0;
};

/// Fixations grouped by image and subject. Immutable after construction.
class FixationDataset {
 public:
  FixationDataset() = default;
  FixationDataset(std::vector<FixationRecord> records, std::map<std::string, GridShape> grids);

  const std::vector<FixationRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  // Sorted, unique image ids.
  const std::vector<std::string>& image_ids() const { return image_ids_; }
  bool contains(const std::string& image_id) const { return by_image_.count(image_id) > 0; }

  // Fixations of one image, in record order. Empty when unknown.
  const std::vector<GridPoint>& fixations(const std::string& image_id) const;
  // Subject id -> that subject's fixations on the image.
  const std::map<std::string, std::vector<GridPoint>>& subjects(const std::string& image_id) const;
  GridShape grid(const std::string& image_id) const;

  // Restriction to a set of images (records keep their order).
  FixationDataset subset(const std::vector<std::string>& image_ids) const;

 private:
  std::vector<FixationRecord> records_;
  std::map<std::string, GridShape> grids_;
  std::vector<std::string> image_ids_;
  std::map<std::string, std::vector<GridPoint>> by_image_;
  std::map<std::string, std::map<std::string, std::vector<GridPoint>>> by_subject_;
};

/// Probability distribution over the cells of one image's grid.
struct DensityMap {
  std::string image_id;
  Grid p;

  int height() const { return static_cast<int>(p.rows()); }
  int width() const { return static_cast<int>(p.cols()); }
  GridShape shape() const { return shape_of(p); }
};

// Throws ValidationError unless p >= 0 everywhere and |sum - 1| <= tol.
void check_density(const DensityMap& density, double tol = 1e-9);

// FMAP: "FMAP", u32 version = 1, u32 C, H, W, 28 zero bytes, then C*H*W
// little-endian binary32 values, channel-major then row-major.
inline constexpr std::size_t kFmapHeaderBytes = 48;

struct FmapHeader {
  int channels = 0;
  int height = 0;
  int width = 0;
};

void save_feature_stack(const FeatureStack& stack, const std::filesystem::path& path);

// The image id defaults to the file stem.
FeatureStack load_feature_stack(const std::filesystem::path& path, std::string image_id = {});

FmapHeader read_fmap_header(const std::filesystem::path& path);

// floor(x_img * grid_w / img_w), floor(y_img * grid_h / img_h); nullopt when
// the result falls outside the grid (never clamps).
std::optional<GridPoint> map_fixation_to_grid(double x_img, double y_img, int img_w, int img_h,
                                              int grid_w, int grid_h);

/// A directory of `<image_id>.fmap` files. Headers are read eagerly,
/// payloads on demand.
class FeatureStore {
 public:
  explicit FeatureStore(std::filesystem::path dir);

  const std::vector<std::string>& image_ids() const { return ids_; }
  bool contains(const std::string& image_id) const { return headers_.count(image_id) > 0; }
  std::optional<GridShape> grid(const std::string& image_id) const;
  int channels(const std::string& image_id) const;
  FeatureStack load(const std::string& image_id) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> ids_;
  std::map<std::string, FmapHeader> headers_;
};

using GridLookup = std::function<std::optional<GridShape>(const std::string& image_id)>;

struct FixationLoadResult {
  FixationDataset dataset;
  std::size_t out_of_bounds = 0;
  // Image ids in the CSV for which the lookup found no grid.
  std::vector<std::string> dangling;
};

// Reads `image_id,subject_id,x,y,img_width,img_height` and maps each row onto
// the grid returned by `grid_of`. Out-of-bounds fixations are dropped and counted.
FixationLoadResult load_fixations_csv(const std::filesystem::path& path, const GridLookup& grid_of);

// Image ids referenced by the dataset that the store cannot resolve.
std::vector<std::string> dangling_image_ids(const FixationDataset& dataset, const FeatureStore& store);

}  // namespace gazekit
