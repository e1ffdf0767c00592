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

#include "gazekit/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "binary_io.hpp"

namespace gazekit {

namespace {

constexpr char kFmapMagic[4] = {'F', 'M', 'A', 'P'};
constexpr std::uint32_t kFmapVersion = 1;
constexpr std::uint64_t kMaxFmapValues = std::uint64_t{1} << 34;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    auto first = field.find_first_not_of(" \t");
    auto last = field.find_last_not_of(" \t\r");
    fields.push_back(first == std::string::npos ? std::string() : field.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s, const std::string& what, std::size_t line_no) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw FormatError("line " + std::to_string(line_no) + ": cannot parse " + what + " '" + s + "'");
  }
  return value;
}

}  // namespace

FeatureStack::FeatureStack(std::string id, int h, int w, Values v)
    : image_id(std::move(id)), height(h), width(w), values(std::move(v)) {
  if (height <= 0 || width <= 0 || values.rows() <= 0) {
    throw ValidationError("feature stack '" + image_id + "' must have positive C, H, W");
  }
  if (values.cols() != static_cast<Eigen::Index>(height) * width) {
    throw ValidationError("feature stack '" + image_id + "' has " + std::to_string(values.cols()) +
                          " pixels per channel, expected H*W = " + std::to_string(height * width));
  }
}

Grid FeatureStack::channel(int c) const {
  Grid g(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) g(y, x) = values(c, y * width + x);
  return g;
}

void FeatureStack::check_finite() const {
  for (Eigen::Index c = 0; c < values.rows(); ++c) {
    if (!values.row(c).allFinite()) {
      throw ValidationError("feature stack '" + image_id + "' has a non-finite value in channel " +
                            std::to_string(c));
    }
  }
}

FeatureStack FeatureStack::select_channels(const std::vector<int>& keep) const {
  if (keep.empty()) throw ValidationError("channel subset is empty");
  Values picked(static_cast<Eigen::Index>(keep.size()), values.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i] < 0 || keep[i] >= channels()) {
      throw ValidationError("channel " + std::to_string(keep[i]) + " out of range for '" + image_id +
                            "' with " + std::to_string(channels()) + " channels");
    }
    picked.row(static_cast<Eigen::Index>(i)) = values.row(keep[i]);
  }
  return FeatureStack(image_id, height, width, std::move(picked));
}

FixationDataset::FixationDataset(std::vector<FixationRecord> records, std::map<std::string, GridShape> grids)
    : records_(std::move(records)), grids_(std::move(grids)) {
  for (const auto& r : records_) {
    auto g = grids_.find(r.image_id);
    if (g != grids_.end() && (r.x < 0 || r.y < 0 || r.x >= g->second.width || r.y >= g->second.height)) {
      throw ValidationError("fixation (" + std::to_string(r.x) + ", " + std::to_string(r.y) +
                            ") outside the grid of '" + r.image_id + "'");
    }
    by_image_[r.image_id].push_back({r.x, r.y});
    by_subject_[r.image_id][r.subject_id].push_back({r.x, r.y});
  }
  for (const auto& [id, _] : by_image_) image_ids_.push_back(id);
}

const std::vector<GridPoint>& FixationDataset::fixations(const std::string& image_id) const {
  static const std::vector<GridPoint> kEmpty;
  auto it = by_image_.find(image_id);
  return it == by_image_.end() ? kEmpty : it->second;
}

const std::map<std::string, std::vector<GridPoint>>& FixationDataset::subjects(
    const std::string& image_id) const {
  static const std::map<std::string, std::vector<GridPoint>> kEmpty;
  auto it = by_subject_.find(image_id);
  return it == by_subject_.end() ? kEmpty : it->second;
}

GridShape FixationDataset::grid(const std::string& image_id) const {
  auto it = grids_.find(image_id);
  if (it == grids_.end()) throw ValidationError("no grid known for image '" + image_id + "'");
  return it->second;
}

FixationDataset FixationDataset::subset(const std::vector<std::string>& image_ids) const {
  std::set<std::string> keep(image_ids.begin(), image_ids.end());
  std::vector<FixationRecord> picked;
  for (const auto& r : records_)
    if (keep.count(r.image_id)) picked.push_back(r);
  std::map<std::string, GridShape> grids;
  for (const auto& id : keep) {
    auto it = grids_.find(id);
    if (it != grids_.end()) grids.emplace(id, it->second);
  }
  return FixationDataset(std::move(picked), std::move(grids));
}

void check_density(const DensityMap& density, double tol) {
  if (density.p.size() == 0) throw ValidationError("density '" + density.image_id + "' is empty");
  if (!density.p.allFinite() || (density.p.array() < 0.0).any()) {
    throw ValidationError("density '" + density.image_id + "' has negative or non-finite cells");
  }
  const double total = density.p.sum();
  if (std::abs(total - 1.0) > tol) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "density '" << density.image_id << "' sums to " << total;
    throw ValidationError(msg.str());
  }
}

void save_feature_stack(const FeatureStack& stack, const std::filesystem::path& path) {
  stack.check_finite();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(kFmapMagic, 4);
  detail::write_le<std::uint32_t>(out, kFmapVersion);
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(stack.channels()));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(stack.height));
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(stack.width));
  const char reserved[28] = {};
  out.write(reserved, sizeof reserved);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(stack.values.data()),
              static_cast<std::streamsize>(stack.values.size() * sizeof(float)));
  } else {
    for (Eigen::Index i = 0; i < stack.values.size(); ++i) detail::write_le(out, stack.values.data()[i]);
  }
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

namespace {

FmapHeader read_header(std::istream& in, const std::string& name) {
  char magic[4];
  if (!in.read(magic, 4)) throw FormatError("'" + name + "': truncated FMAP header");
  if (!std::equal(magic, magic + 4, kFmapMagic)) throw FormatError("'" + name + "': bad magic, not an FMAP file");
  const auto version = detail::read_le<std::uint32_t>(in, "FMAP version");
  if (version != kFmapVersion) {
    throw FormatError("'" + name + "': unsupported FMAP version " + std::to_string(version));
  }
  const auto c = detail::read_le<std::uint32_t>(in, "FMAP channels");
  const auto h = detail::read_le<std::uint32_t>(in, "FMAP height");
  const auto w = detail::read_le<std::uint32_t>(in, "FMAP width");
  char reserved[28];
  if (!in.read(reserved, sizeof reserved)) throw FormatError("'" + name + "': truncated FMAP header");
  if (c == 0 || h == 0 || w == 0) throw FormatError("'" + name + "': zero dimension in FMAP header");
  const std::uint64_t limit = std::numeric_limits<int>::max();
  if (c > limit || h > limit || w > limit || std::uint64_t{h} * w > limit ||
      std::uint64_t{c} * h * w > kMaxFmapValues) {
    throw FormatError("'" + name + "': FMAP dimensions overflow");
  }
  return {static_cast<int>(c), static_cast<int>(h), static_cast<int>(w)};
}

}  // namespace

FmapHeader read_fmap_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  return read_header(in, path.string());
}

FeatureStack load_feature_stack(const std::filesystem::path& path, std::string image_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  const FmapHeader hdr = read_header(in, path.string());
  if (image_id.empty()) image_id = path.stem().string();

  FeatureStack::Values values(hdr.channels, static_cast<Eigen::Index>(hdr.height) * hdr.width);
  const auto bytes = static_cast<std::streamsize>(values.size() * sizeof(float));
  if (!in.read(reinterpret_cast<char*>(values.data()), bytes)) {
    throw FormatError("'" + path.string() + "': payload truncated, expected " + std::to_string(bytes) +
                      " bytes for C*H*W = " + std::to_string(values.size()) + " values");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("'" + path.string() + "': trailing bytes after FMAP payload");
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      auto* b = reinterpret_cast<char*>(values.data() + i);
      std::reverse(b, b + sizeof(float));
    }
  }
  FeatureStack stack(std::move(image_id), hdr.height, hdr.width, std::move(values));
  stack.check_finite();
  return stack;
}

std::optional<GridPoint> map_fixation_to_grid(double x_img, double y_img, int img_w, int img_h, int grid_w,
                                              int grid_h) {
  if (img_w <= 0 || img_h <= 0 || grid_w <= 0 || grid_h <= 0) return std::nullopt;
  const double gx = std::floor(x_img * grid_w / img_w);
  const double gy = std::floor(y_img * grid_h / img_h);
  if (!(gx >= 0.0 && gx < grid_w && gy >= 0.0 && gy < grid_h)) return std::nullopt;
  return GridPoint{static_cast<int>(gx), static_cast<int>(gy)};
}

FeatureStore::FeatureStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!std::filesystem::is_directory(dir_)) {
    throw ValidationError("feature directory '" + dir_.string() + "' does not exist");
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".fmap") continue;
    headers_.emplace(entry.path().stem().string(), read_fmap_header(entry.path()));
  }
  for (const auto& [id, _] : headers_) ids_.push_back(id);
}

std::optional<GridShape> FeatureStore::grid(const std::string& image_id) const {
  auto it = headers_.find(image_id);
  if (it == headers_.end()) return std::nullopt;
  return GridShape{it->second.height, it->second.width};
}

int FeatureStore::channels(const std::string& image_id) const {
  auto it = headers_.find(image_id);
  if (it == headers_.end()) throw ValidationError("no features for image '" + image_id + "'");
  return it->second.channels;
}

FeatureStack FeatureStore::load(const std::string& image_id) const {
  if (!contains(image_id)) throw ValidationError("no features for image '" + image_id + "'");
  return load_feature_stack(dir_ / (image_id + ".fmap"), image_id);
}

FixationLoadResult load_fixations_csv(const std::filesystem::path& path, const GridLookup& grid_of) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open fixation file '" + path.string() + "'");

  static const std::vector<std::string> kHeader = {"image_id", "subject_id", "x", "y", "img_width", "img_height"};
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (!have_header && std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (split_csv_line(line) != kHeader) {
      throw FormatError("'" + path.string() + "': expected header image_id,subject_id,x,y,img_width,img_height");
    }
    have_header = true;
  }
  if (!have_header) throw ValidationError("'" + path.string() + "' is empty");

  FixationLoadResult result;
  std::vector<FixationRecord> records;
  std::map<std::string, GridShape> grids;
  std::set<std::string> dangling;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv_line(line);
    if (f.size() != kHeader.size()) {
      throw FormatError("'" + path.string() + "' line " + std::to_string(line_no) + ": expected 6 fields");
    }
    if (f[0].empty()) throw FormatError("line " + std::to_string(line_no) + ": empty image_id");
    const double x = parse_double(f[2], "x", line_no);
    const double y = parse_double(f[3], "y", line_no);
    const double iw = parse_double(f[4], "img_width", line_no);
    const double ih = parse_double(f[5], "img_height", line_no);
    if (iw <= 0 || ih <= 0 || iw != std::floor(iw) || ih != std::floor(ih)) {
      throw FormatError("line " + std::to_string(line_no) + ": image dimensions must be positive integers");
    }

    std::optional<GridShape> grid = grid_of(f[0]);
    if (!grid) {
      dangling.insert(f[0]);
      continue;
    }
    auto cell = map_fixation_to_grid(x, y, static_cast<int>(iw), static_cast<int>(ih), grid->width, grid->height);
    if (!cell) {
      ++result.out_of_bounds;
      continue;
    }
    grids.emplace(f[0], *grid);
    records.push_back({f[0], f[1], cell->x, cell->y});
  }
  result.dataset = FixationDataset(std::move(records), std::move(grids));
  result.dangling.assign(dangling.begin(), dangling.end());
  return result;
}

std::vector<std::string> dangling_image_ids(const FixationDataset& dataset, const FeatureStore& store) {
  std::vector<std::string> missing;
  for (const auto& id : dataset.image_ids())
    if (!store.contains(id)) missing.push_back(id);
  return missing;
}

}  // namespace gazekit
