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

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gazekit {

// Grids are indexed (row, col) = (y, x). Row-major pixel index is y * W + x.
template <typename Scalar>
using GridT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Grid = GridT<double>;
using LevelGrid = GridT<std::uint8_t>;

struct GridShape {
  int height = 0;
  int width = 0;

  int cells() const { return height * width; }
  friend bool operator==(const GridShape&, const GridShape&) = default;
};

inline GridShape shape_of(const Grid& g) {
  return {static_cast<int>(g.rows()), static_cast<int>(g.cols())};
}

struct GridPoint {
  int x = 0;
  int y = 0;
  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid input or violated precondition. The CLI maps this to exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed file content.
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Non-finite values during optimization. The CLI maps this to exit code 3.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace gazekit
