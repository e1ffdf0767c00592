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

#include <filesystem>
#include <utility>

namespace gazekit {

// Runs write(tmp) on `<target>.partial` and renames it onto `target` once
// write returns. If write throws, the `.partial` file is left behind.
template <typename WriteFn>
void write_atomically(const std::filesystem::path& target, WriteFn&& write) {
  std::filesystem::path partial = target;
  partial += ".partial";
  std::forward<WriteFn>(write)(partial);
  std::filesystem::rename(partial, target);
}

}  // namespace gazekit
