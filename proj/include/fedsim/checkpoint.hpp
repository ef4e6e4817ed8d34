// Copyright 2026 The fedsim Authors. All Rights Reserved.
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

#ifndef FEDSIM_CHECKPOINT_HPP_
#define FEDSIM_CHECKPOINT_HPP_

#include <cstdint>
#include <string>

#include "fedsim/param_tree.hpp"

namespace fedsim {

// Single-file checkpoint: a manifest of (name, shape, byte offset) entries
// followed by one contiguous little-endian float64 payload. Reloading
// reproduces every tensor bit-exactly.
struct CheckpointData {
  ParamTree tensors;
  std::uint64_t config_hash = 0;
  Index round = 0;
};

void save_checkpoint(const std::string& path, const ParamTree& tensors,
                     std::uint64_t config_hash, Index round);
CheckpointData load_checkpoint(const std::string& path);

// Verifies that every tensor in `expected` exists in the checkpoint with the
// same shape; the error names the first mismatched tensor.
void check_checkpoint_shapes(const CheckpointData& ckpt, const ParamTree& expected);

}  // namespace fedsim

#endif  // FEDSIM_CHECKPOINT_HPP_
