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

#ifndef FEDSIM_PARAM_TREE_HPP_
#define FEDSIM_PARAM_TREE_HPP_

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fedsim/tensor.hpp"

namespace fedsim {

// Named, ordered collection of tensors (model weights, optimizer state,
// gradients). Iteration order is insertion order, which fixes the layout of
// the flattened vector used for clipping, quantization and aggregation.
class ParamTree {
 public:
  struct Segment {
    std::string name;
    Index offset;
    Index count;
  };

  void add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw Error("ParamTree: duplicate name '" + name + "'");
    index_[name] = items_.size();
    items_.emplace_back(name, std::move(t));
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const Tensor& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("ParamTree: no tensor named '" + name + "'");
    return items_[it->second].second;
  }
  Tensor& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("ParamTree: no tensor named '" + name + "'");
    return items_[it->second].second;
  }

  std::size_t size() const { return items_.size(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }

  Index flat_size() const {
    Index n = 0;
    for (const auto& [name, t] : items_) n += t.size();
    return n;
  }

  std::vector<Segment> layout() const {
    std::vector<Segment> segs;
    segs.reserve(items_.size());
    Index off = 0;
    for (const auto& [name, t] : items_) {
      segs.push_back({name, off, t.size()});
      off += t.size();
    }
    return segs;
  }

  Eigen::VectorXd flatten() const {
    Eigen::VectorXd flat(flat_size());
    Index off = 0;
    for (const auto& [name, t] : items_) {
      flat.segment(off, t.size()) = t.data;
      off += t.size();
    }
    return flat;
  }

  // Writes a flat vector back into the named tensors; shapes are unchanged.
  void unflatten(const Eigen::VectorXd& flat) {
    if (flat.size() != flat_size()) throw ShapeError("ParamTree::unflatten: length mismatch");
    Index off = 0;
    for (auto& [name, t] : items_) {
      t.data = flat.segment(off, t.size());
      off += t.size();
    }
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Gradients mirror the ParamTree they were computed against: same names,
// same order, same shapes.
using GradMap = ParamTree;

}  // namespace fedsim

#endif  // FEDSIM_PARAM_TREE_HPP_
