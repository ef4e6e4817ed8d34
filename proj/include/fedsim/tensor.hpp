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

#ifndef FEDSIM_TENSOR_HPP_
#define FEDSIM_TENSOR_HPP_

#include <Eigen/Dense>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedsim {

using Index = std::int64_t;
using Shape = std::vector<Index>;

// Row-major matrix view type; all flat tensor storage is row-major.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

inline Index numel(const Shape& s) {
  Index n = 1;
  for (Index e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s);

// Dense tensor of doubles: a shape plus flat row-major storage. Rank 0..2 is
// what the models need. `node` is set when the tensor was produced by a Graph.
struct Tensor {
  Shape shape;
  Eigen::VectorXd data;
  std::optional<std::int32_t> node;

  Tensor() = default;
  Tensor(Shape s, Eigen::VectorXd d) : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size()) throw ShapeError("tensor data length does not match shape");
  }

  static Tensor zeros(Shape s) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(numel(s));
    return Tensor(std::move(s), std::move(d));
  }
  static Tensor full(Shape s, double v) {
    Eigen::VectorXd d = Eigen::VectorXd::Constant(numel(s), v);
    return Tensor(std::move(s), std::move(d));
  }
  static Tensor scalar(double v) { return full({}, v); }
  static Tensor row_vector(std::initializer_list<double> xs) {
    Eigen::VectorXd d(static_cast<Index>(xs.size()));
    Index i = 0;
    for (double x : xs) d[i++] = x;
    return Tensor({static_cast<Index>(xs.size())}, std::move(d));
  }
  static Tensor from_vec(const Eigen::VectorXd& v) { return Tensor({v.size()}, v); }
  static Tensor from_mat(const RowMat& m) {
    Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    return Tensor({m.rows(), m.cols()}, std::move(d));
  }

  Index rank() const { return static_cast<Index>(shape.size()); }
  Index size() const { return data.size(); }
  Index rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? shape[0] : 1); }
  Index cols() const { return rank() == 2 ? shape[1] : 1; }

  double scalar_value() const {
    if (rank() != 0) throw ShapeError("scalar_value on rank-" + std::to_string(rank()) + " tensor");
    return data[0];
  }

  MatMap mat() { return MatMap(data.data(), rows(), cols()); }
  ConstMatMap mat() const { return ConstMatMap(data.data(), rows(), cols()); }

  bool all_finite() const { return data.allFinite(); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace fedsim

#endif  // FEDSIM_TENSOR_HPP_
