/* Copyright 2026 The mglp Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef MGLP_TENSOR_HPP_
#define MGLP_TENSOR_HPP_

#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "mglp/errors.hpp"

namespace mglp {

// Dense row-major double tensor, rank 1..3. All arithmetic in this project is
// double precision with a fixed (left-to-right) reduction order; nothing here
// may reassociate sums, because bitwise reproducibility across worker counts
// and against reference loops is a feature, not an accident.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::initializer_list<std::size_t> shape)
      : Tensor(std::vector<std::size_t>(shape)) {}

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const {
    assert(i < shape_.size());
    return shape_[i];
  }
  const std::vector<std::size_t>& shape() const { return shape_; }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator()(std::size_t i) {
    assert(rank() == 1 && i < shape_[0]);
    return data_[i];
  }
  double operator()(std::size_t i) const {
    assert(rank() == 1 && i < shape_[0]);
    return data_[i];
  }
  double& operator()(std::size_t i, std::size_t j) {
    assert(rank() == 2 && i < shape_[0] && j < shape_[1]);
    return data_[i * shape_[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    assert(rank() == 2 && i < shape_[0] && j < shape_[1]);
    return data_[i * shape_[1] + j];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    assert(rank() == 3 && i < shape_[0] && j < shape_[1] && k < shape_[2]);
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    assert(rank() == 3 && i < shape_[0] && j < shape_[1] && k < shape_[2]);
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Weight [out, in] plus bias [out]; applied as x W^T + b.
struct LinearParams {
  Tensor w;
  Tensor b;
};

// ---- element-wise / vector-space ops ----------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor hadamard(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& a, const Tensor& b);
// a += s * b
void axpy(Tensor& a, double s, const Tensor& b);
void fill(Tensor& a, double v);

// Left-to-right reductions over the flat row-major layout.
double dot(const Tensor& a, const Tensor& b);
double norm_sq(const Tensor& a);
double l2_norm(const Tensor& a);

bool all_finite(const Tensor& a);
// Throws ContractViolation naming `where` if a non-finite entry is present.
void require_finite(const Tensor& a, const char* where);

// Rank-3 [b, s, d] <-> rank-2 [s, d] slicing (copies; slices are small here).
Tensor slice0(const Tensor& t, std::size_t i);
void set_slice0(Tensor& t, std::size_t i, const Tensor& v);

// ---- linear algebra ---------------------------------------------------------

// [m, p] x [p, n] -> [m, n]. Per output element the p-products accumulate in
// ascending k order, exactly as the textbook triple loop would.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// x [s, in] -> x w^T + b, [s, out].
Tensor linear(const Tensor& x, const LinearParams& p);
struct LinearVjp {
  Tensor dx;
  Tensor dw;
  Tensor db;
};
LinearVjp vjp_linear(const Tensor& x, const LinearParams& p,
                     const Tensor& upstream);

// ---- normalization / activations -------------------------------------------

// Row-wise mean/variance normalization over the last axis of a rank-2 input,
// biased variance, then gain/bias. eps guards the rsqrt.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps);
struct LayerNormVjp {
  Tensor dx;
  Tensor dgain;
  Tensor dbias;
};
LayerNormVjp vjp_layer_norm(const Tensor& x, const Tensor& gain, double eps,
                            const Tensor& upstream);

// Row-wise softmax of a rank-2 input, max-subtracted for stability.
Tensor softmax_rows(const Tensor& x);
// y must be the forward output for the same input.
Tensor vjp_softmax_rows(const Tensor& y, const Tensor& upstream);

// tanh-form gelu, applied element-wise to any rank.
Tensor gelu(const Tensor& x);
Tensor vjp_gelu(const Tensor& x, const Tensor& upstream);

}  // namespace mglp

#endif  // MGLP_TENSOR_HPP_
