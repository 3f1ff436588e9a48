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
#include "mglp/tensor.hpp"

#include <cmath>
#include <sstream>

namespace mglp {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ValidationError(std::string(op) + ": shape mismatch " +
                          a.shape_str() + " vs " + b.shape_str());
  }
}

void require_rank(const Tensor& t, std::size_t r, const char* op) {
  if (t.rank() != r) {
    throw ValidationError(std::string(op) + ": expected rank " +
                          std::to_string(r) + ", got " + t.shape_str());
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 3) {
    throw ValidationError("Tensor: rank must be 1..3, got rank " +
                          std::to_string(shape_.size()));
  }
  std::size_t n = 1;
  for (std::size_t d : shape_) {
    if (d == 0) throw ValidationError("Tensor: zero-sized dimension");
    n *= d;
  }
  data_.assign(n, 0.0);
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ", ";
    os << shape_[i];
  }
  os << "]";
  return os.str();
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c = a;
  double* cd = c.data();
  const double* bd = b.data();
  for (std::size_t i = 0; i < c.size(); ++i) cd[i] += bd[i];
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor c = a;
  double* cd = c.data();
  const double* bd = b.data();
  for (std::size_t i = 0; i < c.size(); ++i) cd[i] -= bd[i];
  return c;
}

Tensor scale(const Tensor& a, double s) {
  Tensor c = a;
  double* cd = c.data();
  for (std::size_t i = 0; i < c.size(); ++i) cd[i] *= s;
  return c;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor c = a;
  double* cd = c.data();
  const double* bd = b.data();
  for (std::size_t i = 0; i < c.size(); ++i) cd[i] *= bd[i];
  return c;
}

void add_inplace(Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add_inplace");
  double* ad = a.data();
  const double* bd = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) ad[i] += bd[i];
}

void axpy(Tensor& a, double s, const Tensor& b) {
  require_same_shape(a, b, "axpy");
  double* ad = a.data();
  const double* bd = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) ad[i] += s * bd[i];
}

void fill(Tensor& a, double v) {
  double* ad = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) ad[i] = v;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  const double* ad = a.data();
  const double* bd = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += ad[i] * bd[i];
  return s;
}

double norm_sq(const Tensor& a) {
  const double* ad = a.data();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += ad[i] * ad[i];
  return s;
}

double l2_norm(const Tensor& a) { return std::sqrt(norm_sq(a)); }

bool all_finite(const Tensor& a) {
  const double* ad = a.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(ad[i])) return false;
  }
  return true;
}

void require_finite(const Tensor& a, const char* where) {
  if (!all_finite(a)) {
    throw ContractViolation(std::string(where) + ": non-finite tensor entry");
  }
}

Tensor slice0(const Tensor& t, std::size_t i) {
  require_rank(t, 3, "slice0");
  if (i >= t.dim(0)) throw ValidationError("slice0: index out of range");
  Tensor out({t.dim(1), t.dim(2)});
  const std::size_t n = t.dim(1) * t.dim(2);
  const double* src = t.data() + i * n;
  double* dst = out.data();
  for (std::size_t k = 0; k < n; ++k) dst[k] = src[k];
  return out;
}

void set_slice0(Tensor& t, std::size_t i, const Tensor& v) {
  require_rank(t, 3, "set_slice0");
  require_rank(v, 2, "set_slice0");
  if (i >= t.dim(0) || v.dim(0) != t.dim(1) || v.dim(1) != t.dim(2)) {
    throw ValidationError("set_slice0: shape mismatch " + t.shape_str() +
                          " slice vs " + v.shape_str());
  }
  const std::size_t n = v.size();
  double* dst = t.data() + i * n;
  const double* src = v.data();
  for (std::size_t k = 0; k < n; ++k) dst[k] = src[k];
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ValidationError("matmul: inner dimension mismatch " + a.shape_str() +
                          " x " + b.shape_str());
  }
  const std::size_t m = a.dim(0), p = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  // i-k-j loop: the j updates stream, while each c(i,j) still sees its k terms
  // in ascending order (bit-identical to the naive i-j-k loop).
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    const double* arow = a.data() + i * p;
    for (std::size_t k = 0; k < p; ++k) {
      const double aik = arow[k];
      const double* brow = b.data() + k * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t(j, i) = a(i, j);
  return t;
}

Tensor linear(const Tensor& x, const LinearParams& p) {
  require_rank(x, 2, "linear");
  require_rank(p.w, 2, "linear");
  require_rank(p.b, 1, "linear");
  if (x.dim(1) != p.w.dim(1) || p.w.dim(0) != p.b.dim(0)) {
    throw ValidationError("linear: shape mismatch x" + x.shape_str() + " w" +
                          p.w.shape_str() + " b" + p.b.shape_str());
  }
  Tensor y = matmul(x, transpose(p.w));
  const std::size_t s = y.dim(0), out = y.dim(1);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < out; ++j) y(i, j) += p.b(j);
  return y;
}

LinearVjp vjp_linear(const Tensor& x, const LinearParams& p,
                     const Tensor& upstream) {
  if (upstream.rank() != 2 || upstream.dim(0) != x.dim(0) ||
      upstream.dim(1) != p.w.dim(0)) {
    throw ValidationError("vjp_linear: upstream shape " + upstream.shape_str() +
                          " does not match x" + x.shape_str() + " w" +
                          p.w.shape_str());
  }
  LinearVjp out;
  out.dx = matmul(upstream, p.w);
  out.dw = matmul(transpose(upstream), x);
  out.db = Tensor({p.b.dim(0)});
  // Row-ascending accumulation; order is part of the determinism contract.
  for (std::size_t i = 0; i < upstream.dim(0); ++i)
    for (std::size_t j = 0; j < upstream.dim(1); ++j)
      out.db(j) += upstream(i, j);
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require_rank(x, 2, "layer_norm");
  const std::size_t s = x.dim(0), d = x.dim(1);
  if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 ||
      bias.dim(0) != d) {
    throw ValidationError("layer_norm: gain/bias shape mismatch for x" +
                          x.shape_str());
  }
  Tensor y({s, d});
  for (std::size_t i = 0; i < s; ++i) {
    const double* row = x.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + eps);
    double* yrow = y.data() + i * d;
    for (std::size_t j = 0; j < d; ++j)
      yrow[j] = gain(j) * ((row[j] - mean) * rstd) + bias(j);
  }
  return y;
}

LayerNormVjp vjp_layer_norm(const Tensor& x, const Tensor& gain, double eps,
                            const Tensor& upstream) {
  require_same_shape(x, upstream, "vjp_layer_norm");
  const std::size_t s = x.dim(0), d = x.dim(1);
  LayerNormVjp out;
  out.dx = Tensor({s, d});
  out.dgain = Tensor({d});
  out.dbias = Tensor({d});
  const double dn = static_cast<double>(d);
  for (std::size_t i = 0; i < s; ++i) {
    const double* row = x.data() + i * d;
    const double* u = upstream.data() + i * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= dn;
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= dn;
    const double rstd = 1.0 / std::sqrt(var + eps);
    // dxhat = u * gain; dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat))
    double sum1 = 0.0, sum2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double xhat = (row[j] - mean) * rstd;
      const double dxhat = u[j] * gain(j);
      sum1 += dxhat;
      sum2 += dxhat * xhat;
    }
    double* dxrow = out.dx.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      const double xhat = (row[j] - mean) * rstd;
      const double dxhat = u[j] * gain(j);
      dxrow[j] = rstd * (dxhat - sum1 / dn - xhat * (sum2 / dn));
      out.dgain(j) += u[j] * xhat;
      out.dbias(j) += u[j];
    }
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t s = x.dim(0), d = x.dim(1);
  Tensor y({s, d});
  for (std::size_t i = 0; i < s; ++i) {
    const double* row = x.data() + i * d;
    double m = row[0];
    for (std::size_t j = 1; j < d; ++j) m = row[j] > m ? row[j] : m;
    double sum = 0.0;
    double* yrow = y.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      yrow[j] = std::exp(row[j] - m);
      sum += yrow[j];
    }
    for (std::size_t j = 0; j < d; ++j) yrow[j] /= sum;
  }
  return y;
}

Tensor vjp_softmax_rows(const Tensor& y, const Tensor& upstream) {
  require_same_shape(y, upstream, "vjp_softmax_rows");
  const std::size_t s = y.dim(0), d = y.dim(1);
  Tensor dx({s, d});
  for (std::size_t i = 0; i < s; ++i) {
    const double* yrow = y.data() + i * d;
    const double* u = upstream.data() + i * d;
    double t = 0.0;
    for (std::size_t j = 0; j < d; ++j) t += u[j] * yrow[j];
    double* dxrow = dx.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) dxrow[j] = yrow[j] * (u[j] - t);
  }
  return dx;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& x) {
  Tensor y = x;
  double* yd = y.data();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = yd[i];
    const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
    yd[i] = 0.5 * v * (1.0 + t);
  }
  return y;
}

Tensor vjp_gelu(const Tensor& x, const Tensor& upstream) {
  require_same_shape(x, upstream, "vjp_gelu");
  Tensor dx = x;
  double* dxd = dx.data();
  const double* ud = upstream.data();
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const double v = dxd[i];
    const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
    const double dtanh = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    dxd[i] = ud[i] * (0.5 * (1.0 + t) + 0.5 * v * dtanh);
  }
  return dx;
}

}  // namespace mglp
