// Copyright 2026 The MLMME Authors.
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

#ifndef MLMME_NUMERICS_H_
#define MLMME_NUMERICS_H_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "mlmme/errors.h"

namespace mlmme {

// Dense row-major matrix. Column vectors (biases) are stored as n x 1.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  T operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  bool operator==(const Matrix& o) const = default;

  // Element-type conversion (float <-> double).
  template <typename U>
  Matrix<U> cast() const {
    Matrix<U> out(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = U(data_[i]);
    return out;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

std::string shape_string(std::size_t rows, std::size_t cols);

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw InvalidArgument("dot: length mismatch");
  T sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

template <typename T>
T l2_norm(std::span<const T> a) {
  return std::sqrt(dot(a, a));
}

template <typename T>
bool all_finite(std::span<const T> a) {
  for (T v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

// y (+)= A x
template <typename T>
void gemv(const Matrix<T>& a, std::span<const T> x, std::span<T> y,
          bool accumulate = false) {
  if (x.size() != a.cols() || y.size() != a.rows())
    throw InvalidArgument("gemv: " + shape_string(a.rows(), a.cols()) +
                          " matrix with x[" + std::to_string(x.size()) +
                          "], y[" + std::to_string(y.size()) + "]");
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const T* row = a.row(r).data();
    T sum = 0;
    for (std::size_t c = 0; c < x.size(); ++c) sum += row[c] * x[c];
    y[r] = accumulate ? y[r] + sum : sum;
  }
}

// y (+)= A^T x
template <typename T>
void gemv_transposed(const Matrix<T>& a, std::span<const T> x, std::span<T> y,
                     bool accumulate = false) {
  if (x.size() != a.rows() || y.size() != a.cols())
    throw InvalidArgument("gemv_transposed: " +
                          shape_string(a.rows(), a.cols()) + " matrix with x[" +
                          std::to_string(x.size()) + "], y[" +
                          std::to_string(y.size()) + "]");
  if (!accumulate) std::fill(y.begin(), y.end(), T(0));
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const T* row = a.row(r).data();
    const T xr = x[r];
    if (xr == T(0)) continue;
    for (std::size_t c = 0; c < y.size(); ++c) y[c] += row[c] * xr;
  }
}

// A += scale * x y^T
template <typename T>
void add_outer(Matrix<T>& a, std::span<const T> x, std::span<const T> y,
               T scale = T(1)) {
  if (x.size() != a.rows() || y.size() != a.cols())
    throw InvalidArgument("add_outer: shape mismatch");
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const T xr = scale * x[r];
    if (xr == T(0)) continue;
    T* row = a.row(r).data();
    for (std::size_t c = 0; c < y.size(); ++c) row[c] += xr * y[c];
  }
}

// a += scale * b
template <typename T>
void axpy(std::span<T> a, std::type_identity_t<std::span<const T>> b,
          std::type_identity_t<T> scale = T(1)) {
  if (a.size() != b.size()) throw InvalidArgument("axpy: length mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
}

// Scales `v` to unit L2 norm in place and returns the original norm.
// Throws NumericalError on a zero vector.
template <typename T>
T normalize_in_place(std::span<T> v) {
  const T norm = l2_norm(std::span<const T>(v));
  if (!(norm > T(0)) || !std::isfinite(norm))
    throw NumericalError("cannot normalize a zero or non-finite vector");
  for (T& x : v) x /= norm;
  return norm;
}

// Backward of y = u / |u| given y, |u| and dL/dy. Returns dL/du.
template <typename T>
std::vector<T> normalize_backward(std::span<const T> y, T norm,
                                  std::span<const T> grad_y) {
  const T proj = dot(y, grad_y);
  std::vector<T> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    out[i] = (grad_y[i] - y[i] * proj) / norm;
  return out;
}

// Deterministic random stream. Identical seeds give identical draws on one
// platform (libstdc++ distributions are not portable across vendors).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return engine_; }

  double normal(double mean, double stddev);
  double uniform();  // [0, 1)
  std::size_t uniform_index(std::size_t n);  // [0, n)

  // Mixes a seed with stream coordinates (epoch, batch, ...) into a new seed.
  static std::uint64_t derive(std::uint64_t seed,
                              std::initializer_list<std::uint64_t> keys);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

template <typename T>
Matrix<T> gaussian_init(std::size_t rows, std::size_t cols, double stddev,
                        Rng& rng);

// Random orthogonal n x n matrix: QR of a Gaussian sample with the signs of
// R's diagonal folded into Q, which makes the factorization unique.
template <typename T>
Matrix<T> orthogonal_init(std::size_t n, Rng& rng);

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  Matrix<T> first_moment;
  Matrix<T> second_moment;
  std::uint64_t timestep = 0;
  AdamConfig config;

  AdamState() = default;
  explicit AdamState(AdamConfig c) : config(c) {}
};

// Bias-corrected Adam update. A fresh state (empty moments) is sized to the
// parameter on first use.
template <typename T>
void adam_step(Matrix<T>& param, const Matrix<T>& grad, AdamState<T>& state);

// Inverted dropout. In training mode each entry is zeroed with probability
// p and survivors are scaled by 1/(1-p); inference mode is the identity.
// If `mask` is given it receives the per-entry multiplier.
template <typename T>
std::vector<T> dropout_apply(std::span<const T> v, double p, bool training,
                             Rng& rng, std::vector<T>* mask = nullptr);

struct GradcheckParam {
  std::string name;
  Matrix<double>* value;
  const Matrix<double>* analytic;
};

struct GradcheckReport {
  double max_relative_error = 0;
  // Worst error per parameter, in the order given.
  std::vector<std::pair<std::string, double>> per_param;
};

// Compares analytic gradients against central differences
// (f(x+h) - f(x-h)) / 2h entry by entry. The relative error of an entry is
// |a - n| / max(|a|, |n|, 1e-8). `loss` is re-evaluated at each probe and
// must not touch the analytic buffers' contents.
GradcheckReport gradcheck(const std::function<double()>& loss,
                          std::span<const GradcheckParam> params,
                          double h = 1e-5);

}  // namespace mlmme

#endif  // MLMME_NUMERICS_H_
