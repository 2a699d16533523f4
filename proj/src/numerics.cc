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

#include "mlmme/numerics.h"

#include <algorithm>
#include <cmath>

namespace mlmme {

std::string shape_string(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

double Rng::normal(double mean, double stddev) {
  std::normal_distribution<double> dist(mean, stddev);
  return dist(engine_);
}

double Rng::uniform() {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  return dist(engine_);
}

std::size_t Rng::uniform_index(std::size_t n) {
  if (n == 0) throw InvalidArgument("uniform_index: empty range");
  std::uniform_int_distribution<std::size_t> dist(0, n - 1);
  return dist(engine_);
}

namespace {

// splitmix64 finalizer.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t Rng::derive(std::uint64_t seed,
                          std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix(seed);
  for (std::uint64_t k : keys) h = mix(h ^ mix(k));
  return h;
}

template <typename T>
Matrix<T> gaussian_init(std::size_t rows, std::size_t cols, double stddev,
                        Rng& rng) {
  if (rows == 0 || cols == 0)
    throw InvalidArgument("gaussian_init: zero dimension " +
                          shape_string(rows, cols));
  if (!(stddev >= 0) || !std::isfinite(stddev))
    throw InvalidArgument("gaussian_init: stddev must be non-negative");
  Matrix<T> m(rows, cols);
  if (stddev == 0) return m;
  std::normal_distribution<double> dist(0.0, stddev);
  for (T& v : m.values()) v = T(dist(rng.engine()));
  return m;
}

template <typename T>
Matrix<T> orthogonal_init(std::size_t n, Rng& rng) {
  if (n == 0) throw InvalidArgument("orthogonal_init: n must be >= 1");
  // Modified Gram-Schmidt on the columns, done in double and repeated once
  // to restore orthogonality lost to rounding. Dividing by the positive
  // norm gives R a positive diagonal, i.e. the sign-corrected QR factor.
  Matrix<double> a = gaussian_init<double>(n, n, 1.0, rng);
  std::vector<double> col(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = a(i, j);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        double proj = 0;
        for (std::size_t i = 0; i < n; ++i) proj += a(i, k) * col[i];
        for (std::size_t i = 0; i < n; ++i) col[i] -= proj * a(i, k);
      }
    }
    double norm = 0;
    for (double v : col) norm += v * v;
    norm = std::sqrt(norm);
    if (!(norm > 1e-12))
      throw NumericalError("orthogonal_init: rank-deficient Gaussian sample");
    for (std::size_t i = 0; i < n; ++i) a(i, j) = col[i] / norm;
  }
  return a.cast<T>();
}

template <typename T>
void adam_step(Matrix<T>& param, const Matrix<T>& grad, AdamState<T>& state) {
  if (!param.same_shape(grad))
    throw InvalidArgument("adam_step: parameter " +
                          shape_string(param.rows(), param.cols()) +
                          " vs gradient " +
                          shape_string(grad.rows(), grad.cols()));
  if (state.first_moment.empty() && state.second_moment.empty()) {
    state.first_moment = Matrix<T>(param.rows(), param.cols());
    state.second_moment = Matrix<T>(param.rows(), param.cols());
  }
  if (!state.first_moment.same_shape(param) ||
      !state.second_moment.same_shape(param))
    throw InvalidArgument("adam_step: moment shape does not match parameter");

  const AdamConfig& c = state.config;
  state.timestep += 1;
  const double t = double(state.timestep);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  auto p = param.values();
  auto g = grad.values();
  auto m = state.first_moment.values();
  auto v = state.second_moment.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gi = g[i];
    const double mi = c.beta1 * double(m[i]) + (1.0 - c.beta1) * gi;
    const double vi = c.beta2 * double(v[i]) + (1.0 - c.beta2) * gi * gi;
    m[i] = T(mi);
    v[i] = T(vi);
    const double m_hat = mi / correction1;
    const double v_hat = vi / correction2;
    const double updated =
        double(p[i]) - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    if (!std::isfinite(updated))
      throw NumericalError("adam_step: non-finite parameter after update");
    p[i] = T(updated);
  }
}

template <typename T>
std::vector<T> dropout_apply(std::span<const T> v, double p, bool training,
                             Rng& rng, std::vector<T>* mask) {
  if (!(p >= 0.0) || p >= 1.0)
    throw InvalidArgument("dropout_apply: probability must lie in [0, 1)");
  std::vector<T> out(v.begin(), v.end());
  if (mask) mask->assign(v.size(), T(1));
  if (!training || p == 0.0) return out;
  const T scale = T(1.0 / (1.0 - p));
  std::bernoulli_distribution keep(1.0 - p);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T m = keep(rng.engine()) ? scale : T(0);
    out[i] *= m;
    if (mask) (*mask)[i] = m;
  }
  return out;
}

GradcheckReport gradcheck(const std::function<double()>& loss,
                          std::span<const GradcheckParam> params, double h) {
  if (!(h > 0)) throw InvalidArgument("gradcheck: step must be positive");
  GradcheckReport report;
  for (const GradcheckParam& p : params) {
    if (!p.value || !p.analytic || !p.value->same_shape(*p.analytic))
      throw InvalidArgument("gradcheck: parameter '" + p.name +
                            "' has no matching analytic gradient");
    double worst = 0;
    auto values = p.value->values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double plus = loss();
      values[i] = saved - h;
      const double minus = loss();
      values[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus))
        throw NumericalError("gradcheck: non-finite loss while probing '" +
                             p.name + "' entry " + std::to_string(i));
      const double numeric = (plus - minus) / (2 * h);
      const double analytic = (*p.analytic)[i];
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
    report.per_param.emplace_back(p.name, worst);
    report.max_relative_error = std::max(report.max_relative_error, worst);
  }
  return report;
}

#define MLMME_INSTANTIATE(T)                                                 \
  template Matrix<T> gaussian_init<T>(std::size_t, std::size_t, double,     \
                                      Rng&);                                 \
  template Matrix<T> orthogonal_init<T>(std::size_t, Rng&);                  \
  template void adam_step<T>(Matrix<T>&, const Matrix<T>&, AdamState<T>&);   \
  template std::vector<T> dropout_apply<T>(std::span<const T>, double, bool, \
                                           Rng&, std::vector<T>*);

MLMME_INSTANTIATE(float)
MLMME_INSTANTIATE(double)

#undef MLMME_INSTANTIATE

}  // namespace mlmme
