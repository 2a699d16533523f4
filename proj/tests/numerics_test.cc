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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mlmme/errors.h"

namespace mlmme {
namespace {

TEST(GaussianInit, ZeroStddevGivesZeros) {
  Rng rng(1);
  Matrix<double> m = gaussian_init<double>(2, 2, 0.0, rng);
  for (double v : m.values()) EXPECT_EQ(v, 0.0);
}

TEST(GaussianInit, MomentsOverMillionDraws) {
  Rng rng(7);
  Matrix<double> m = gaussian_init<double>(1000, 1000, 0.01, rng);
  double sum = 0, sq = 0;
  for (double v : m.values()) sum += v;
  const double mean = sum / double(m.size());
  for (double v : m.values()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / double(m.size() - 1));
  EXPECT_NEAR(mean, 0.0, 0.001);
  EXPECT_NEAR(sd, 0.01, 0.001);
}

TEST(GaussianInit, SameSeedSameMatrix) {
  Rng a(5), b(5);
  EXPECT_EQ(gaussian_init<float>(7, 3, 0.1, a), gaussian_init<float>(7, 3, 0.1, b));
}

TEST(GaussianInit, RejectsBadArguments) {
  Rng rng(1);
  EXPECT_THROW(gaussian_init<float>(0, 3, 0.1, rng), InvalidArgument);
  EXPECT_THROW(gaussian_init<float>(3, 0, 0.1, rng), InvalidArgument);
  EXPECT_THROW(gaussian_init<float>(3, 3, -1.0, rng), InvalidArgument);
}

TEST(OrthogonalInit, OneByOneIsUnit) {
  Rng rng(2);
  Matrix<double> q = orthogonal_init<double>(1, rng);
  EXPECT_DOUBLE_EQ(std::abs(q(0, 0)), 1.0);
}

TEST(OrthogonalInit, QtQIsIdentity) {
  Rng rng(3);
  Matrix<double> q = orthogonal_init<double>(8, rng);
  double worst = 0;
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 8; ++k) s += q(k, i) * q(k, j);
      worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
    }
  EXPECT_LT(worst, 1e-10);
}

TEST(OrthogonalInit, RejectsZero) {
  Rng rng(3);
  EXPECT_THROW(orthogonal_init<double>(0, rng), InvalidArgument);
}

TEST(Adam, ZeroGradientLeavesParam) {
  Matrix<double> p(2, 2, 0.5), g(2, 2, 0.0);
  AdamState<double> s;
  adam_step(p, g, s);
  EXPECT_EQ(p, Matrix<double>(2, 2, 0.5));
  EXPECT_EQ(s.timestep, 1u);
}

TEST(Adam, FirstStepValue) {
  Matrix<double> p(1, 1, 0.0), g(1, 1, 1.0);
  AdamState<double> s(AdamConfig{0.001, 0.9, 0.999, 1e-8});
  adam_step(p, g, s);
  EXPECT_NEAR(p(0, 0), -0.001 * (1.0 / (1.0 + 1e-8)), 1e-18);
}

TEST(Adam, ConstantGradientKeepsDecreasing) {
  Matrix<float> p(1, 1, 0.0f), g(1, 1, 1.0f);
  AdamState<float> s(AdamConfig{0.01, 0.9, 0.999, 1e-8});
  adam_step(p, g, s);
  const float after_one = p(0, 0);
  adam_step(p, g, s);
  EXPECT_LT(after_one, 0.0f);
  EXPECT_LT(p(0, 0), after_one);
}

TEST(Adam, ShapeMismatch) {
  Matrix<float> p(2, 2), g(2, 3);
  AdamState<float> s;
  EXPECT_THROW(adam_step(p, g, s), InvalidArgument);
}

TEST(Dropout, NoDropoutIsIdentity) {
  std::vector<float> v = {1.5f, -2.0f, 3.25f};
  Rng rng(9);
  EXPECT_EQ(dropout_apply<float>(v, 0.0, true, rng), v);
  EXPECT_EQ(dropout_apply<float>(v, 0.7, false, rng), v);
}

TEST(Dropout, ExpectationPreserved) {
  std::vector<double> ones(1000000, 1.0);
  Rng rng(4);
  std::vector<double> out = dropout_apply<double>(ones, 0.5, true, rng);
  const double mean =
      std::accumulate(out.begin(), out.end(), 0.0) / double(out.size());
  EXPECT_NEAR(mean, 1.0, 0.01);
  for (double v : out) EXPECT_TRUE(v == 0.0 || v == 2.0);
}

TEST(Dropout, RejectsBadRate) {
  std::vector<float> v(3, 1.0f);
  Rng rng(1);
  EXPECT_THROW(dropout_apply<float>(v, 1.0, true, rng), InvalidArgument);
  EXPECT_THROW(dropout_apply<float>(v, -0.1, true, rng), InvalidArgument);
}

TEST(Gradcheck, QuadraticIsExact) {
  Matrix<double> x(3, 2);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.3 * double(i) - 0.7;
  auto loss = [&] {
    double s = 0;
    for (double v : x.values()) s += 0.5 * v * v;
    return s;
  };
  Matrix<double> grad = x;
  std::vector<GradcheckParam> params = {{"x", &x, &grad}};
  GradcheckReport r = gradcheck(loss, params);
  EXPECT_LT(r.max_relative_error, 1e-9);
  ASSERT_EQ(r.per_param.size(), 1u);
  EXPECT_EQ(r.per_param[0].first, "x");
}

TEST(Gradcheck, DetectsScaledEntry) {
  Matrix<double> x(2, 2, 1.0);
  auto loss = [&] {
    double s = 0;
    for (double v : x.values()) s += 0.5 * v * v;
    return s;
  };
  Matrix<double> grad = x;
  grad[1] *= 2;
  std::vector<GradcheckParam> params = {{"x", &x, &grad}};
  EXPECT_GT(gradcheck(loss, params).max_relative_error, 0.1);
}

TEST(Gradcheck, NonFiniteLossNamesParameter) {
  Matrix<double> x(1, 1, 0.0), grad(1, 1, 0.0);
  std::vector<GradcheckParam> params = {{"weights", &x, &grad}};
  try {
    gradcheck([&] { return x(0, 0) > 0 ? NAN : 0.0; }, params);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("weights"), std::string::npos);
  }
}

TEST(Normalize, ZeroVectorThrows) {
  std::vector<double> v(3, 0.0);
  EXPECT_THROW(normalize_in_place(std::span<double>(v)), NumericalError);
}

TEST(Rng, DeriveSeparatesStreams) {
  EXPECT_EQ(Rng::derive(1, {2, 3}), Rng::derive(1, {2, 3}));
  EXPECT_NE(Rng::derive(1, {2, 3}), Rng::derive(1, {3, 2}));
  EXPECT_NE(Rng::derive(1, {2}), Rng::derive(2, {2}));
}

}  // namespace
}  // namespace mlmme
