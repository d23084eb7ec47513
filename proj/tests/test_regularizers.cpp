/*
 * Copyright 2026 The DRIM Authors.
 *
 * This source code is licensed under the Apache License, Version 2.0 license
 * found in the LICENSE file in the root directory of this source tree.
 */

#include <cmath>
#include <functional>

#include <doctest.h>

#include "drim/error.hpp"
#include "drim/regularizers.hpp"
#include "helpers.hpp"

using namespace drim;
using drim::testing::random_matrix;

namespace {

// Finite-difference check of a separator on one matrix.
double fd_max_rel_error(const std::function<LossAndGrad(const Matrix&)>& fn, Matrix v) {
  ParamSlot slot("v", v);
  slot.grad = fn(v).grad;
  ParamSlot* slots[] = {&slot};
  GradCheckOptions opt;
  opt.rel_tol = 1e-5;
  const auto report = check_gradient([&] { return fn(slot.value).loss; }, slots, opt);
  CHECK(report.passed());
  return report.max_rel_error;
}

}  // namespace

TEST_CASE("entropy separator") {
  const std::size_t d = 6;
  Matrix uniform(3, d, 0.25);
  CHECK(entropy_loss(uniform).loss == doctest::Approx(-3.0 * std::log(6.0)).epsilon(1e-12));
  CHECK(std::abs(entropy_loss(uniform).loss + 3.0 * std::log(6.0)) < 1e-9);

  Matrix spike(2, 4, 0.0);
  spike(0, 0) = 200.0;
  spike(1, 2) = 200.0;
  CHECK(std::abs(entropy_loss(spike).loss) < 1e-70);

  std::mt19937_64 rng(5);
  CHECK(fd_max_rel_error(entropy_loss, random_matrix(2, 4, rng)) < 1e-5);
}

TEST_CASE("mean-square separator") {
  CHECK(mean_square_loss(Matrix(3, 4, 0.7)).loss == 0.0);

  Matrix pair(2, 3, std::vector<double>{1.0, -2.0, 0.5, -1.0, 2.0, -0.5});
  const double u2 = 1.0 + 4.0 + 0.25;
  CHECK(std::abs(mean_square_loss(pair).loss + 2.0 * u2) < 1e-12);

  std::mt19937_64 rng(6);
  CHECK(fd_max_rel_error(mean_square_loss, random_matrix(3, 5, rng)) < 1e-5);
}

TEST_CASE("diverse separator") {
  Matrix same(2, 3, std::vector<double>{0.2, 0.4, -0.1, 0.2, 0.4, -0.1});
  CHECK(std::abs(diverse_loss(same).loss) < 1e-12);

  Matrix ortho(2, 3, std::vector<double>{0.3, 0.0, 0.0, 0.0, 0.0, 0.8});
  CHECK(std::abs(diverse_loss(ortho).loss + 1.0) < 1e-12);
  CHECK(std::abs(diverse_loss(ortho, DiverseSign::paper).loss - 1.0) < 1e-12);

  std::mt19937_64 rng(7);
  CHECK(fd_max_rel_error([](const Matrix& v) { return diverse_loss(v); }, random_matrix(3, 4, rng)) <
        1e-5);
  CHECK(fd_max_rel_error([](const Matrix& v) { return diverse_loss(v, DiverseSign::paper); },
                         random_matrix(3, 4, rng)) < 1e-5);
}

TEST_CASE("diverse separator preconditions") {
  CHECK_THROWS_AS(diverse_loss(Matrix(1, 3, 1.0)), NumericError);
  Matrix zero_row(2, 3, 0.5);
  for (double& v : zero_row.row(1)) v = 0.0;
  CHECK_THROWS_AS(diverse_loss(zero_row), NumericError);
}

TEST_CASE("separator dispatch and parsing") {
  std::mt19937_64 rng(8);
  const Matrix v = random_matrix(2, 4, rng);
  SeparatorConfig none{Separator::none, 0.5, DiverseSign::corrected};
  const auto z = separator_loss(v, none);
  CHECK(z.loss == 0.0);
  for (double g : z.grad.values()) CHECK(g == 0.0);

  SeparatorConfig mean{Separator::mean_square, 0.5, DiverseSign::corrected};
  CHECK(separator_loss(v, mean).loss == mean_square_loss(v).loss);

  CHECK(parse_separator("div") == Separator::diverse);
  CHECK(parse_separator("entropy") == Separator::entropy);
  CHECK(parse_separator("mean") == Separator::mean_square);
  CHECK(parse_separator("none") == Separator::none);
  CHECK_FALSE(parse_separator("angle").has_value());
  CHECK(to_string(Separator::diverse) == "div");
}
