// Copyright 2026 TTRSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "ttr/autodiff.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

#include <doctest.h>

#include "ttr/rng.hpp"

using namespace ttr;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0,
                     double hi = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  return m;
}

// Builds root = weighted sum of op outputs (weights break symmetry), then
// checks every input coordinate against central finite differences.
void fd_check(std::vector<Matrix> inputs,
              const std::function<Var(Tape&, const std::vector<Var>&)>& build,
              double tol = 1e-6) {
  // Fixed weights: regenerate with a fresh rng each evaluation.
  const auto weighted_value = [&](const std::vector<Matrix>& ins) {
    Tape t;
    Rng w(4242);
    std::vector<Var> vars;
    for (const auto& m : ins) vars.push_back(t.leaf(m));
    Var out = build(t, vars);
    Matrix weights = random_matrix(w, t.val(out).rows(), t.val(out).cols());
    return t.val(t.sum_all(t.mul(out, t.constant(weights))))(0, 0);
  };

  // Analytic gradients.
  Tape t;
  Rng w(4242);
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(t.leaf(m));
  Var out = build(t, vars);
  Matrix weights = random_matrix(w, t.val(out).rows(), t.val(out).cols());
  Var root = t.sum_all(t.mul(out, t.constant(weights)));
  t.backward(root);

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Matrix analytic = t.grad(vars[i]);
    for (Eigen::Index r = 0; r < inputs[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < inputs[i].cols(); ++c) {
        const double theta = inputs[i](r, c);
        const double h = 1e-6 * std::max(1.0, std::abs(theta));
        inputs[i](r, c) = theta + h;
        const double up = weighted_value(inputs);
        inputs[i](r, c) = theta - h;
        const double down = weighted_value(inputs);
        inputs[i](r, c) = theta;
        const double fd = (up - down) / (2.0 * h);
        const double err =
            std::abs(analytic(r, c) - fd) / std::max({std::abs(fd), std::abs(analytic(r, c)), 1.0});
        CHECK(err <= tol);
      }
    }
  }
}

}  // namespace

TEST_CASE("elementwise op gradients") {
  Rng rng(1);
  const Matrix a = random_matrix(rng, 3, 4);
  const Matrix b = random_matrix(rng, 3, 4);
  fd_check({a, b}, [](Tape& t, const std::vector<Var>& v) { return t.add(v[0], v[1]); });
  fd_check({a, b}, [](Tape& t, const std::vector<Var>& v) { return t.sub(v[0], v[1]); });
  fd_check({a, b}, [](Tape& t, const std::vector<Var>& v) { return t.mul(v[0], v[1]); });
  fd_check({a, random_matrix(rng, 3, 4, 0.5, 2.0)},
           [](Tape& t, const std::vector<Var>& v) { return t.cdiv(v[0], v[1]); });
  fd_check({a}, [](Tape& t, const std::vector<Var>& v) { return t.scale(v[0], -2.5); });
  fd_check({a}, [](Tape& t, const std::vector<Var>& v) { return t.add_scalar(v[0], 0.7); });
}

TEST_CASE("nonlinearity gradients") {
  Rng rng(2);
  const Matrix a = random_matrix(rng, 4, 3, -2.0, 2.0);
  const Matrix pos = random_matrix(rng, 4, 3, 0.2, 3.0);
  fd_check({a}, [](Tape& t, const std::vector<Var>& v) { return t.tanh_(v[0]); });
  fd_check({a}, [](Tape& t, const std::vector<Var>& v) { return t.sigmoid(v[0]); });
  fd_check({a}, [](Tape& t, const std::vector<Var>& v) { return t.gelu(v[0]); });
  fd_check({pos}, [](Tape& t, const std::vector<Var>& v) { return t.log_(v[0]); });
  fd_check({pos}, [](Tape& t, const std::vector<Var>& v) { return t.log1p_(v[0]); });
  fd_check({pos}, [](Tape& t, const std::vector<Var>& v) { return t.sqrt_(v[0]); });
}

TEST_CASE("linear algebra gradients") {
  Rng rng(3);
  const Matrix a = random_matrix(rng, 3, 5);
  const Matrix b = random_matrix(rng, 5, 2);
  fd_check({a, b}, [](Tape& t, const std::vector<Var>& v) { return t.matmul(v[0], v[1]); });
  fd_check({a}, [](Tape& t, const std::vector<Var>& v) { return t.transpose(v[0]); });
  Matrix s(1, 1);
  s(0, 0) = 0.8;
  fd_check({s, a}, [](Tape& t, const std::vector<Var>& v) { return t.smul(v[0], v[1]); });
}

TEST_CASE("shape op gradients") {
  Rng rng(4);
  const Matrix a = random_matrix(rng, 6, 5);
  const Matrix b = random_matrix(rng, 2, 5);
  fd_check({a}, [](Tape& t, const std::vector<Var>& v) { return t.rows(v[0], 1, 3); });
  fd_check({a}, [](Tape& t, const std::vector<Var>& v) { return t.cols(v[0], 2, 2); });
  fd_check({a, b},
           [](Tape& t, const std::vector<Var>& v) { return t.concat_rows({v[0], v[1]}); });
  fd_check({a, random_matrix(rng, 6, 3)},
           [](Tape& t, const std::vector<Var>& v) { return t.concat_cols({v[0], v[1]}); });
  fd_check({a}, [](Tape& t, const std::vector<Var>& v) {
    return t.select_cols(v[0], {4, 0, 0, 2});
  });
}

TEST_CASE("reduction and broadcast gradients") {
  Rng rng(5);
  const Matrix a = random_matrix(rng, 4, 6);
  const Matrix bias = random_matrix(rng, 4, 1);
  fd_check({a}, [](Tape& t, const std::vector<Var>& v) { return t.sum_all(v[0]); });
  fd_check({a}, [](Tape& t, const std::vector<Var>& v) { return t.mean_cols(v[0]); });
  fd_check({a}, [](Tape& t, const std::vector<Var>& v) { return t.col_sums(v[0]); });
  fd_check({a, bias},
           [](Tape& t, const std::vector<Var>& v) { return t.broadcast_add_col(v[0], v[1]); });
}

TEST_CASE("softmax and layer norm gradients") {
  Rng rng(6);
  const Matrix a = random_matrix(rng, 5, 4, -3.0, 3.0);
  fd_check({a}, [](Tape& t, const std::vector<Var>& v) { return t.softmax_cols(v[0]); });

  const Matrix gain = random_matrix(rng, 5, 1, 0.5, 1.5);
  const Matrix shift = random_matrix(rng, 5, 1);
  fd_check({a, gain, shift}, [](Tape& t, const std::vector<Var>& v) {
    return t.layer_norm_cols(v[0], v[1], v[2]);
  });
}

TEST_CASE("framing op gradients") {
  Rng rng(7);
  const Matrix x = random_matrix(rng, 40, 1);
  fd_check({x}, [](Tape& t, const std::vector<Var>& v) {
    return t.frame_signal(v[0], 8, 4, 10);  // last frames spill past the end
  });
  const Matrix frames = random_matrix(rng, 8, 6);
  fd_check({frames},
           [](Tape& t, const std::vector<Var>& v) { return t.overlap_add(v[0], 4, 30); });
  const Matrix fmap = random_matrix(rng, 3, 9);
  fd_check({fmap}, [](Tape& t, const std::vector<Var>& v) { return t.im2col(v[0], 3, 2); });
}

TEST_CASE("softmax columns sum to one") {
  Rng rng(8);
  Tape t;
  Var y = t.softmax_cols(t.constant(random_matrix(rng, 7, 5, -4.0, 4.0)));
  for (Eigen::Index c = 0; c < 5; ++c)
    CHECK(t.val(y).col(c).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("frame_signal zero-pads past the signal end") {
  Tape t;
  Matrix x(5, 1);
  x << 1, 2, 3, 4, 5;
  Var f = t.frame_signal(t.constant(x), 3, 2, 3);
  CHECK(t.val(f)(0, 2) == 5.0);
  CHECK(t.val(f)(1, 2) == 0.0);
  CHECK(t.val(f)(2, 2) == 0.0);
}

TEST_CASE("overlap_add inverts framing for non-overlapping hops") {
  Tape t;
  Matrix x(6, 1);
  x << 1, 2, 3, 4, 5, 6;
  Var f = t.frame_signal(t.constant(x), 2, 2, 3);
  Var y = t.overlap_add(f, 2, 6);
  CHECK(t.val(y) == x);
}

TEST_CASE("tape guards") {
  Tape t;
  Var a = t.leaf(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(a), std::invalid_argument);  // non-scalar root
  Var s = t.sum_all(a);
  t.backward(s);
  CHECK_THROWS_AS(t.backward(s), std::logic_error);  // swept twice

  Tape t2;
  Var b = t2.leaf(Matrix::Ones(2, 3));
  CHECK_THROWS_AS(t2.matmul(b, b), std::invalid_argument);
  CHECK_THROWS_AS(t2.rows(b, 1, 5), std::invalid_argument);
}
