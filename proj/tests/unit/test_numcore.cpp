#include <cmath>

#include "doctest.h"
#include "mfus/tensor.hpp"
#include "test_util.hpp"

using namespace mfus;
using namespace mfus::nn;
using testutil::error_kind_of;
using testutil::random_mat;

namespace {

Mat naive_matmul(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j)
      for (std::size_t k = 0; k < a.cols; ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

GradCheckReport check_op(const std::function<Tensor(const std::vector<Tensor>&)>& op,
                         std::vector<Mat> inputs) {
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<Tensor> leaves;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    leaves.push_back(Tensor::leaf(inputs[n], true));
    params.emplace_back("in" + std::to_string(n), leaves.back());
  }
  // A fixed random projection keeps every output coordinate in the loss.
  const Mat probe = [&] {
    std::mt19937_64 rng(99);
    const Tensor out = op(leaves);
    return random_mat(out.rows(), out.cols(), rng);
  }();
  auto loss = [&] { return sum(mul(op(leaves), Tensor::constant(probe))); };
  GradCheckOptions o;
  o.max_coords_per_param = 0;
  o.epsilon = 1e-5;
  return gradient_check(loss, params, o);
}

}  // namespace

TEST_SUITE("numcore") {
  TEST_CASE("softmax of equal logits is uniform") {
    const auto s = softmax_rows(Tensor::constant(Mat::row_vector({0, 0})));
    CHECK(s.value().data[0] == 0.5);
    CHECK(s.value().data[1] == 0.5);
  }

  TEST_CASE("layer norm of a constant row is zero before the affine map") {
    const auto out = layer_norm(Tensor::constant(Mat::row_vector({3, 3, 3, 3})),
                                Tensor::constant(Mat(1, 4, 1.0)), Tensor::constant(Mat(1, 4, 0.0)));
    for (double v : out.value().data) CHECK(v == 0.0);
  }

  TEST_CASE("matmul chain equals the triple-loop oracle") {
    std::mt19937_64 rng(1);
    const Mat a = random_mat(4, 4, rng), b = random_mat(4, 4, rng), c = random_mat(4, 4, rng);
    const Mat got = matmul(matmul(Tensor::constant(a), Tensor::constant(b)), Tensor::constant(c)).value();
    const Mat want = naive_matmul(naive_matmul(a, b), c);
    for (std::size_t n = 0; n < 16; ++n) CHECK(std::abs(got.data[n] - want.data[n]) < 1e-12);
  }

  TEST_CASE("gradient of x*x at 3 is 6") {
    Tensor x = Tensor::leaf(Mat::row_vector({3}), true);
    backward(mul(x, x));
    CHECK(x.grad().data[0] == 6.0);
  }

  TEST_CASE("gradient of |Ax|^2 is 2 A^T A x") {
    std::mt19937_64 rng(2);
    const Mat a = random_mat(3, 4, rng);
    const Mat xv = random_mat(4, 1, rng);
    Tensor x = Tensor::leaf(xv, true);
    backward(squared_norm(matmul(Tensor::constant(a), x)));
    const Mat ax = naive_matmul(a, xv);
    for (std::size_t k = 0; k < 4; ++k) {
      double want = 0;
      for (std::size_t r = 0; r < 3; ++r) want += 2 * a(r, k) * ax(r, 0);
      CHECK(std::abs(x.grad().data[k] - want) < 1e-12);
    }
  }

  TEST_CASE("quadratic form passes the checker at 1e-8") {
    std::mt19937_64 rng(3);
    const Mat q = random_mat(5, 5, rng);
    Tensor x = Tensor::leaf(random_mat(5, 1, rng), true);
    auto loss = [&] { return sum(mul(x, matmul(Tensor::constant(q), x))); };
    GradCheckOptions o;
    o.epsilon = 1e-5;
    o.max_coords_per_param = 0;
    CHECK(gradient_check(loss, {{"x", x}}, o).max_rel_error < 1e-8);
  }

  TEST_CASE("a corrupted backward rule is caught") {
    Tensor x = Tensor::leaf(Mat::row_vector({0.7, -1.3}), true);
    auto bad_square = [](const Tensor& a) {
      Mat v = a.value();
      for (double& e : v.data) e *= e;
      const Mat in = a.value();
      return make_op("bad_square", v, {a}, [in](const Mat& g, std::vector<Mat*>& pg) {
        for (std::size_t n = 0; n < in.size(); ++n) (*pg[0]).data[n] += g.data[n] * 3.0 * in.data[n];
      });
    };
    auto loss = [&] { return sum(bad_square(x)); };
    CHECK(gradient_check(loss, {{"x", x}}).max_rel_error > 1e-2);
  }

  TEST_CASE("five-point stencil agrees with the two-point rule on smooth losses") {
    std::mt19937_64 rng(4);
    Tensor x = Tensor::leaf(random_mat(2, 3, rng), true);
    auto loss = [&] { return sum(tanh(mul(x, x))); };
    GradCheckOptions o;
    o.max_coords_per_param = 0;
    o.stencil_order = 4;
    o.epsilon = 1e-3;
    CHECK(gradient_check(loss, {{"x", x}}, o).max_rel_error < 1e-8);
    o.stencil_order = 3;
    CHECK(error_kind_of([&] { gradient_check(loss, {{"x", x}}, o); }) == ErrorKind::Config);
  }

  TEST_CASE("property: every differentiable op matches central differences") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 5; ++trial) {
      const std::size_t r = 2 + rng() % 3, c = 2 + rng() % 3;
      const Mat a = random_mat(r, c, rng), b = random_mat(r, c, rng);
      const Mat sq = random_mat(c, c, rng), bias = random_mat(1, c, rng);
      const Mat gamma = random_mat(1, c, rng, 0.5, 1.5), beta = random_mat(1, c, rng);
      const double tol = 1e-6;
      CHECK(check_op([](auto& t) { return matmul(t[0], t[1]); }, {a, sq}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return transpose(t[0]); }, {a}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return add(t[0], t[1]); }, {a, b}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return sub(t[0], t[1]); }, {a, b}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return mul(t[0], t[1]); }, {a, b}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return scale(t[0], -2.5); }, {a}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return add_bias(t[0], t[1]); }, {a, bias}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return mean_rows(t[0]); }, {a}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return squared_norm(t[0]); }, {a}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return gelu(t[0]); }, {a}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return tanh(t[0]); }, {a}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return sigmoid(t[0]); }, {a}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return softmax_rows(t[0]); }, {a}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return layer_norm(t[0], t[1], t[2]); }, {a, gamma, beta})
                .max_rel_error < tol);
      CHECK(check_op([](auto& t) { return row_normalize(t[0]); }, {a}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return concat_rows({t[0], t[1]}); }, {a, b}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return concat_cols({t[0], t[1]}); }, {a, b}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return slice_rows(t[0], 1, 1); }, {a}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return slice_cols(t[0], 1, 1); }, {a}).max_rel_error < tol);
      const std::vector<std::size_t> idx = {1, 0, 1};
      CHECK(check_op([&](auto& t) { return gather_rows(t[0], idx); }, {a}).max_rel_error < tol);
      CHECK(check_op([](auto& t) { return scaled_dot_attention(t[0], t[1], t[2]); }, {a, b, b})
                .max_rel_error < tol);
    }
  }

  TEST_CASE("relu gradient is the indicator away from zero") {
    Tensor x = Tensor::leaf(Mat::row_vector({-1.0, 2.0}), true);
    backward(sum(relu(x)));
    CHECK(x.grad().data[0] == 0.0);
    CHECK(x.grad().data[1] == 1.0);
  }

  TEST_CASE("dropout is the identity outside training and scales survivors inside") {
    std::mt19937_64 rng(5);
    const Tensor x = Tensor::constant(Mat(1, 1000, 1.0));
    CHECK(dropout(x, 0.3, false, rng).value().data == x.value().data);
    const auto d = dropout(x, 0.25, true, rng).value();
    std::size_t zeros = 0;
    for (double v : d.data) {
      if (v == 0.0) ++zeros;
      else CHECK(v == doctest::Approx(1.0 / 0.75));
    }
    CHECK(zeros > 150);
    CHECK(zeros < 350);
  }

  TEST_CASE("no-grad guard records constants") {
    Tensor x = Tensor::leaf(Mat::row_vector({1.0}), true);
    NoGradGuard guard;
    CHECK_FALSE(mul(x, x).requires_grad());
  }

  TEST_CASE("shape mismatches and zero rows are rejected") {
    const Tensor a = Tensor::constant(Mat(2, 3)), b = Tensor::constant(Mat(2, 2));
    CHECK(error_kind_of([&] { matmul(a, b); }) == ErrorKind::Shape);
    CHECK(error_kind_of([&] { add(a, b); }) == ErrorKind::Shape);
    CHECK(error_kind_of([&] { row_normalize(a); }) == ErrorKind::Numeric);
  }
}
