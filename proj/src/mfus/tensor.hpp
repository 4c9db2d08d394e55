#pragma once

// Dense row-major matrices with a reverse-mode autodiff graph. Every value is
// rank 2; vectors are 1 x n and scalars are 1 x 1.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace mfus::nn {

struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Mat from(std::size_t r, std::size_t c, std::vector<double> values);
  static Mat row_vector(std::vector<double> values);

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  std::size_t size() const { return data.size(); }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

struct Node;

class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(Mat value, bool requires_grad);
  static Tensor constant(Mat value) { return leaf(std::move(value), false); }

  const Mat& value() const;
  Mat& mutable_value();
  // Accumulated gradient; an all-zero matrix of the value's shape when nothing
  // has been accumulated yet.
  const Mat& grad() const;
  bool has_grad() const;
  void zero_grad();
  bool requires_grad() const;

  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  std::vector<std::size_t> shape() const { return {rows(), cols()}; }
  double item() const;

  Node* node() const { return node_.get(); }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;

  friend Tensor make_op(std::string, Mat, std::vector<Tensor>,
                        std::function<void(const Mat&, std::vector<Mat*>&)>);
  friend void backward(const Tensor& loss);
};

struct Node {
  std::string op;
  Mat value;
  Mat grad;
  bool grad_allocated = false;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Receives d(loss)/d(this) and one slot per parent; slots are null for
  // parents that do not require gradients.
  std::function<void(const Mat&, std::vector<Mat*>&)> backward;

  Mat& ensure_grad();
};

// While alive on a thread, ops on that thread record no graph, so frozen
// inference is allocation-light and safe to run concurrently.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an interior node. When no parent requires a gradient the result is a
// constant and `backward` is dropped.
Tensor make_op(std::string name, Mat value, std::vector<Tensor> parents,
               std::function<void(const Mat&, std::vector<Mat*>&)> backward);

// Reverse sweep from a 1 x 1 loss. Gradients accumulate into every reachable
// node that requires them; call zero_grad on leaves between steps.
void backward(const Tensor& loss);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// a (r x n) plus a 1 x n bias broadcast over rows.
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor sum(const Tensor& a);
Tensor mean_rows(const Tensor& a);
Tensor squared_norm(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// Row-wise normalization followed by the affine gamma/beta (both 1 x n).
Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
Tensor softmax_rows(const Tensor& a);
// Inverted dropout: surviving entries are divided by (1 - p) during training;
// identity when `train` is false or p == 0.
Tensor dropout(const Tensor& a, double p, bool train, std::mt19937_64& rng);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices);
// Divides every row by its Euclidean norm; rows with norm < 1e-12 throw.
Tensor row_normalize(const Tensor& a);

// softmax(Q K^T / sqrt(d_head)) V
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// Plain matrix helpers shared by non-differentiable code paths.
Mat matmul(const Mat& a, const Mat& b);
double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

struct GradCheckOptions {
  double epsilon = 1e-6;
  // Coordinates sampled per parameter tensor; 0 checks every coordinate.
  std::size_t max_coords_per_param = 16;
  std::uint64_t seed = 0;
  // Denominator floor for the relative error so exact zeros do not blow up.
  double denominator_floor = 1e-6;
  // 2: (f(t+e) - f(t-e)) / 2e. 4: five-point central stencil, which tolerates
  // a larger step and so loses less to cancellation.
  int stencil_order = 2;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares reverse-mode gradients of `loss_fn` with central differences on a
// seeded subset of coordinates of `params`.
// `loss_fn` must be deterministic. Throws on non-finite values.
GradCheckReport gradient_check(const std::function<Tensor()>& loss_fn,
                               const std::vector<std::pair<std::string, Tensor>>& params,
                               const GradCheckOptions& options = {});

}  // namespace mfus::nn
