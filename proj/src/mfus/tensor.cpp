#include "mfus/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "mfus/error.hpp"

namespace mfus::nn {
namespace {

thread_local bool g_grad_enabled = true;

std::string shape_str(const Mat& m) {
  std::ostringstream os;
  os << m.rows << "x" << m.cols;
  return os.str();
}

[[noreturn]] void shape_error(const std::string& op, const Mat& a, const Mat& b) {
  fail(ErrorKind::Shape,
       op + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

void add_into(Mat& dst, const Mat& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

// dst += a * b^T
void add_matmul_bt(Mat& dst, const Mat& a, const Mat& b) {
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < b.rows; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += a(i, k) * b(j, k);
      dst(i, j) += acc;
    }
  }
}

// dst += a^T * b
void add_matmul_at(Mat& dst, const Mat& a, const Mat& b) {
  for (std::size_t k = 0; k < a.rows; ++k) {
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double aki = a(k, i);
      if (aki == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) dst(i, j) += aki * b(k, j);
    }
  }
}

template <typename F, typename D>
Tensor unary(const std::string& name, const Tensor& a, F f, D df) {
  const Mat& x = a.value();
  Mat out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = f(x.data[i]);
  return make_op(name, std::move(out), {a},
                 [x, df](const Mat& g, std::vector<Mat*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < x.size(); ++i)
                     pg[0]->data[i] += g.data[i] * df(x.data[i]);
                 });
}

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Mat Mat::from(std::size_t r, std::size_t c, std::vector<double> values) {
  if (values.size() != r * c)
    fail(ErrorKind::Shape, "Mat::from: " + std::to_string(values.size()) +
                               " values for shape " + std::to_string(r) + "x" +
                               std::to_string(c));
  Mat m;
  m.rows = r;
  m.cols = c;
  m.data = std::move(values);
  return m;
}

Mat Mat::row_vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return from(1, n, std::move(values));
}

Mat& Node::ensure_grad() {
  if (!grad_allocated) {
    grad = Mat(value.rows, value.cols);
    grad_allocated = true;
  }
  return grad;
}

Tensor Tensor::leaf(Mat value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->op = "leaf";
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

const Mat& Tensor::value() const { return node_->value; }
Mat& Tensor::mutable_value() { return node_->value; }

const Mat& Tensor::grad() const { return node_->ensure_grad(); }

bool Tensor::has_grad() const { return node_->grad_allocated; }

void Tensor::zero_grad() {
  if (node_->grad_allocated)
    std::fill(node_->grad.data.begin(), node_->grad.data.end(), 0.0);
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

double Tensor::item() const {
  if (rows() != 1 || cols() != 1)
    fail(ErrorKind::Shape, "item() on non-scalar " + shape_str(value()));
  return value().data[0];
}

Tensor make_op(std::string name, Mat value, std::vector<Tensor> parents,
               std::function<void(const Mat&, std::vector<Mat*>&)> backward) {
  auto node = std::make_shared<Node>();
  node->op = std::move(name);
  node->value = std::move(value);
  const bool any = g_grad_enabled && std::any_of(parents.begin(), parents.end(),
                               [](const Tensor& p) { return p.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1)
    fail(ErrorKind::Shape, "backward: loss must be 1x1, got " + shape_str(loss.value()));
  Node* root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS; each node is emitted once.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are scratch space for this sweep; leaves accumulate.
  for (Node* n : order) {
    if (!n->parents.empty()) {
      n->grad = Mat(n->value.rows, n->value.cols);
      n->grad_allocated = true;
    }
  }
  root->ensure_grad().data[0] += 1.0;

  std::vector<Mat*> slots;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->parents.empty() || !n->backward) continue;
    slots.assign(n->parents.size(), nullptr);
    for (std::size_t i = 0; i < n->parents.size(); ++i)
      if (n->parents[i]->requires_grad) slots[i] = &n->parents[i]->ensure_grad();
    n->backward(n->grad, slots);
  }
  for (Node* n : order) {
    if (!n->parents.empty()) {
      n->grad = Mat();
      n->grad_allocated = false;
    }
  }
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) shape_error("matmul", a, b);
  Mat out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = &b.data[k * b.cols];
      double* orow = &out.data[i * out.cols];
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  Mat out = matmul(a.value(), b.value());
  return make_op("matmul", std::move(out), {a, b},
                 [a = a.value(), b = b.value()](const Mat& g, std::vector<Mat*>& pg) {
                   if (pg[0]) add_matmul_bt(*pg[0], g, b);
                   if (pg[1]) add_matmul_at(*pg[1], a, g);
                 });
}

Tensor transpose(const Tensor& a) {
  const Mat& x = a.value();
  Mat out(x.cols, x.rows);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) out(j, i) = x(i, j);
  return make_op("transpose", std::move(out), {a},
                 [](const Mat& g, std::vector<Mat*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < g.rows; ++i)
                     for (std::size_t j = 0; j < g.cols; ++j) (*pg[0])(j, i) += g(i, j);
                 });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.value().same_shape(b.value())) shape_error("add", a.value(), b.value());
  Mat out = a.value();
  add_into(out, b.value());
  return make_op("add", std::move(out), {a, b}, [](const Mat& g, std::vector<Mat*>& pg) {
    if (pg[0]) add_into(*pg[0], g);
    if (pg[1]) add_into(*pg[1], g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.value().same_shape(b.value())) shape_error("sub", a.value(), b.value());
  Mat out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= b.value().data[i];
  return make_op("sub", std::move(out), {a, b}, [](const Mat& g, std::vector<Mat*>& pg) {
    if (pg[0]) add_into(*pg[0], g);
    if (pg[1])
      for (std::size_t i = 0; i < g.size(); ++i) pg[1]->data[i] -= g.data[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (!a.value().same_shape(b.value())) shape_error("mul", a.value(), b.value());
  Mat out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.value().data[i];
  return make_op("mul", std::move(out), {a, b},
                 [a = a.value(), b = b.value()](const Mat& g, std::vector<Mat*>& pg) {
                   if (pg[0])
                     for (std::size_t i = 0; i < g.size(); ++i)
                       pg[0]->data[i] += g.data[i] * b.data[i];
                   if (pg[1])
                     for (std::size_t i = 0; i < g.size(); ++i)
                       pg[1]->data[i] += g.data[i] * a.data[i];
                 });
}

Tensor scale(const Tensor& a, double factor) {
  Mat out = a.value();
  for (double& v : out.data) v *= factor;
  return make_op("scale", std::move(out), {a},
                 [factor](const Mat& g, std::vector<Mat*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < g.size(); ++i)
                     pg[0]->data[i] += factor * g.data[i];
                 });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  const Mat& x = a.value();
  const Mat& b = bias.value();
  if (b.rows != 1 || b.cols != x.cols) shape_error("add_bias", x, b);
  Mat out = x;
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) out(i, j) += b.data[j];
  return make_op("add_bias", std::move(out), {a, bias},
                 [](const Mat& g, std::vector<Mat*>& pg) {
                   if (pg[0]) add_into(*pg[0], g);
                   if (pg[1])
                     for (std::size_t i = 0; i < g.rows; ++i)
                       for (std::size_t j = 0; j < g.cols; ++j) pg[1]->data[j] += g(i, j);
                 });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.value().data) acc += v;
  return make_op("sum", Mat(1, 1, acc), {a}, [](const Mat& g, std::vector<Mat*>& pg) {
    if (!pg[0]) return;
    for (double& v : pg[0]->data) v += g.data[0];
  });
}

Tensor mean_rows(const Tensor& a) {
  const Mat& x = a.value();
  if (x.rows == 0) fail(ErrorKind::Shape, "mean_rows of empty matrix");
  Mat out(1, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) out.data[j] += x(i, j);
  const double inv = 1.0 / static_cast<double>(x.rows);
  for (double& v : out.data) v *= inv;
  return make_op("mean_rows", std::move(out), {a},
                 [inv](const Mat& g, std::vector<Mat*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < pg[0]->rows; ++i)
                     for (std::size_t j = 0; j < pg[0]->cols; ++j)
                       (*pg[0])(i, j) += inv * g.data[j];
                 });
}

Tensor squared_norm(const Tensor& a) {
  const Mat& x = a.value();
  double acc = 0.0;
  for (double v : x.data) acc += v * v;
  return make_op("squared_norm", Mat(1, 1, acc), {a},
                 [x](const Mat& g, std::vector<Mat*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < x.size(); ++i)
                     pg[0]->data[i] += 2.0 * x.data[i] * g.data[0];
                 });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [inv_sqrt2pi](double x) {
        const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        return cdf + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
      });
}

Tensor tanh(const Tensor& a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double t = std::tanh(x);
        return 1.0 - t * t;
      });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double x) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 - s);
      });
}

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
  const Mat& x = a.value();
  const std::size_t n = x.cols;
  if (gamma.rows() != 1 || gamma.cols() != n) shape_error("layer_norm", x, gamma.value());
  if (beta.rows() != 1 || beta.cols() != n) shape_error("layer_norm", x, beta.value());
  Mat xhat(x.rows, n);
  std::vector<double> inv_std(x.rows);
  Mat out(x.rows, n);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += x(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat(i, j) = (x(i, j) - mean) * inv_std[i];
      out(i, j) = gamma.value().data[j] * xhat(i, j) + beta.value().data[j];
    }
  }
  return make_op(
      "layer_norm", std::move(out), {a, gamma, beta},
      [xhat, inv_std, g_val = gamma.value()](const Mat& g, std::vector<Mat*>& pg) {
        const std::size_t n = xhat.cols;
        for (std::size_t i = 0; i < xhat.rows; ++i) {
          if (pg[1])
            for (std::size_t j = 0; j < n; ++j) pg[1]->data[j] += g(i, j) * xhat(i, j);
          if (pg[2])
            for (std::size_t j = 0; j < n; ++j) pg[2]->data[j] += g(i, j);
          if (!pg[0]) continue;
          double sum_d = 0.0, sum_dx = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g(i, j) * g_val.data[j];
            sum_d += d;
            sum_dx += d * xhat(i, j);
          }
          const double nn = static_cast<double>(n);
          for (std::size_t j = 0; j < n; ++j) {
            const double d = g(i, j) * g_val.data[j];
            (*pg[0])(i, j) += inv_std[i] / nn * (nn * d - sum_d - xhat(i, j) * sum_dx);
          }
        }
      });
}

Tensor softmax_rows(const Tensor& a) {
  const Mat& x = a.value();
  if (x.cols == 0) fail(ErrorKind::Shape, "softmax over an empty axis");
  Mat out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double mx = x(i, 0);
    for (std::size_t j = 1; j < x.cols; ++j) mx = std::max(mx, x(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      out(i, j) = std::exp(x(i, j) - mx);
      z += out(i, j);
    }
    for (std::size_t j = 0; j < x.cols; ++j) out(i, j) /= z;
  }
  Mat y = out;
  return make_op("softmax", std::move(out), {a}, [y](const Mat& g, std::vector<Mat*>& pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < y.rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < y.cols; ++j) s += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols; ++j) (*pg[0])(i, j) += y(i, j) * (g(i, j) - s);
    }
  });
}

Tensor dropout(const Tensor& a, double p, bool train, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) fail(ErrorKind::Config, "dropout rate must be in [0,1)");
  if (!train || p == 0.0) return a;
  const double keep = 1.0 - p;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Mat mask(a.rows(), a.cols());
  for (double& m : mask.data) m = unif(rng) < keep ? 1.0 / keep : 0.0;
  Mat out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= mask.data[i];
  return make_op("dropout", std::move(out), {a}, [mask](const Mat& g, std::vector<Mat*>& pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) pg[0]->data[i] += g.data[i] * mask.data[i];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail(ErrorKind::Shape, "concat_rows of nothing");
  const std::size_t cols = parts[0].cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) shape_error("concat_rows", parts[0].value(), p.value());
    rows += p.rows();
  }
  Mat out(rows, cols);
  std::vector<std::size_t> offsets;
  std::size_t r = 0;
  for (const auto& p : parts) {
    offsets.push_back(r);
    std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + r * cols);
    r += p.rows();
  }
  return make_op("concat_rows", std::move(out), parts,
                 [offsets](const Mat& g, std::vector<Mat*>& pg) {
                   for (std::size_t k = 0; k < pg.size(); ++k) {
                     if (!pg[k]) continue;
                     const std::size_t base = offsets[k] * g.cols;
                     for (std::size_t i = 0; i < pg[k]->size(); ++i)
                       pg[k]->data[i] += g.data[base + i];
                   }
                 });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail(ErrorKind::Shape, "concat_cols of nothing");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
  }
  Mat out(rows, cols);
  std::vector<std::size_t> offsets;
  std::size_t c = 0;
  for (const auto& p : parts) {
    offsets.push_back(c);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out(i, c + j) = p.value()(i, j);
    c += p.cols();
  }
  return make_op("concat_cols", std::move(out), parts,
                 [offsets](const Mat& g, std::vector<Mat*>& pg) {
                   for (std::size_t k = 0; k < pg.size(); ++k) {
                     if (!pg[k]) continue;
                     for (std::size_t i = 0; i < pg[k]->rows; ++i)
                       for (std::size_t j = 0; j < pg[k]->cols; ++j)
                         (*pg[k])(i, j) += g(i, offsets[k] + j);
                   }
                 });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  const Mat& x = a.value();
  if (begin + count > x.rows || count == 0)
    fail(ErrorKind::Shape, "slice_rows [" + std::to_string(begin) + "," +
                               std::to_string(begin + count) + ") of " + shape_str(x));
  Mat out(count, x.cols);
  std::copy(x.data.begin() + begin * x.cols, x.data.begin() + (begin + count) * x.cols,
            out.data.begin());
  return make_op("slice_rows", std::move(out), {a},
                 [begin](const Mat& g, std::vector<Mat*>& pg) {
                   if (!pg[0]) return;
                   const std::size_t base = begin * g.cols;
                   for (std::size_t i = 0; i < g.size(); ++i) pg[0]->data[base + i] += g.data[i];
                 });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  const Mat& x = a.value();
  if (begin + count > x.cols || count == 0)
    fail(ErrorKind::Shape, "slice_cols [" + std::to_string(begin) + "," +
                               std::to_string(begin + count) + ") of " + shape_str(x));
  Mat out(x.rows, count);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = x(i, begin + j);
  return make_op("slice_cols", std::move(out), {a},
                 [begin](const Mat& g, std::vector<Mat*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < g.rows; ++i)
                     for (std::size_t j = 0; j < g.cols; ++j) (*pg[0])(i, begin + j) += g(i, j);
                 });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
  const Mat& t = table.value();
  Mat out(indices.size(), t.cols);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= t.rows)
      fail(ErrorKind::Shape, "gather_rows index " + std::to_string(indices[r]) +
                                 " out of range for " + shape_str(t));
    std::copy(t.data.begin() + indices[r] * t.cols,
              t.data.begin() + (indices[r] + 1) * t.cols, out.data.begin() + r * t.cols);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_op("gather_rows", std::move(out), {table},
                 [idx](const Mat& g, std::vector<Mat*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t r = 0; r < idx.size(); ++r)
                     for (std::size_t j = 0; j < g.cols; ++j) (*pg[0])(idx[r], j) += g(r, j);
                 });
}

Tensor row_normalize(const Tensor& a) {
  const Mat& x = a.value();
  Mat out(x.rows, x.cols);
  std::vector<double> norms(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    norms[i] = norm(x.row(i));
    if (norms[i] < 1e-12)
      fail(ErrorKind::Numeric, "row_normalize: row " + std::to_string(i) + " has zero norm");
    for (std::size_t j = 0; j < x.cols; ++j) out(i, j) = x(i, j) / norms[i];
  }
  Mat y = out;
  return make_op("row_normalize", std::move(out), {a},
                 [y, norms](const Mat& g, std::vector<Mat*>& pg) {
                   if (!pg[0]) return;
                   for (std::size_t i = 0; i < y.rows; ++i) {
                     const double yg = dot(y.row(i), g.row(i));
                     for (std::size_t j = 0; j < y.cols; ++j)
                       (*pg[0])(i, j) += (g(i, j) - y(i, j) * yg) / norms[i];
                   }
                 });
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.cols() != k.cols()) shape_error("attention(q,k)", q.value(), k.value());
  if (k.rows() != v.rows()) shape_error("attention(k,v)", k.value(), v.value());
  const double factor = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor logits = scale(matmul(q, transpose(k)), factor);
  return matmul(softmax_rows(logits), v);
}

GradCheckReport gradient_check(const std::function<Tensor()>& loss_fn,
                               const std::vector<std::pair<std::string, Tensor>>& params,
                               const GradCheckOptions& options) {
  for (auto& [name, p] : params) {
    Tensor t = p;
    t.zero_grad();
  }
  Tensor loss = loss_fn();
  if (!std::isfinite(loss.item())) fail(ErrorKind::Numeric, "gradient_check: non-finite loss");
  backward(loss);

  std::mt19937_64 rng(options.seed);
  if (options.stencil_order != 2 && options.stencil_order != 4)
    fail(ErrorKind::Config, "gradient_check: stencil order must be 2 or 4");
  GradCheckReport report;
  for (auto& [name, p] : params) {
    Tensor t = p;
    const Mat analytic = t.grad();
    const std::size_t n = t.value().size();
    std::vector<std::size_t> coords(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    if (options.max_coords_per_param != 0 && n > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
    }
    for (std::size_t c : coords) {
      double& slot = t.mutable_value().data[c];
      const double saved = slot;
      auto at = [&](double offset) {
        slot = saved + offset;
        const double v = loss_fn().item();
        slot = saved;
        if (!std::isfinite(v))
          fail(ErrorKind::Numeric, "gradient_check: non-finite loss while perturbing " + name);
        return v;
      };
      const double e = options.epsilon;
      double numeric = 0.0;
      if (options.stencil_order == 4) {
        numeric = (at(-2 * e) - 8 * at(-e) + 8 * at(e) - at(2 * e)) / (12 * e);
      } else {
        numeric = (at(e) - at(-e)) / (2 * e);
      }
      const double a = analytic.data[c];
      if (!std::isfinite(a))
        fail(ErrorKind::Numeric, "gradient_check: non-finite gradient in " + name);
      const double denom =
          std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coordinates;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = c;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace mfus::nn
