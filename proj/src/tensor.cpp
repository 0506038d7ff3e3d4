#include "a3t/tensor.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>

#include "a3t/error.hpp"

namespace a3t {

namespace {

constexpr std::size_t no_node = std::numeric_limits<std::size_t>::max();

std::atomic<int> g_corrupted_op{-1};

std::size_t node_of(const Tensor& t) { return t.tracked() ? t.node() : no_node; }

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* found = nullptr;
  for (const Tensor* t : inputs) {
    if (t == nullptr || !t->tracked()) {
      continue;
    }
    if (found != nullptr && found != t->tape()) {
      throw ContractError("operands are recorded on different tapes");
    }
    found = t->tape();
  }
  return found;
}

Tensor finish(Tensor out, OpKind kind, std::initializer_list<const Tensor*> inputs,
              Tape::BackwardFn fn) {
  Tape* tape = common_tape(inputs);
  if (tape == nullptr) {
    return out;
  }
  return tape->record(std::move(out), kind, std::move(fn));
}

[[noreturn]] void shape_mismatch(std::string_view op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                   b.shape_string());
}

// c (m x n) += a (m x k) * b (k x n)
void gemm_nn(const double* __restrict a, const double* __restrict b, double* __restrict c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += av * brow[j];
      }
    }
  }
}

// c (m x n) += a (m x k) * b^T where b is (n x k)
void gemm_nt(const double* __restrict a, const double* __restrict b, double* __restrict c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* __restrict arow = a + i * k;
    double* __restrict crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* __restrict brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += arow[p] * brow[p];
      }
      crow[j] += acc;
    }
  }
}

// c (k x n) += a^T * b where a is (m x k) and b is (m x n)
void gemm_tn(const double* __restrict a, const double* __restrict b, double* __restrict c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* __restrict brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* __restrict crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += av * brow[j];
      }
    }
  }
}

template <class F>
Tensor map_values(const Tensor& a, F f) {
  Tensor out(a.rows(), a.cols());
  auto src = a.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = f(src[i]);
  }
  return out;
}

void softmax_row(const double* in, double* out, std::size_t n) {
  const double peak = *std::max_element(in, in + n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(in[i] - peak);
    total += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    out[i] /= total;
  }
}

// Gradient of softmax for one row: g_in = alpha * (g - <alpha, g>).
void softmax_row_backward(const double* alpha, const double* g, double* out, std::size_t n) {
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += alpha[i] * g[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = alpha[i] * (g[i] - dot);
  }
}

constexpr std::array<std::string_view, 19> k_op_names{
    "leaf",   "matmul",      "add",        "sub",     "hadamard", "sigmoid",    "tanh",
    "relu",   "scale",       "add_row",    "concat_cols", "slice_cols", "reshape", "softmax",
    "scale_rows", "propagate", "sum", "transpose", ""};

}  // namespace

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw ShapeError("tensor of shape " + shape_string() + " given " +
                     std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) {
      throw ShapeError("from_rows: ragged initializer");
    }
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor(r, c, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    out(i, i) = 1.0;
  }
  return out;
}

Tensor Tensor::detached() const {
  Tensor out = *this;
  out.tape_ = nullptr;
  out.node_ = 0;
  return out;
}

std::string Tensor::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::string_view op_name(OpKind kind) noexcept { return k_op_names[static_cast<int>(kind)]; }

std::optional<OpKind> op_from_name(std::string_view name) noexcept {
  for (std::size_t i = 0; i + 1 < k_op_names.size(); ++i) {
    if (k_op_names[i] == name) {
      return static_cast<OpKind>(i);
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- Tape

Tensor Gradients::wrt(const Tensor& t) const {
  if (t.tape() != tape_ || !t.tracked() || t.node() >= per_node_.size() ||
      per_node_[t.node()].empty()) {
    return Tensor(t.rows(), t.cols());
  }
  return per_node_[t.node()];
}

Tensor Tape::watch(const Tensor& leaf) {
  return record(leaf.detached(), OpKind::leaf, nullptr);
}

Tensor Tape::record(Tensor value, OpKind kind, BackwardFn fn) {
  const int corrupted = g_corrupted_op.load(std::memory_order_relaxed);
  if (fn && corrupted == static_cast<int>(kind)) {
    fn = [inner = std::move(fn)](const Tensor& g, Tape& tape) {
      Tensor skewed = g;
      for (double& v : skewed.values()) {
        v = 1.25 * v + 1e-3;
      }
      inner(skewed, tape);
    };
  }
  nodes_.push_back(Node{value.rows(), value.cols(), kind, std::move(fn)});
  value.tape_ = this;
  value.node_ = nodes_.size() - 1;
  return value;
}

void Tape::accumulate(std::size_t node, Tensor grad) {
  if (node == no_node || grads_ == nullptr) {
    return;
  }
  Tensor& slot = (*grads_)[node];
  if (slot.empty()) {
    grad.tape_ = nullptr;
    slot = std::move(grad);
    return;
  }
  auto dst = slot.values();
  auto src = grad.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] += src[i];
  }
}

Gradients Tape::backward(const Tensor& root) {
  if (root.tape() != this) {
    throw ContractError("backward: root is not recorded on this tape");
  }
  if (root.rows() != 1 || root.cols() != 1) {
    throw ContractError("backward: root must be 1x1, got " + root.shape_string());
  }
  Gradients result;
  result.tape_ = this;
  result.per_node_.resize(nodes_.size());
  grads_ = &result.per_node_;
  result.per_node_[root.node()] = Tensor(1, 1, 1.0);
  for (std::size_t i = root.node() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    Tensor& g = result.per_node_[i];
    if (g.empty() || !node.backward) {
      continue;
    }
    Tensor grad_out = std::move(g);
    g = Tensor();
    node.backward(grad_out, *this);
  }
  grads_ = nullptr;
  return result;
}

namespace testing {
void corrupt_backward(std::optional<OpKind> kind) {
  g_corrupted_op.store(kind ? static_cast<int>(*kind) : -1, std::memory_order_relaxed);
}
}  // namespace testing

// ---------------------------------------------------------------- operations

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    shape_mismatch("matmul", a, b);
  }
  Tensor out(a.rows(), b.cols());
  gemm_nn(a.values().data(), b.values().data(), out.values().data(), a.rows(), a.cols(),
          b.cols());
  const std::size_t ia = node_of(a);
  const std::size_t ib = node_of(b);
  Tensor av = ib != no_node ? a.detached() : Tensor();
  Tensor bv = ia != no_node ? b.detached() : Tensor();
  return finish(std::move(out), OpKind::matmul, {&a, &b},
                [ia, ib, av = std::move(av), bv = std::move(bv)](const Tensor& g, Tape& tape) {
                  if (ia != no_node) {
                    // dA = G * B^T
                    Tensor da(g.rows(), bv.rows());
                    gemm_nt(g.values().data(), bv.values().data(), da.values().data(), g.rows(),
                            g.cols(), bv.rows());
                    tape.accumulate(ia, std::move(da));
                  }
                  if (ib != no_node) {
                    // dB = A^T * G
                    Tensor db(av.cols(), g.cols());
                    gemm_tn(av.values().data(), g.values().data(), db.values().data(), av.rows(),
                            av.cols(), g.cols());
                    tape.accumulate(ib, std::move(db));
                  }
                });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    shape_mismatch("add", a, b);
  }
  Tensor out = a.detached();
  auto dst = out.values();
  auto src = b.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] += src[i];
  }
  const std::size_t ia = node_of(a);
  const std::size_t ib = node_of(b);
  return finish(std::move(out), OpKind::add, {&a, &b}, [ia, ib](const Tensor& g, Tape& tape) {
    tape.accumulate(ia, g);
    tape.accumulate(ib, g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    shape_mismatch("sub", a, b);
  }
  Tensor out = a.detached();
  auto dst = out.values();
  auto src = b.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] -= src[i];
  }
  const std::size_t ia = node_of(a);
  const std::size_t ib = node_of(b);
  return finish(std::move(out), OpKind::sub, {&a, &b}, [ia, ib](const Tensor& g, Tape& tape) {
    tape.accumulate(ia, g);
    if (ib != no_node) {
      tape.accumulate(ib, scale(g, -1.0));
    }
  });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    shape_mismatch("hadamard", a, b);
  }
  Tensor out = a.detached();
  auto dst = out.values();
  auto src = b.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] *= src[i];
  }
  const std::size_t ia = node_of(a);
  const std::size_t ib = node_of(b);
  Tensor av = ib != no_node ? a.detached() : Tensor();
  Tensor bv = ia != no_node ? b.detached() : Tensor();
  return finish(std::move(out), OpKind::hadamard, {&a, &b},
                [ia, ib, av = std::move(av), bv = std::move(bv)](const Tensor& g, Tape& tape) {
                  if (ia != no_node) {
                    tape.accumulate(ia, hadamard(g, bv));
                  }
                  if (ib != no_node) {
                    tape.accumulate(ib, hadamard(g, av));
                  }
                });
}

Tensor sigmoid(const Tensor& a) {
  Tensor out = map_values(a, [](double x) {
    // Branches keep exp() from overflowing for large |x|.
    if (x >= 0.0) {
      return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  if (!a.tracked()) {
    return out;
  }
  const std::size_t ia = node_of(a);
  Tensor s = out.detached();
  return finish(std::move(out), OpKind::sigmoid, {&a}, [ia, s = std::move(s)](const Tensor& g, Tape& tape) {
    Tensor d(g.rows(), g.cols());
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double v = s.values()[i];
      d.values()[i] = g.values()[i] * v * (1.0 - v);
    }
    tape.accumulate(ia, std::move(d));
  });
}

Tensor tanh(const Tensor& a) {
  Tensor out = map_values(a, [](double x) { return std::tanh(x); });
  if (!a.tracked()) {
    return out;
  }
  const std::size_t ia = node_of(a);
  Tensor t = out.detached();
  return finish(std::move(out), OpKind::tanh, {&a}, [ia, t = std::move(t)](const Tensor& g, Tape& tape) {
    Tensor d(g.rows(), g.cols());
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double v = t.values()[i];
      d.values()[i] = g.values()[i] * (1.0 - v * v);
    }
    tape.accumulate(ia, std::move(d));
  });
}

Tensor relu(const Tensor& a) {
  Tensor out = map_values(a, [](double x) { return x > 0.0 ? x : 0.0; });
  if (!a.tracked()) {
    return out;
  }
  const std::size_t ia = node_of(a);
  Tensor in = a.detached();
  return finish(std::move(out), OpKind::relu, {&a}, [ia, in = std::move(in)](const Tensor& g, Tape& tape) {
    Tensor d(g.rows(), g.cols());
    for (std::size_t i = 0; i < d.size(); ++i) {
      d.values()[i] = in.values()[i] > 0.0 ? g.values()[i] : 0.0;
    }
    tape.accumulate(ia, std::move(d));
  });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b) {
  const bool binary = op == ElementwiseOp::add || op == ElementwiseOp::sub ||
                      op == ElementwiseOp::hadamard;
  if (binary && b == nullptr) {
    throw ContractError("elementwise: binary operation needs a second operand");
  }
  switch (op) {
    case ElementwiseOp::add:
      return add(a, *b);
    case ElementwiseOp::sub:
      return sub(a, *b);
    case ElementwiseOp::hadamard:
      return hadamard(a, *b);
    case ElementwiseOp::sigmoid:
      return sigmoid(a);
    case ElementwiseOp::tanh:
      return tanh(a);
    case ElementwiseOp::relu:
      return relu(a);
  }
  throw ContractError("elementwise: unknown operation");
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = map_values(a, [factor](double x) { return x * factor; });
  const std::size_t ia = node_of(a);
  return finish(std::move(out), OpKind::scale, {&a}, [ia, factor](const Tensor& g, Tape& tape) {
    tape.accumulate(ia, scale(g, factor));
  });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    shape_mismatch("add_row", a, bias);
  }
  Tensor out = a.detached();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) {
      out(r, c) += bias(0, c);
    }
  }
  const std::size_t ia = node_of(a);
  const std::size_t ib = node_of(bias);
  return finish(std::move(out), OpKind::add_row, {&a, &bias}, [ia, ib](const Tensor& g, Tape& tape) {
    tape.accumulate(ia, g);
    if (ib != no_node) {
      Tensor db(1, g.cols());
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t c = 0; c < g.cols(); ++c) {
          db(0, c) += g(r, c);
        }
      }
      tape.accumulate(ib, std::move(db));
    }
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    shape_mismatch("concat_cols", a, b);
  }
  const std::size_t ca = a.cols();
  const std::size_t cb = b.cols();
  Tensor out(a.rows(), ca + cb);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy_n(a.values().data() + r * ca, ca, out.values().data() + r * (ca + cb));
    std::copy_n(b.values().data() + r * cb, cb, out.values().data() + r * (ca + cb) + ca);
  }
  const std::size_t ia = node_of(a);
  const std::size_t ib = node_of(b);
  return finish(std::move(out), OpKind::concat_cols, {&a, &b}, [ia, ib, ca](const Tensor& g, Tape& tape) {
    if (ia != no_node) {
      tape.accumulate(ia, slice_cols(g, 0, ca));
    }
    if (ib != no_node) {
      tape.accumulate(ib, slice_cols(g, ca, g.cols() - ca));
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t first, std::size_t count) {
  if (first + count > a.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") out of range for " + a.shape_string());
  }
  Tensor out(a.rows(), count);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy_n(a.values().data() + r * a.cols() + first, count, out.values().data() + r * count);
  }
  const std::size_t ia = node_of(a);
  const std::size_t total = a.cols();
  return finish(std::move(out), OpKind::slice_cols, {&a}, [ia, first, count, total](const Tensor& g, Tape& tape) {
    Tensor d(g.rows(), total);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      std::copy_n(g.values().data() + r * count, count, d.values().data() + r * total + first);
    }
    tape.accumulate(ia, std::move(d));
  });
}

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.size()) {
    throw ShapeError("reshape: cannot view " + a.shape_string() + " as [" + std::to_string(rows) +
                     "x" + std::to_string(cols) + "]");
  }
  Tensor out(rows, cols, a.storage());
  const std::size_t ia = node_of(a);
  const std::size_t r0 = a.rows();
  const std::size_t c0 = a.cols();
  return finish(std::move(out), OpKind::reshape, {&a}, [ia, r0, c0](const Tensor& g, Tape& tape) {
    tape.accumulate(ia, Tensor(r0, c0, g.storage()));
  });
}

Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) {
      out(c, r) = a(r, c);
    }
  }
  const std::size_t ia = node_of(a);
  return finish(std::move(out), OpKind::transpose, {&a}, [ia](const Tensor& g, Tape& tape) {
    tape.accumulate(ia, transpose(g));
  });
}

Tensor softmax_rows(const Tensor& e) {
  if (e.cols() == 0) {
    throw ShapeError("softmax: empty input " + e.shape_string());
  }
  Tensor out(e.rows(), e.cols());
  for (std::size_t r = 0; r < e.rows(); ++r) {
    softmax_row(e.values().data() + r * e.cols(), out.values().data() + r * e.cols(), e.cols());
  }
  if (!e.tracked()) {
    return out;
  }
  const std::size_t ie = node_of(e);
  Tensor alpha = out.detached();
  return finish(std::move(out), OpKind::softmax, {&e}, [ie, alpha = std::move(alpha)](const Tensor& g, Tape& tape) {
    Tensor d(g.rows(), g.cols());
    for (std::size_t r = 0; r < g.rows(); ++r) {
      softmax_row_backward(alpha.values().data() + r * g.cols(), g.values().data() + r * g.cols(),
                           d.values().data() + r * g.cols(), g.cols());
    }
    tape.accumulate(ie, std::move(d));
  });
}

Tensor softmax_vector(const Tensor& e) {
  if (e.cols() != 1 || e.rows() == 0) {
    throw ShapeError("softmax_vector: expected an n x 1 column with n >= 1, got " +
                     e.shape_string());
  }
  Tensor out(e.rows(), 1);
  softmax_row(e.values().data(), out.values().data(), e.rows());
  if (!e.tracked()) {
    return out;
  }
  const std::size_t ie = node_of(e);
  Tensor alpha = out.detached();
  return finish(std::move(out), OpKind::softmax, {&e}, [ie, alpha = std::move(alpha)](const Tensor& g, Tape& tape) {
    Tensor d(g.rows(), 1);
    softmax_row_backward(alpha.values().data(), g.values().data(), d.values().data(), g.rows());
    tape.accumulate(ie, std::move(d));
  });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
  if (s.cols() != 1 || s.rows() != x.rows()) {
    shape_mismatch("scale_rows", x, s);
  }
  Tensor out = x.detached();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const double f = s(r, 0);
    for (std::size_t c = 0; c < out.cols(); ++c) {
      out(r, c) *= f;
    }
  }
  const std::size_t ix = node_of(x);
  const std::size_t is = node_of(s);
  Tensor xv = is != no_node ? x.detached() : Tensor();
  Tensor sv = ix != no_node ? s.detached() : Tensor();
  return finish(std::move(out), OpKind::scale_rows, {&x, &s},
                [ix, is, xv = std::move(xv), sv = std::move(sv)](const Tensor& g, Tape& tape) {
                  if (ix != no_node) {
                    tape.accumulate(ix, scale_rows(g, sv));
                  }
                  if (is != no_node) {
                    Tensor ds(g.rows(), 1);
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                      double acc = 0.0;
                      for (std::size_t c = 0; c < g.cols(); ++c) {
                        acc += g(r, c) * xv(r, c);
                      }
                      ds(r, 0) = acc;
                    }
                    tape.accumulate(is, std::move(ds));
                  }
                });
}

Tensor propagate(const Tensor& a_hat, const Tensor& x) {
  const std::size_t n = a_hat.rows();
  if (a_hat.cols() != n || n == 0 || x.rows() % n != 0) {
    shape_mismatch("propagate", a_hat, x);
  }
  const std::size_t blocks = x.rows() / n;
  const std::size_t f = x.cols();
  Tensor out(x.rows(), f);
  for (std::size_t b = 0; b < blocks; ++b) {
    gemm_nn(a_hat.values().data(), x.values().data() + b * n * f, out.values().data() + b * n * f,
            n, n, f);
  }
  const std::size_t ia = node_of(a_hat);
  const std::size_t ix = node_of(x);
  Tensor av = ix != no_node ? a_hat.detached() : Tensor();
  Tensor xv = ia != no_node ? x.detached() : Tensor();
  return finish(std::move(out), OpKind::propagate, {&a_hat, &x},
                [ia, ix, n, blocks, f, av = std::move(av), xv = std::move(xv)](const Tensor& g, Tape& tape) {
                  if (ix != no_node) {
                    // dX_b = A^T G_b
                    Tensor dx(g.rows(), f);
                    for (std::size_t b = 0; b < blocks; ++b) {
                      gemm_tn(av.values().data(), g.values().data() + b * n * f,
                              dx.values().data() + b * n * f, n, n, f);
                    }
                    tape.accumulate(ix, std::move(dx));
                  }
                  if (ia != no_node) {
                    // dA = sum_b G_b X_b^T
                    Tensor da(n, n);
                    for (std::size_t b = 0; b < blocks; ++b) {
                      gemm_nt(g.values().data() + b * n * f, xv.values().data() + b * n * f,
                              da.values().data(), n, f, n);
                    }
                    tape.accumulate(ia, std::move(da));
                  }
                });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) {
    total += v;
  }
  const std::size_t ia = node_of(a);
  const std::size_t r = a.rows();
  const std::size_t c = a.cols();
  return finish(Tensor(1, 1, total), OpKind::sum, {&a}, [ia, r, c](const Tensor& g, Tape& tape) {
    tape.accumulate(ia, Tensor(r, c, g(0, 0)));
  });
}

}  // namespace a3t
