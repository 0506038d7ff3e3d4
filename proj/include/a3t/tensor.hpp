#pragma once

// Dense row-major 2-D tensors of doubles and a reverse-mode gradient tape.
//
// Operations are free functions. When any operand is tracked by a Tape the
// result is recorded on that tape together with its backward rule; with no
// tracked operand the same functions are plain forward computations.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace a3t {

class Tape;

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const std::vector<double>& storage() const noexcept { return values_; }

  /// Null when the tensor is not recorded on any tape.
  Tape* tape() const noexcept { return tape_; }
  bool tracked() const noexcept { return tape_ != nullptr; }
  std::size_t node() const noexcept { return node_; }

  /// Copy of the values with tape membership dropped.
  Tensor detached() const;

  std::string shape_string() const;
  bool same_shape(const Tensor& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const noexcept;

 private:
  friend class Tape;

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

enum class OpKind {
  leaf,
  matmul,
  add,
  sub,
  hadamard,
  sigmoid,
  tanh,
  relu,
  scale,
  add_row,
  concat_cols,
  slice_cols,
  reshape,
  softmax,
  scale_rows,
  propagate,
  sum,
  transpose,
};

std::string_view op_name(OpKind kind) noexcept;
std::optional<OpKind> op_from_name(std::string_view name) noexcept;

enum class ElementwiseOp { add, sub, hadamard, sigmoid, tanh, relu };

class Gradients {
 public:
  Gradients() = default;

  /// d(root)/d(t) for a leaf registered with Tape::watch. All zeros when t
  /// never reached the root or belongs to another tape.
  Tensor wrt(const Tensor& t) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<Tensor> per_node_;
};

/// Records operations in creation order, which is a topological order, and
/// replays them in reverse. Single writer; one tape per training step.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& grad_out, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers a leaf and returns a tracked copy of it.
  Tensor watch(const Tensor& leaf);

  /// Reverse sweep from a 1x1 root. Each call starts from fresh accumulators,
  /// so repeated calls return identical results.
  Gradients backward(const Tensor& root);

  std::size_t node_count() const noexcept { return nodes_.size(); }

  // Used by op implementations.
  Tensor record(Tensor value, OpKind kind, BackwardFn fn);
  void accumulate(std::size_t node, Tensor grad);

 private:
  struct Node {
    std::size_t rows;
    std::size_t cols;
    OpKind kind;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::vector<Tensor>* grads_ = nullptr;
};

// Forward operations. Shape mismatches throw ShapeError naming both shapes.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b = nullptr);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
/// a + broadcast of the 1xC row `bias` to every row of a.
Tensor add_row(const Tensor& a, const Tensor& bias);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::size_t first, std::size_t count);
/// Row-major reinterpretation; rows * cols must be preserved.
Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);
/// Softmax of an n x 1 column.
Tensor softmax_vector(const Tensor& e);
/// Independent softmax over each row.
Tensor softmax_rows(const Tensor& e);
/// Row i of x multiplied by s(i, 0).
Tensor scale_rows(const Tensor& x, const Tensor& s);
/// Applies the N x N matrix `a_hat` to each consecutive N-row block of x.
Tensor propagate(const Tensor& a_hat, const Tensor& x);
/// Sum of all entries as a 1x1 tensor.
Tensor sum(const Tensor& a);

Tensor transpose(const Tensor& a);

namespace testing {
/// Fault-injection hook for gradient-check harnesses: the backward rule of
/// `kind` is perturbed until reset with std::nullopt.
void corrupt_backward(std::optional<OpKind> kind);
}  // namespace testing

}  // namespace a3t
