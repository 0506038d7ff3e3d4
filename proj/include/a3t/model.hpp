#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "a3t/graph.hpp"
#include "a3t/tensor.hpp"

namespace a3t {

enum class ModelKind { ha, gcn, gru, tgcn, a3tgcn };

std::string_view to_string(ModelKind kind) noexcept;
std::optional<ModelKind> parse_model_kind(std::string_view name) noexcept;

/// Everything that fixes the parameter shapes of one forecaster.
struct ModelShape {
  ModelKind kind = ModelKind::a3tgcn;
  std::size_t nodes = 1;    // N
  std::size_t history = 1;  // n, the input window length (P for the GCN-only model)
  std::size_t hidden = 64;  // H
  std::size_t horizon = 1;  // T
  std::size_t scorer_width = 32;
  std::size_t gc_width = 1;  // output width of the graph convolution feeding each gate
  bool per_gate_gc = false;  // one graph-convolution weight per gate instead of a shared one
  bool scorer_tanh = false;  // tanh between the two attention scorer layers

  /// Throws ConfigError when a size is zero.
  void validate() const;
  bool operator==(const ModelShape&) const = default;
};

/// Named learnable tensors of one model, in a fixed order derived from the
/// shape. Weights are regularized, biases are not.
class ModelParams {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool regularized = true;
  };

  ModelParams() = default;
  /// All-zero parameters laid out for `shape`.
  explicit ModelParams(const ModelShape& shape);

  const ModelShape& shape() const noexcept { return shape_; }

  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  bool contains(std::string_view name) const noexcept;

  std::span<const Entry> entries() const noexcept { return entries_; }
  std::span<Entry> entries() noexcept { return entries_; }

  std::size_t parameter_count() const noexcept;
  std::string describe() const;

  /// Copy whose tensors are leaves of `tape`.
  ModelParams watched(Tape& tape) const;
  /// Copy with all tape membership dropped.
  ModelParams detached() const;

  /// Throws ShapeError when any tensor disagrees with the layout of shape().
  void check_shapes() const;

 private:
  ModelShape shape_;
  std::vector<Entry> entries_;
};

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
ModelParams init_params(const ModelShape& shape, std::uint64_t seed);

// Batched inputs stack B samples of N rows each, so every node-indexed tensor
// below has B*N rows; B = 1 is the single-sample case.

/// A_hat * x * weight.
Tensor graph_conv(const RoadGraph& graph, const Tensor& x, const Tensor& weight);

/// A_hat ReLU(A_hat X W0) W1 with an identity output activation.
Tensor gcn_forward(const RoadGraph& graph, const Tensor& x, const ModelParams& params);

/// Plain GRU step on a per-node scalar input x_t.
Tensor gru_cell(const Tensor& x_t, const Tensor& h_prev, const ModelParams& params);

/// GRU step whose input is the graph convolution of x_t.
Tensor tgcn_cell(const RoadGraph& graph, const Tensor& x_t, const Tensor& h_prev,
                 const ModelParams& params);

struct AttentionOutput {
  Tensor scores;   // B x n, pre-softmax
  Tensor alpha;    // B x n, each row sums to 1
  Tensor context;  // (B*N) x H
};

/// Soft attention over the recurrent states of one sweep.
AttentionOutput attention(std::span<const Tensor> states, const ModelParams& params);

/// Hidden states h_1..h_n of a recurrent sweep from h_0 = 0. Uses tgcn_cell
/// for tgcn/a3tgcn shapes and gru_cell for gru.
std::vector<Tensor> recurrent_sweep(const RoadGraph& graph, const Tensor& window,
                                    const ModelParams& params);

Tensor a3tgcn_forward(const RoadGraph& graph, const Tensor& window, const ModelParams& params);

/// Dispatches on params.shape().kind. Window is (B*N) x n, oldest column
/// first; the result is (B*N) x T. Not defined for the HA baseline.
Tensor forward(const RoadGraph& graph, const Tensor& window, const ModelParams& params);

/// Sum of squares over the regularized tensors.
Tensor regularization(std::span<const Tensor> weights);
Tensor regularization(const ModelParams& params);

/// Mean squared error over all entries plus lambda_reg times the sum of
/// squared weights.
Tensor loss(const Tensor& y_true, const Tensor& y_pred, std::span<const Tensor> weights,
            double lambda_reg);
Tensor loss(const Tensor& y_true, const Tensor& y_pred, const ModelParams& params,
            double lambda_reg);

}  // namespace a3t
