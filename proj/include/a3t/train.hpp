#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "a3t/data.hpp"
#include "a3t/graph.hpp"
#include "a3t/metrics.hpp"
#include "a3t/model.hpp"

namespace a3t {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t epochs = 5000;
  std::size_t hidden_units = 64;
  std::size_t history_n = 12;
  std::size_t horizon_t = 1;
  double lambda_reg = 0.0015;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  ModelKind model_kind = ModelKind::a3tgcn;

  double train_fraction = 0.8;
  std::size_t eval_every = 10;  // test metrics every this many epochs, and after the last
  std::size_t scorer_width = 32;
  std::size_t gc_width = 1;
  bool per_gate_gc = false;
  bool scorer_tanh = false;

  /// Throws ConfigError on non-positive sizes or rates.
  void validate() const;
  ModelShape model_shape(std::size_t n_nodes) const;
};

/// Normalized, windowed and split data ready for training.
struct PreparedData {
  TrainTestSplit split;
  double scale_max = 1.0;
  std::size_t n_nodes = 0;
};

/// Normalizes by the data maximum, or by `scale` when given.
PreparedData prepare_data(const FeatureMatrix& raw, std::size_t history, std::size_t horizon,
                          double train_fraction, std::optional<double> scale = std::nullopt);

/// Per-node mean of the window, repeated for every future step.
Tensor baseline_ha(const Tensor& window, std::size_t horizon);

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::size_t step = 0;

  AdamState() = default;
  explicit AdamState(const ModelParams& params);
};

inline constexpr double k_adam_beta1 = 0.9;
inline constexpr double k_adam_beta2 = 0.999;
inline constexpr double k_adam_epsilon = 1e-8;

/// One bias-corrected Adam update; grads are aligned with params.entries().
void adam_step(ModelParams& params, std::span<const Tensor> grads, AdamState& state, double lr);

/// Predictions for every sample of `ds`, normalized scale, one row per sample
/// (N*T values, node-major). The HA shape uses baseline_ha.
Tensor predict(const RoadGraph& graph, const ModelParams& params, const WindowedDataset& ds);

/// Truth laid out like predict().
Tensor targets(const WindowedDataset& ds);

/// Metrics on the de-normalized scale.
MetricsReport evaluate_model(const RoadGraph& graph, const ModelParams& params,
                             const WindowedDataset& ds, double scale_max);

struct EvalRow {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  MetricsReport test;
};

struct TrainHistory {
  std::vector<double> epoch_loss;  // mean training loss of every epoch
  std::vector<EvalRow> evals;
};

struct TrainResult {
  ModelParams params;  // lowest test RMSE seen
  TrainHistory history;
  MetricsReport best;
  std::size_t best_epoch = 0;
};

/// Mini-batch Adam on the regularized loss, shuffled with the config seed.
/// Throws TrainingDiverged on a non-finite loss.
TrainResult train(const TrainConfig& config, const RoadGraph& graph, const PreparedData& data);

/// History CSV: epoch, train_loss, test_rmse, test_mae, test_accuracy, test_r2, test_var.
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

struct ComparisonEntry {
  ModelKind model;
  std::size_t horizon;
  MetricsReport metrics;
};

struct ComparisonTable {
  std::vector<ModelKind> models;
  std::vector<std::size_t> horizons;
  std::vector<ComparisonEntry> entries;

  const MetricsReport& at(ModelKind model, std::size_t horizon) const;
  /// Rows: horizon x metric; columns: models.
  void write_csv(const std::filesystem::path& path) const;
  void print(std::ostream& out) const;
};

/// Trains and evaluates every config on the same raw data. All configs must
/// agree on history length and split; `threads` > 1 runs configs concurrently.
ComparisonTable compare_models(std::span<const TrainConfig> configs, const RoadGraph& graph,
                               const FeatureMatrix& raw, std::size_t threads = 1);

}  // namespace a3t
