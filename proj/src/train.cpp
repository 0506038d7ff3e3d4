#include "a3t/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "a3t/csv.hpp"
#include "a3t/error.hpp"

namespace a3t {

namespace {

constexpr std::size_t k_eval_chunk = 256;

// Shuffling draws from a stream separate from parameter initialization.
constexpr std::uint64_t k_shuffle_salt = 0x9e3779b97f4a7c15ULL;

std::vector<Tensor> regularized(const ModelParams& p) {
  std::vector<Tensor> out;
  for (const auto& e : p.entries()) {
    if (e.regularized) {
      out.push_back(e.value);
    }
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be positive");
  }
  if (hidden_units == 0 || history_n == 0 || horizon_t == 0 || batch_size == 0 ||
      eval_every == 0 || scorer_width == 0 || gc_width == 0) {
    throw ConfigError("hidden, history, horizon, batch size, eval stride, scorer width and "
                      "gc width must be positive");
  }
  if (!(lambda_reg >= 0.0) || !std::isfinite(lambda_reg)) {
    throw ConfigError("lambda_reg must be non-negative");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("train fraction must lie strictly between 0 and 1");
  }
}

ModelShape TrainConfig::model_shape(std::size_t n_nodes) const {
  ModelShape s;
  s.kind = model_kind;
  s.nodes = n_nodes;
  s.history = history_n;
  s.hidden = hidden_units;
  s.horizon = horizon_t;
  s.scorer_width = scorer_width;
  s.gc_width = gc_width;
  s.per_gate_gc = per_gate_gc;
  s.scorer_tanh = scorer_tanh;
  return s;
}

PreparedData prepare_data(const FeatureMatrix& raw, std::size_t history, std::size_t horizon,
                          double train_fraction, std::optional<double> scale) {
  const FeatureMatrix normalized = scale ? normalize_with(raw, *scale) : normalize(raw);
  PreparedData out;
  out.split = split_train_test(make_windows(normalized, history, horizon), train_fraction);
  out.scale_max = normalized.scale_max;
  out.n_nodes = raw.n_nodes();
  return out;
}

Tensor baseline_ha(const Tensor& window, std::size_t horizon) {
  if (window.cols() == 0) {
    throw ContractError("baseline_ha: empty window");
  }
  Tensor out(window.rows(), horizon);
  for (std::size_t r = 0; r < window.rows(); ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < window.cols(); ++c) {
      total += window(r, c);
    }
    const double mean = total / static_cast<double>(window.cols());
    for (std::size_t t = 0; t < horizon; ++t) {
      out(r, t) = mean;
    }
  }
  return out;
}

// ---------------------------------------------------------------- Adam

AdamState::AdamState(const ModelParams& params) {
  for (const auto& e : params.entries()) {
    first_moment.emplace_back(e.value.rows(), e.value.cols());
    second_moment.emplace_back(e.value.rows(), e.value.cols());
  }
}

void adam_step(ModelParams& params, std::span<const Tensor> grads, AdamState& state, double lr) {
  auto entries = params.entries();
  if (grads.size() != entries.size() || state.first_moment.size() != entries.size()) {
    throw ShapeError("adam_step: " + std::to_string(entries.size()) + " parameters, " +
                     std::to_string(grads.size()) + " gradients, " +
                     std::to_string(state.first_moment.size()) + " moment slots");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(k_adam_beta1, t);
  const double correction2 = 1.0 - std::pow(k_adam_beta2, t);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor& p = entries[i].value;
    const Tensor& g = grads[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    if (!p.same_shape(g) || !p.same_shape(m)) {
      throw ShapeError("adam_step: parameter " + entries[i].name + " " + p.shape_string() +
                       " vs gradient " + g.shape_string());
    }
    auto pv = p.values();
    auto gv = g.values();
    auto mv = m.values();
    auto vv = v.values();
    for (std::size_t k = 0; k < pv.size(); ++k) {
      mv[k] = k_adam_beta1 * mv[k] + (1.0 - k_adam_beta1) * gv[k];
      vv[k] = k_adam_beta2 * vv[k] + (1.0 - k_adam_beta2) * gv[k] * gv[k];
      const double m_hat = mv[k] / correction1;
      const double v_hat = vv[k] / correction2;
      pv[k] -= lr * m_hat / (std::sqrt(v_hat) + k_adam_epsilon);
    }
  }
}

// ---------------------------------------------------------------- evaluation

Tensor predict(const RoadGraph& graph, const ModelParams& params, const WindowedDataset& ds) {
  const std::size_t n_nodes = graph.n_nodes();
  const std::size_t width = n_nodes * ds.horizon;
  Tensor out(ds.size(), width);
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < ds.size(); begin += k_eval_chunk) {
    const std::size_t end = std::min(ds.size(), begin + k_eval_chunk);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const Tensor x = stack_inputs(ds, idx);
    const Tensor y = params.shape().kind == ModelKind::ha ? baseline_ha(x, ds.horizon)
                                                          : forward(graph, x, params);
    if (y.cols() != ds.horizon) {
      throw ShapeError("model predicts " + std::to_string(y.cols()) + " steps, dataset horizon is " +
                       std::to_string(ds.horizon));
    }
    std::copy(y.values().begin(), y.values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(begin * width));
  }
  return out;
}

Tensor targets(const WindowedDataset& ds) {
  if (ds.samples.empty()) {
    return Tensor();
  }
  const std::size_t width = ds.samples.front().target.size();
  Tensor out(ds.size(), width);
  for (std::size_t k = 0; k < ds.size(); ++k) {
    const auto& t = ds.samples[k].target.values();
    std::copy(t.begin(), t.end(), out.values().begin() + static_cast<std::ptrdiff_t>(k * width));
  }
  return out;
}

MetricsReport evaluate_model(const RoadGraph& graph, const ModelParams& params,
                             const WindowedDataset& ds, double scale_max) {
  return evaluate(denormalize(targets(ds), scale_max),
                  denormalize(predict(graph, params, ds), scale_max));
}

// ---------------------------------------------------------------- training

TrainResult train(const TrainConfig& config, const RoadGraph& graph, const PreparedData& data) {
  config.validate();
  if (data.n_nodes != graph.n_nodes()) {
    throw ContractError("data has " + std::to_string(data.n_nodes) + " nodes, graph has " +
                        std::to_string(graph.n_nodes()));
  }
  const WindowedDataset& train_set = data.split.train;
  const WindowedDataset& test_set = data.split.test;
  if (train_set.history != config.history_n || train_set.horizon != config.horizon_t) {
    throw ConfigError("prepared windows (n=" + std::to_string(train_set.history) + ", T=" +
                      std::to_string(train_set.horizon) + ") do not match the config");
  }

  TrainResult result;
  const ModelShape shape = config.model_shape(graph.n_nodes());
  if (config.model_kind == ModelKind::ha) {
    result.params = ModelParams(shape);
    result.best = evaluate_model(graph, result.params, test_set, data.scale_max);
    return result;
  }

  ModelParams params = init_params(shape, config.seed);
  result.params = params;
  if (config.epochs == 0) {
    result.best = evaluate_model(graph, params, test_set, data.scale_max);
    return result;
  }

  AdamState adam(params);
  std::mt19937_64 shuffle_rng(config.seed ^ k_shuffle_salt);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Tensor> grads(params.entries().size());
  bool have_best = false;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_total = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);

      Tape tape;
      const ModelParams tracked = params.watched(tape);
      const Tensor pred = forward(graph, stack_inputs(train_set, batch), tracked);
      const Tensor objective =
          loss(stack_targets(train_set, batch), pred, regularized(tracked), config.lambda_reg);
      const double value = objective(0, 0);
      if (!std::isfinite(value)) {
        throw TrainingDiverged(epoch, batch_no + 1, value);
      }
      const Gradients g = tape.backward(objective);
      for (std::size_t i = 0; i < grads.size(); ++i) {
        grads[i] = g.wrt(tracked.entries()[i].value);
      }
      adam_step(params, grads, adam, config.learning_rate);
      loss_total += value * static_cast<double>(batch.size());
    }
    const double epoch_loss = loss_total / static_cast<double>(order.size());
    result.history.epoch_loss.push_back(epoch_loss);

    if (epoch % config.eval_every == 0 || epoch == config.epochs) {
      const MetricsReport m = evaluate_model(graph, params, test_set, data.scale_max);
      result.history.evals.push_back({epoch, epoch_loss, m});
      if (!have_best || m.rmse < result.best.rmse) {
        have_best = true;
        result.best = m;
        result.best_epoch = epoch;
        result.params = params;
      }
    }
  }
  return result;
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << "epoch,train_loss,test_rmse,test_mae,test_accuracy,test_r2,test_var\n";
  for (const EvalRow& row : history.evals) {
    out << row.epoch << ',' << format_double(row.train_loss) << ','
        << format_double(row.test.rmse) << ',' << format_double(row.test.mae) << ','
        << format_metric(row.test.accuracy) << ',' << format_metric(row.test.r2) << ','
        << format_metric(row.test.explained_variance) << '\n';
  }
}

// ---------------------------------------------------------------- comparison

const MetricsReport& ComparisonTable::at(ModelKind model, std::size_t horizon) const {
  for (const ComparisonEntry& e : entries) {
    if (e.model == model && e.horizon == horizon) {
      return e.metrics;
    }
  }
  throw ContractError("comparison has no entry for " + std::string(to_string(model)) +
                      " at horizon " + std::to_string(horizon));
}

namespace {

struct MetricColumn {
  const char* name;
  std::optional<double> (*get)(const MetricsReport&);
};

constexpr MetricColumn k_metric_columns[] = {
    {"rmse", [](const MetricsReport& m) -> std::optional<double> { return m.rmse; }},
    {"mae", [](const MetricsReport& m) -> std::optional<double> { return m.mae; }},
    {"accuracy", [](const MetricsReport& m) { return m.accuracy; }},
    {"r2", [](const MetricsReport& m) { return m.r2; }},
    {"var", [](const MetricsReport& m) { return m.explained_variance; }},
};

}  // namespace

void ComparisonTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  out << "horizon,metric";
  for (ModelKind m : models) {
    out << ',' << to_string(m);
  }
  out << '\n';
  for (std::size_t h : horizons) {
    for (const MetricColumn& col : k_metric_columns) {
      out << h << ',' << col.name;
      for (ModelKind m : models) {
        out << ',' << format_metric(col.get(at(m, h)));
      }
      out << '\n';
    }
  }
}

void ComparisonTable::print(std::ostream& out) const {
  out << std::left << std::setw(8) << "T" << std::setw(10) << "metric";
  for (ModelKind m : models) {
    out << std::setw(12) << to_string(m);
  }
  out << '\n';
  for (std::size_t h : horizons) {
    for (const MetricColumn& col : k_metric_columns) {
      out << std::setw(8) << h << std::setw(10) << col.name;
      for (ModelKind m : models) {
        const auto v = col.get(at(m, h));
        std::ostringstream cell;
        if (v) {
          cell << std::fixed << std::setprecision(4) << *v;
        } else {
          cell << "n/a";
        }
        out << std::setw(12) << cell.str();
      }
      out << '\n';
    }
  }
}

ComparisonTable compare_models(std::span<const TrainConfig> configs, const RoadGraph& graph,
                               const FeatureMatrix& raw, std::size_t threads) {
  if (configs.empty()) {
    throw ConfigError("compare_models: no configurations");
  }
  for (const TrainConfig& c : configs) {
    c.validate();
    if (c.history_n != configs[0].history_n || c.train_fraction != configs[0].train_fraction) {
      throw ConfigError("compare_models: configurations must share history length and split");
    }
  }
  ComparisonTable table;
  for (const TrainConfig& c : configs) {
    if (std::find(table.models.begin(), table.models.end(), c.model_kind) == table.models.end()) {
      table.models.push_back(c.model_kind);
    }
    if (std::find(table.horizons.begin(), table.horizons.end(), c.horizon_t) == table.horizons.end()) {
      table.horizons.push_back(c.horizon_t);
    }
  }

  std::vector<PreparedData> prepared;
  for (std::size_t h : table.horizons) {
    prepared.push_back(prepare_data(raw, configs[0].history_n, h, configs[0].train_fraction));
  }
  auto data_for = [&](std::size_t horizon) -> const PreparedData& {
    const auto it = std::find(table.horizons.begin(), table.horizons.end(), horizon);
    return prepared[static_cast<std::size_t>(it - table.horizons.begin())];
  };

  table.entries.resize(configs.size());
  auto run = [&](std::size_t i) {
    const TrainConfig& c = configs[i];
    table.entries[i] = {c.model_kind, c.horizon_t, train(c, graph, data_for(c.horizon_t)).best};
  };
  const std::size_t workers = std::max<std::size_t>(1, threads);
  for (std::size_t begin = 0; begin < configs.size(); begin += workers) {
    const std::size_t end = std::min(configs.size(), begin + workers);
    if (workers == 1) {
      run(begin);
      continue;
    }
    std::vector<std::future<void>> pending;
    for (std::size_t i = begin; i < end; ++i) {
      pending.push_back(std::async(std::launch::async, run, i));
    }
    for (auto& f : pending) {
      f.get();
    }
  }
  return table;
}

}  // namespace a3t
