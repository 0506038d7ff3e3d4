#include "a3t/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "a3t/csv.hpp"
#include "a3t/error.hpp"

namespace a3t {

FeatureMatrix make_feature_matrix(Tensor values) {
  for (std::size_t r = 0; r < values.rows(); ++r) {
    for (std::size_t c = 0; c < values.cols(); ++c) {
      if (values(r, c) < 0.0) {
        throw DomainError("negative speed at row " + std::to_string(r + 1) + ", column " +
                          std::to_string(c + 1));
      }
    }
  }
  return FeatureMatrix{values.detached(), 1.0, false};
}

FeatureMatrix load_speed_matrix(const std::filesystem::path& path,
                                std::optional<std::size_t> expected_nodes) {
  Tensor raw = read_numeric_csv(path);
  if (expected_nodes && raw.cols() != *expected_nodes) {
    throw ContractError(path.string() + ": speed matrix has " + std::to_string(raw.cols()) +
                        " nodes but the graph has " + std::to_string(*expected_nodes));
  }
  try {
    return make_feature_matrix(std::move(raw));
  } catch (const DomainError& e) {
    throw DomainError(path.string() + ": " + e.what());
  }
}

FeatureMatrix normalize_with(const FeatureMatrix& raw, double scale_max) {
  if (!(scale_max > 0.0) || !std::isfinite(scale_max)) {
    throw DomainError("normalize: scale must be positive and finite");
  }
  FeatureMatrix out{scale(raw.values, 1.0 / scale_max), scale_max, true};
  return out;
}

FeatureMatrix normalize(const FeatureMatrix& raw) {
  double peak = 0.0;
  for (double v : raw.values.values()) {
    peak = std::max(peak, v);
  }
  if (!(peak > 0.0)) {
    throw DomainError("normalize: matrix maximum is zero, scale is degenerate");
  }
  return normalize_with(raw, peak);
}

Tensor denormalize(const Tensor& normalized, double scale_max) {
  return scale(normalized, scale_max);
}

WindowedDataset make_windows(const FeatureMatrix& fm, std::size_t history, std::size_t horizon) {
  if (history == 0 || horizon == 0) {
    throw ContractError("make_windows: history and horizon must be positive");
  }
  const std::size_t m = fm.n_steps();
  if (m < history + horizon) {
    throw ContractError("make_windows: " + std::to_string(m) + " steps cannot hold history " +
                        std::to_string(history) + " plus horizon " + std::to_string(horizon));
  }
  const std::size_t n_nodes = fm.n_nodes();
  WindowedDataset ds;
  ds.history = history;
  ds.horizon = horizon;
  const std::size_t count = m - history - horizon + 1;
  ds.samples.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Sample s{Tensor(n_nodes, history), Tensor(n_nodes, horizon), k};
    for (std::size_t node = 0; node < n_nodes; ++node) {
      for (std::size_t j = 0; j < history; ++j) {
        s.input(node, j) = fm.values(k + j, node);
      }
      for (std::size_t j = 0; j < horizon; ++j) {
        s.target(node, j) = fm.values(k + history + j, node);
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

TrainTestSplit split_train_test(const WindowedDataset& ds, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ContractError("split_train_test: fraction must lie strictly between 0 and 1");
  }
  const auto n_train =
      static_cast<std::size_t>(std::floor(static_cast<double>(ds.size()) * train_fraction));
  if (n_train == 0 || n_train >= ds.size()) {
    throw ContractError("split_train_test: " + std::to_string(ds.size()) +
                        " samples at fraction " + format_double(train_fraction) +
                        " leave one side empty");
  }
  // Overlapping windows: skip the test samples whose input would start before
  // the last train target row.
  const std::size_t gap = ds.history + ds.horizon - 2;
  const std::size_t test_begin = n_train + gap;
  if (test_begin >= ds.size()) {
    throw ContractError("split_train_test: " + std::to_string(ds.size()) +
                        " samples at fraction " + format_double(train_fraction) +
                        " leave no test sample after the " + std::to_string(gap) +
                        "-sample gap");
  }
  TrainTestSplit out;
  out.train.history = out.test.history = ds.history;
  out.train.horizon = out.test.horizon = ds.horizon;
  out.train.samples.assign(ds.samples.begin(), ds.samples.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test.samples.assign(ds.samples.begin() + static_cast<std::ptrdiff_t>(test_begin), ds.samples.end());
  return out;
}

namespace {

Tensor stack(const WindowedDataset& ds, std::span<const std::size_t> indices, bool inputs) {
  if (indices.empty()) {
    throw ContractError("cannot stack an empty batch");
  }
  const Tensor& first = inputs ? ds.samples.at(indices[0]).input : ds.samples.at(indices[0]).target;
  const std::size_t rows = first.rows();
  const std::size_t cols = first.cols();
  Tensor out(rows * indices.size(), cols);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Sample& s = ds.samples.at(indices[b]);
    const Tensor& src = inputs ? s.input : s.target;
    std::copy(src.values().begin(), src.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(b * rows * cols));
  }
  return out;
}

}  // namespace

Tensor stack_inputs(const WindowedDataset& ds, std::span<const std::size_t> indices) {
  return stack(ds, indices, true);
}

Tensor stack_targets(const WindowedDataset& ds, std::span<const std::size_t> indices) {
  return stack(ds, indices, false);
}

// ---------------------------------------------------------------- noise

std::string_view to_string(NoiseKind kind) noexcept {
  return kind == NoiseKind::gaussian ? "gaussian" : "poisson";
}

std::optional<NoiseKind> parse_noise_kind(std::string_view name) noexcept {
  if (name == "gaussian") {
    return NoiseKind::gaussian;
  }
  if (name == "poisson") {
    return NoiseKind::poisson;
  }
  return std::nullopt;
}

void NoiseSpec::validate() const {
  if (!(param > 0.0) || !std::isfinite(param)) {
    throw DomainError(std::string(kind == NoiseKind::gaussian ? "sigma" : "lambda") +
                      " must be positive, got " + format_double(param));
  }
  if (custom) {
    return;
  }
  const auto& grid = kind == NoiseKind::gaussian ? k_gaussian_sigmas : k_poisson_lambdas;
  if (std::find(grid.begin(), grid.end(), param) == grid.end()) {
    throw DomainError(format_double(param) + " is not on the " + std::string(to_string(kind)) +
                      " sweep grid; mark the spec custom to use it");
  }
}

FeatureMatrix add_noise(const FeatureMatrix& fm, const NoiseSpec& spec) {
  spec.validate();
  if (!fm.normalized) {
    throw ContractError("add_noise expects normalized data");
  }
  Tensor noise(fm.n_steps(), fm.n_nodes());
  std::mt19937_64 rng(spec.seed);
  if (spec.kind == NoiseKind::gaussian) {
    std::normal_distribution<double> dist(0.0, spec.param);
    for (double& v : noise.values()) {
      v = dist(rng);
    }
  } else {
    std::poisson_distribution<long> dist(spec.param);
    for (double& v : noise.values()) {
      v = static_cast<double>(dist(rng));
    }
  }
  const auto [lo, hi] = std::minmax_element(noise.values().begin(), noise.values().end());
  const double low = noise.empty() ? 0.0 : *lo;
  const double range = noise.empty() ? 0.0 : *hi - *lo;
  const double unit = spec.unit == NoiseUnit::raw ? 1.0 / fm.scale_max : 1.0;

  FeatureMatrix out = fm;
  auto dst = out.values.values();
  auto src = noise.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const double rescaled = range > 0.0 ? (src[i] - low) / range : 0.0;
    dst[i] = std::clamp(dst[i] + rescaled * unit, 0.0, 1.0);
  }
  return out;
}

// ---------------------------------------------------------------- synthetic data

Tensor ring_with_chords(std::size_t n_nodes, std::size_t chord_offset) {
  Tensor adj(n_nodes, n_nodes);
  auto link = [&](std::size_t i, std::size_t offset) {
    const std::size_t j = (i + offset) % n_nodes;
    if (j != i) {
      adj(i, j) = 1.0;
      adj(j, i) = 1.0;
    }
  };
  for (std::size_t i = 0; i < n_nodes; ++i) {
    link(i, 1);
    if (chord_offset > 1 && n_nodes > 2) {
      link(i, chord_offset);
    }
  }
  return adj;
}

SyntheticTraffic synth_traffic(const SynthOptions& o) {
  if (o.n_nodes < 2 || o.n_steps < 100) {
    throw ContractError("synth_traffic needs at least 2 nodes and 100 steps");
  }
  if (o.period == 0 || o.coupling < 0.0 || o.coupling > 1.0 || o.noise_std < 0.0) {
    throw ContractError("synth_traffic: period must be positive, coupling in [0,1], noise >= 0");
  }
  RoadGraph graph(ring_with_chords(o.n_nodes, o.chord_offset));
  const std::size_t n = o.n_nodes;

  // Row-normalized A + I: each row is a weighted neighbourhood mean.
  Tensor mean_op(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double row_total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row_total += graph.a_hat()(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) {
      mean_op(i, j) = graph.a_hat()(i, j) / row_total;
    }
  }

  const double two_pi = 2.0 * std::numbers::pi;
  auto base = [&](std::size_t t, std::size_t i) {
    const double phase = two_pi * static_cast<double>(i) / static_cast<double>(n);
    return o.mean_speed +
           o.amplitude * std::sin(two_pi * static_cast<double>(t) / static_cast<double>(o.period) + phase);
  };

  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Tensor speeds(o.n_steps, n);
  for (std::size_t i = 0; i < n; ++i) {
    speeds(0, i) = o.initial_speed ? *o.initial_speed : base(0, i);
  }
  std::vector<double> mixed(n);
  for (std::size_t t = 0; t + 1 < o.n_steps; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        acc += mean_op(i, j) * speeds(t, j);
      }
      mixed[i] = acc;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double eps = o.noise_std > 0.0 ? o.noise_std * noise(rng) : 0.0;
      const double next = (1.0 - o.coupling) * base(t + 1, i) + o.coupling * mixed[i] + eps;
      speeds(t + 1, i) = std::max(0.0, next);
    }
  }
  return SyntheticTraffic{std::move(graph), make_feature_matrix(std::move(speeds))};
}

SyntheticTraffic synth_traffic(std::size_t n_nodes, std::size_t n_steps, std::uint64_t seed) {
  SynthOptions o;
  o.n_nodes = n_nodes;
  o.n_steps = n_steps;
  o.seed = seed;
  return synth_traffic(o);
}

}  // namespace a3t
