#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "a3t/graph.hpp"
#include "a3t/tensor.hpp"

namespace a3t {

/// Time-by-node speed observations, one row per time step.
struct FeatureMatrix {
  Tensor values;  // M x N
  double scale_max = 1.0;
  bool normalized = false;

  std::size_t n_steps() const noexcept { return values.rows(); }
  std::size_t n_nodes() const noexcept { return values.cols(); }
};

/// Reads an M x N speed CSV. When `expected_nodes` is given, a different
/// column count raises ContractError naming both counts.
FeatureMatrix load_speed_matrix(const std::filesystem::path& path,
                                std::optional<std::size_t> expected_nodes = std::nullopt);

/// Rejects negative entries with DomainError (row/column in the message).
FeatureMatrix make_feature_matrix(Tensor values);

/// Divides by the global maximum. All-zero input raises DomainError.
FeatureMatrix normalize(const FeatureMatrix& raw);
/// Divides by a given scale, e.g. the one a checkpoint was trained with.
FeatureMatrix normalize_with(const FeatureMatrix& raw, double scale_max);
Tensor denormalize(const Tensor& normalized, double scale_max);

struct Sample {
  Tensor input;        // N x n, oldest column first
  Tensor target;       // N x T
  std::size_t start;   // first source row used by the input
};

struct WindowedDataset {
  std::vector<Sample> samples;
  std::size_t history = 0;
  std::size_t horizon = 0;

  std::size_t size() const noexcept { return samples.size(); }
};

/// Stride-1 windows: sample k reads rows [k, k+n) as input and
/// [k+n, k+n+horizon) as target, both transposed to node-major.
WindowedDataset make_windows(const FeatureMatrix& fm, std::size_t history, std::size_t horizon);

struct TrainTestSplit {
  WindowedDataset train;
  WindowedDataset test;
};

/// Chronological split: the first floor(count * fraction) samples train. The
/// next history + horizon - 2 samples are dropped so that no train target row
/// lies past the first input row of a test sample; the rest test.
TrainTestSplit split_train_test(const WindowedDataset& ds, double train_fraction);

/// Stacks the inputs (or targets) of the selected samples into (B*N) x cols.
Tensor stack_inputs(const WindowedDataset& ds, std::span<const std::size_t> indices);
Tensor stack_targets(const WindowedDataset& ds, std::span<const std::size_t> indices);

enum class NoiseKind { gaussian, poisson };

std::string_view to_string(NoiseKind kind) noexcept;
std::optional<NoiseKind> parse_noise_kind(std::string_view name) noexcept;

inline constexpr std::array<double, 5> k_gaussian_sigmas{0.2, 0.4, 0.8, 1.0, 2.0};
inline constexpr std::array<double, 5> k_poisson_lambdas{1.0, 2.0, 4.0, 8.0, 16.0};

/// Units of the [0,1]-rescaled noise matrix before it is added.
enum class NoiseUnit {
  raw,         // one unit = one raw speed unit (km/h), divided by scale_max on normalized data
  normalized,  // added directly to the [0,1] data
};

struct NoiseSpec {
  NoiseKind kind = NoiseKind::gaussian;
  double param = 0.2;  // sigma for gaussian, lambda for poisson
  std::uint64_t seed = 0;
  bool custom = false;  // allows a parameter outside the standard sweep grid
  NoiseUnit unit = NoiseUnit::raw;

  void validate() const;
};

/// Draws an M x N noise matrix, min-max rescales it to [0,1], adds it to the
/// normalized data and clips the sum to [0,1]. Deterministic given the seed.
FeatureMatrix add_noise(const FeatureMatrix& fm, const NoiseSpec& spec);

/// Ring where node i also links to i +/- chord_offset.
Tensor ring_with_chords(std::size_t n_nodes, std::size_t chord_offset);

struct SynthOptions {
  std::size_t n_nodes = 10;
  std::size_t n_steps = 2000;
  std::uint64_t seed = 0;
  double coupling = 0.5;    // weight of the neighbourhood mean in each update
  double noise_std = 1.0;   // km/h
  std::size_t period = 96;  // steps per day
  double mean_speed = 40.0;
  double amplitude = 15.0;
  std::size_t chord_offset = 2;
  /// When set, every node starts at this speed instead of its own sinusoid.
  std::optional<double> initial_speed;
};

struct SyntheticTraffic {
  RoadGraph graph;
  FeatureMatrix speeds;  // raw, not normalized
};

/// Per-node daily sinusoid b_i(t) whose phase advances around the ring, mixed
/// with graph diffusion: s(t+1) = (1-c) b(t+1) + c M s(t) + noise, where M is
/// the row-normalized A + I, i.e. the weighted neighbourhood mean.
SyntheticTraffic synth_traffic(const SynthOptions& options);
SyntheticTraffic synth_traffic(std::size_t n_nodes, std::size_t n_steps, std::uint64_t seed);

}  // namespace a3t
