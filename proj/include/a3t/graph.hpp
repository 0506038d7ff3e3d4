#pragma once

#include <cstddef>
#include <filesystem>

#include "a3t/tensor.hpp"

namespace a3t {

/// D^-1/2 (A + I) D^-1/2 with D_ii the row sums of A + I.
/// Throws ShapeError for non-square input and DomainError for negative or
/// non-finite entries.
Tensor normalize_adjacency(const Tensor& adjacency);

/// Road network with its propagation matrix computed once at construction.
/// Immutable afterwards.
class RoadGraph {
 public:
  /// Rejects non-square, negative, non-finite input and nonzero diagonals
  /// (self-loops are added internally).
  explicit RoadGraph(Tensor adjacency);

  std::size_t n_nodes() const noexcept { return adjacency_.rows(); }
  const Tensor& adjacency() const noexcept { return adjacency_; }
  const Tensor& a_hat() const noexcept { return a_hat_; }
  /// True when any edge weight differs from 0 and 1.
  bool weighted() const noexcept { return weighted_; }
  bool symmetric() const noexcept { return symmetric_; }

 private:
  Tensor adjacency_;
  Tensor a_hat_;
  bool weighted_ = false;
  bool symmetric_ = true;
};

/// Reads an N x N adjacency CSV (no header).
RoadGraph load_adjacency(const std::filesystem::path& path);

}  // namespace a3t
