#include "a3t/graph.hpp"

#include <cmath>

#include "a3t/csv.hpp"
#include "a3t/error.hpp"

namespace a3t {

namespace {

void check_entries(const Tensor& adjacency) {
  if (adjacency.rows() != adjacency.cols()) {
    throw ShapeError("adjacency must be square, got " + adjacency.shape_string());
  }
  for (std::size_t i = 0; i < adjacency.rows(); ++i) {
    for (std::size_t j = 0; j < adjacency.cols(); ++j) {
      const double v = adjacency(i, j);
      if (!std::isfinite(v) || v < 0.0) {
        throw DomainError("adjacency entry (" + std::to_string(i + 1) + ", " +
                          std::to_string(j + 1) + ") must be finite and non-negative");
      }
    }
  }
}

}  // namespace

Tensor normalize_adjacency(const Tensor& adjacency) {
  check_entries(adjacency);
  const std::size_t n = adjacency.rows();
  std::vector<double> degree(n, 1.0);  // self-loop
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      degree[i] += adjacency(i, j);
    }
  }
  Tensor out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double a_tilde = adjacency(i, j) + (i == j ? 1.0 : 0.0);
      // One square root of the product keeps regular graphs exact: 1/(d+1).
      out(i, j) = a_tilde / std::sqrt(degree[i] * degree[j]);
    }
  }
  return out;
}

RoadGraph::RoadGraph(Tensor adjacency) : adjacency_(adjacency.detached()) {
  check_entries(adjacency_);
  if (adjacency_.rows() == 0) {
    throw ContractError("road graph needs at least one node");
  }
  for (std::size_t i = 0; i < n_nodes(); ++i) {
    if (adjacency_(i, i) != 0.0) {
      throw DomainError("adjacency diagonal entry (" + std::to_string(i + 1) + ", " +
                        std::to_string(i + 1) + ") is nonzero; self-loops are added internally");
    }
    for (std::size_t j = 0; j < n_nodes(); ++j) {
      const double v = adjacency_(i, j);
      weighted_ = weighted_ || (v != 0.0 && v != 1.0);
      symmetric_ = symmetric_ && v == adjacency_(j, i);
    }
  }
  a_hat_ = normalize_adjacency(adjacency_);
}

RoadGraph load_adjacency(const std::filesystem::path& path) {
  Tensor raw = read_numeric_csv(path);
  if (raw.rows() != raw.cols()) {
    throw ParseError(path.string(), 0, 0,
                     "adjacency must be N x N, got " + raw.shape_string());
  }
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    for (std::size_t j = 0; j < raw.cols(); ++j) {
      if (raw(i, j) < 0.0) {
        throw DomainError(path.string() + ":" + std::to_string(i + 1) + ":" +
                          std::to_string(j + 1) + ": negative edge weight");
      }
    }
  }
  return RoadGraph(std::move(raw));
}

}  // namespace a3t
