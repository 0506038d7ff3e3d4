#pragma once

#include <optional>
#include <string>

#include "a3t/tensor.hpp"

namespace a3t {

/// Regression scores of one evaluation run. Entries that are undefined for
/// the given truth (zero norm, zero variance) are empty and print as "n/a".
struct MetricsReport {
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> accuracy;            // 1 - |Y - Yhat|_F / |Y|_F
  std::optional<double> r2;                  // 1 - SSE / SST around the global mean
  std::optional<double> explained_variance;  // 1 - Var(Y - Yhat) / Var(Y)

  bool operator==(const MetricsReport&) const = default;
};

/// y_true and y_pred hold one sample per row, already on the original scale.
MetricsReport evaluate(const Tensor& y_true, const Tensor& y_pred);

std::string format_metric(std::optional<double> value);

}  // namespace a3t
