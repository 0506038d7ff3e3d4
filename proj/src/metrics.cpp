#include "a3t/metrics.hpp"

#include <cmath>

#include "a3t/csv.hpp"
#include "a3t/error.hpp"

namespace a3t {

MetricsReport evaluate(const Tensor& y_true, const Tensor& y_pred) {
  if (!y_true.same_shape(y_pred)) {
    throw ShapeError("evaluate: truth " + y_true.shape_string() + " vs prediction " +
                     y_pred.shape_string());
  }
  if (y_true.empty()) {
    throw ContractError("evaluate: no values");
  }
  const auto truth = y_true.values();
  const auto pred = y_pred.values();
  const auto count = static_cast<double>(truth.size());

  double sse = 0.0;
  double sae = 0.0;
  double truth_sq = 0.0;
  double truth_sum = 0.0;
  double resid_sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double r = truth[i] - pred[i];
    sse += r * r;
    sae += std::abs(r);
    truth_sq += truth[i] * truth[i];
    truth_sum += truth[i];
    resid_sum += r;
  }
  const double truth_mean = truth_sum / count;
  const double resid_mean = resid_sum / count;
  double sst = 0.0;
  double resid_var = 0.0;
  bool distinct = false;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = truth[i] - truth_mean;
    sst += d * d;
    const double e = (truth[i] - pred[i]) - resid_mean;
    resid_var += e * e;
    distinct = distinct || truth[i] != truth[0];
  }

  MetricsReport report;
  report.rmse = std::sqrt(sse / count);
  report.mae = sae / count;
  if (truth_sq > 0.0) {
    report.accuracy = 1.0 - std::sqrt(sse) / std::sqrt(truth_sq);
  }
  if (distinct && sst > 0.0) {
    report.r2 = 1.0 - sse / sst;
    report.explained_variance = 1.0 - (resid_var / count) / (sst / count);
  }
  return report;
}

std::string format_metric(std::optional<double> value) {
  return value ? format_double(*value) : std::string("n/a");
}

}  // namespace a3t
