#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "a3t/model.hpp"
#include "a3t/tensor.hpp"

namespace a3t {

inline constexpr double k_fd_step = 1e-5;
inline constexpr double k_fd_tolerance = 1e-4;

/// Builds a 1x1 root from its inputs. Called once with tracked leaves and
/// repeatedly with plain tensors for the finite differences.
using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;

/// Worst |analytic - fd| / max(1, |fd|) for each input, central differences.
std::vector<double> gradient_errors(const ScalarFn& f, std::span<const Tensor> inputs,
                                    double step = k_fd_step);

struct CheckResult {
  std::string subject;      // op name, "composite", or model kind
  std::string worst_input;  // input or parameter carrying the worst error
  double worst_error = 0.0;
  std::size_t cases = 0;
  bool passed = true;
};

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t trials = 20;  // cases per op and composites per model variant
  double step = k_fd_step;
  double tolerance = k_fd_tolerance;
};

struct GradcheckReport {
  std::vector<CheckResult> results;

  bool passed() const noexcept;
  void print(std::ostream& out) const;
};

/// `trials` random cases of one primitive, shapes up to 6x6.
CheckResult check_op(OpKind op, const GradcheckOptions& options);
/// `trials` random chains of primitives, shapes up to 6x6.
CheckResult check_composites(const GradcheckOptions& options);
/// `trials` random instances (N <= 5, n <= 4, H <= 6, T <= 2) of the
/// regularized loss of one model variant; every parameter is checked.
CheckResult check_variant(ModelKind kind, const GradcheckOptions& options);

/// Every differentiable op, the composites, and gcn, gru, tgcn, a3tgcn.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

/// Ops covered by check_op.
std::span<const OpKind> checked_ops() noexcept;

}  // namespace a3t
