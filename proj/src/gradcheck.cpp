#include "a3t/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>

#include "a3t/data.hpp"
#include "a3t/error.hpp"
#include "a3t/graph.hpp"

namespace a3t {

namespace {

constexpr std::array k_ops{
    OpKind::matmul,   OpKind::add,         OpKind::sub,        OpKind::hadamard,
    OpKind::sigmoid,  OpKind::tanh,        OpKind::relu,       OpKind::scale,
    OpKind::add_row,  OpKind::concat_cols, OpKind::slice_cols, OpKind::reshape,
    OpKind::softmax,  OpKind::scale_rows,  OpKind::propagate,  OpKind::sum,
    OpKind::transpose,
};

using Rng = std::mt19937_64;

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(rows, cols);
  for (double& v : t.values()) {
    v = uniform(rng, lo, hi);
  }
  return t;
}

// <out, weights> as a 1x1 root. Recorded under the leaf kind so that a
// corrupted primitive only shows up in its own check.
Tensor project(const Tensor& out, const Tensor& weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    total += out.values()[i] * weights.values()[i];
  }
  Tensor value(1, 1, total);
  if (!out.tracked()) {
    return value;
  }
  const std::size_t node = out.node();
  return out.tape()->record(std::move(value), OpKind::leaf,
                            [node, weights](const Tensor& g, Tape& tape) {
                              tape.accumulate(node, scale(weights, g(0, 0)));
                            });
}

Tensor random_adjacency(Rng& rng, std::size_t n) {
  Tensor adj(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || uniform(rng, 0.0, 1.0) < 0.4) {
        adj(i, j) = adj(j, i) = uniform(rng, 0.5, 2.0);
      }
    }
  }
  return adj;
}

struct OpCase {
  std::vector<Tensor> inputs;
  std::vector<std::string> names;
  ScalarFn fn;
};

OpCase make_op_case(OpKind op, Rng& rng, std::size_t trial) {
  const std::size_t r = pick(rng, 1, 6);
  const std::size_t c = pick(rng, 1, 6);
  OpCase k;
  auto unary = [&](Tensor a, auto&& apply) {
    k.inputs = {std::move(a)};
    k.names = {"a"};
    k.fn = apply;
  };
  switch (op) {
    case OpKind::matmul: {
      const std::size_t inner = pick(rng, 1, 6);
      const Tensor w = random_tensor(rng, r, c);
      k.inputs = {random_tensor(rng, r, inner), random_tensor(rng, inner, c)};
      k.names = {"a", "b"};
      k.fn = [w](std::span<const Tensor> in) { return project(matmul(in[0], in[1]), w); };
      break;
    }
    case OpKind::add:
    case OpKind::sub:
    case OpKind::hadamard: {
      const Tensor w = random_tensor(rng, r, c);
      k.inputs = {random_tensor(rng, r, c), random_tensor(rng, r, c)};
      k.names = {"a", "b"};
      k.fn = [w, op](std::span<const Tensor> in) {
        const Tensor out = op == OpKind::add   ? add(in[0], in[1])
                           : op == OpKind::sub ? sub(in[0], in[1])
                                               : hadamard(in[0], in[1]);
        return project(out, w);
      };
      break;
    }
    case OpKind::sigmoid:
    case OpKind::tanh: {
      const Tensor w = random_tensor(rng, r, c);
      unary(random_tensor(rng, r, c, -3.0, 3.0), [w, op](std::span<const Tensor> in) {
        return project(op == OpKind::sigmoid ? sigmoid(in[0]) : tanh(in[0]), w);
      });
      break;
    }
    case OpKind::relu: {
      Tensor a = random_tensor(rng, r, c);
      for (double& v : a.values()) {
        if (std::abs(v) < 0.05) {
          v = v < 0.0 ? -0.5 : 0.5;
        }
      }
      const Tensor w = random_tensor(rng, r, c);
      unary(std::move(a), [w](std::span<const Tensor> in) { return project(relu(in[0]), w); });
      break;
    }
    case OpKind::scale: {
      const double factor = uniform(rng, -2.0, 2.0);
      const Tensor w = random_tensor(rng, r, c);
      unary(random_tensor(rng, r, c), [w, factor](std::span<const Tensor> in) {
        return project(scale(in[0], factor), w);
      });
      break;
    }
    case OpKind::add_row: {
      const Tensor w = random_tensor(rng, r, c);
      k.inputs = {random_tensor(rng, r, c), random_tensor(rng, 1, c)};
      k.names = {"a", "bias"};
      k.fn = [w](std::span<const Tensor> in) { return project(add_row(in[0], in[1]), w); };
      break;
    }
    case OpKind::concat_cols: {
      const std::size_t c2 = pick(rng, 1, 6);
      const Tensor w = random_tensor(rng, r, c + c2);
      k.inputs = {random_tensor(rng, r, c), random_tensor(rng, r, c2)};
      k.names = {"a", "b"};
      k.fn = [w](std::span<const Tensor> in) { return project(concat_cols(in[0], in[1]), w); };
      break;
    }
    case OpKind::slice_cols: {
      const std::size_t first = pick(rng, 0, c - 1);
      const std::size_t count = pick(rng, 1, c - first);
      const Tensor w = random_tensor(rng, r, count);
      unary(random_tensor(rng, r, c), [w, first, count](std::span<const Tensor> in) {
        return project(slice_cols(in[0], first, count), w);
      });
      break;
    }
    case OpKind::reshape: {
      const bool flat = trial % 2 == 0;
      const std::size_t rr = flat ? 1 : c;
      const std::size_t cc = flat ? r * c : r;
      const Tensor w = random_tensor(rng, rr, cc);
      unary(random_tensor(rng, r, c), [w, rr, cc](std::span<const Tensor> in) {
        return project(reshape(in[0], rr, cc), w);
      });
      break;
    }
    case OpKind::softmax: {
      if (trial % 2 == 0) {
        const Tensor w = random_tensor(rng, r, 1);
        unary(random_tensor(rng, r, 1, -3.0, 3.0), [w](std::span<const Tensor> in) {
          return project(softmax_vector(in[0]), w);
        });
      } else {
        const Tensor w = random_tensor(rng, r, c);
        unary(random_tensor(rng, r, c, -3.0, 3.0), [w](std::span<const Tensor> in) {
          return project(softmax_rows(in[0]), w);
        });
      }
      break;
    }
    case OpKind::scale_rows: {
      const Tensor w = random_tensor(rng, r, c);
      k.inputs = {random_tensor(rng, r, c), random_tensor(rng, r, 1)};
      k.names = {"x", "s"};
      k.fn = [w](std::span<const Tensor> in) { return project(scale_rows(in[0], in[1]), w); };
      break;
    }
    case OpKind::propagate: {
      const std::size_t n = pick(rng, 2, 5);
      const std::size_t blocks = pick(rng, 1, 3);
      const Tensor a_hat = normalize_adjacency(random_adjacency(rng, n));
      const Tensor w = random_tensor(rng, n * blocks, c);
      unary(random_tensor(rng, n * blocks, c), [w, a_hat](std::span<const Tensor> in) {
        return project(propagate(a_hat, in[0]), w);
      });
      break;
    }
    case OpKind::sum: {
      const Tensor w = random_tensor(rng, 1, 1);
      unary(random_tensor(rng, r, c), [w](std::span<const Tensor> in) { return project(sum(in[0]), w); });
      break;
    }
    case OpKind::transpose: {
      const Tensor w = random_tensor(rng, c, r);
      unary(random_tensor(rng, r, c),
            [w](std::span<const Tensor> in) { return project(transpose(in[0]), w); });
      break;
    }
    case OpKind::leaf:
      throw ContractError("check_op: leaves have no backward rule");
  }
  return k;
}

// A chain of primitives on one square-ish state, mixing in a second leaf.
OpCase make_composite(Rng& rng) {
  const std::size_t r = pick(rng, 1, 6);
  const std::size_t c = pick(rng, 1, 6);
  const std::size_t depth = pick(rng, 2, 6);
  std::vector<int> steps(depth);
  for (int& s : steps) {
    s = static_cast<int>(pick(rng, 0, 8));
  }
  const double factor = uniform(rng, -2.0, 2.0);
  const Tensor w = random_tensor(rng, r, c);
  OpCase k;
  k.inputs = {random_tensor(rng, r, c), random_tensor(rng, r, c), random_tensor(rng, c, c),
              random_tensor(rng, 1, c)};
  k.names = {"x", "y", "square", "bias"};
  k.fn = [steps, factor, w](std::span<const Tensor> in) {
    Tensor x = in[0];
    for (int s : steps) {
      switch (s) {
        case 0: x = add(x, in[1]); break;
        case 1: x = hadamard(x, in[1]); break;
        case 2: x = sigmoid(x); break;
        case 3: x = tanh(x); break;
        case 4: x = matmul(x, in[2]); break;
        case 5: x = add_row(x, in[3]); break;
        case 6: x = softmax_rows(x); break;
        case 7: x = scale(sub(x, in[1]), factor); break;
        default: x = transpose(transpose(x)); break;
      }
    }
    return project(x, w);
  };
  return k;
}

CheckResult run_cases(std::string subject, const GradcheckOptions& options,
                      const std::function<OpCase(Rng&, std::size_t)>& make, std::uint64_t salt) {
  CheckResult result;
  result.subject = std::move(subject);
  for (std::size_t trial = 0; trial < options.trials; ++trial) {
    Rng rng(options.seed * 0x100000001b3ULL + salt * 7919 + trial);
    const OpCase k = make(rng, trial);
    const std::vector<double> errors = gradient_errors(k.fn, k.inputs, options.step);
    for (std::size_t i = 0; i < errors.size(); ++i) {
      if (errors[i] > result.worst_error || result.worst_input.empty()) {
        result.worst_error = std::max(result.worst_error, errors[i]);
        result.worst_input = k.names[i];
      }
    }
    ++result.cases;
  }
  result.passed = result.worst_error < options.tolerance;
  return result;
}

ModelParams with_values(const ModelParams& like, std::span<const Tensor> values) {
  ModelParams out = like;
  auto entries = out.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    entries[i].value = values[i];
  }
  return out;
}

}  // namespace

std::vector<double> gradient_errors(const ScalarFn& f, std::span<const Tensor> inputs,
                                    double step) {
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    leaves.push_back(tape.watch(t));
  }
  const Tensor root = f(leaves);
  if (root.rows() != 1 || root.cols() != 1) {
    throw ContractError("gradient_errors: function must return a 1x1 tensor, got " +
                        root.shape_string());
  }
  const Gradients grads = tape.backward(root);

  std::vector<Tensor> probe;
  probe.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    probe.push_back(t.detached());
  }
  std::vector<double> errors(inputs.size(), 0.0);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = grads.wrt(leaves[i]);
    for (std::size_t k = 0; k < probe[i].size(); ++k) {
      const double original = probe[i].values()[k];
      probe[i].values()[k] = original + step;
      const double up = f(probe)(0, 0);
      probe[i].values()[k] = original - step;
      const double down = f(probe)(0, 0);
      probe[i].values()[k] = original;
      const double fd = (up - down) / (2.0 * step);
      const double err = std::abs(analytic.values()[k] - fd) / std::max(1.0, std::abs(fd));
      errors[i] = std::max(errors[i], err);
    }
  }
  return errors;
}

std::span<const OpKind> checked_ops() noexcept { return k_ops; }

CheckResult check_op(OpKind op, const GradcheckOptions& options) {
  return run_cases(std::string(op_name(op)), options,
                   [op](Rng& rng, std::size_t trial) { return make_op_case(op, rng, trial); },
                   static_cast<std::uint64_t>(op) + 1);
}

CheckResult check_composites(const GradcheckOptions& options) {
  return run_cases("composite", options, [](Rng& rng, std::size_t) { return make_composite(rng); },
                   1000);
}

CheckResult check_variant(ModelKind kind, const GradcheckOptions& options) {
  if (kind == ModelKind::ha) {
    throw ContractError("check_variant: the historical-average baseline has no parameters");
  }
  auto make = [kind](Rng& rng, std::size_t) {
    ModelShape shape;
    shape.kind = kind;
    shape.nodes = pick(rng, 2, 5);
    shape.history = pick(rng, 1, 4);
    shape.hidden = pick(rng, 1, 6);
    shape.horizon = pick(rng, 1, 2);
    shape.scorer_width = pick(rng, 1, 4);
    shape.gc_width = pick(rng, 1, 2);
    shape.per_gate_gc = pick(rng, 0, 1) == 1;
    shape.scorer_tanh = pick(rng, 0, 1) == 1;
    const std::size_t batch = pick(rng, 1, 2);
    const double lambda = uniform(rng, 0.0, 0.01);

    auto graph = std::make_shared<RoadGraph>(random_adjacency(rng, shape.nodes));
    ModelParams params = init_params(shape, rng());
    for (auto& e : params.entries()) {
      if (!e.regularized) {
        e.value = random_tensor(rng, e.value.rows(), e.value.cols(), -0.5, 0.5);
      }
    }
    const Tensor window = random_tensor(rng, batch * shape.nodes, shape.history, 0.0, 1.0);
    const Tensor target = random_tensor(rng, batch * shape.nodes, shape.horizon, 0.0, 1.0);

    OpCase k;
    for (const auto& e : params.entries()) {
      k.inputs.push_back(e.value);
      k.names.push_back(e.name);
    }
    k.fn = [graph, params, window, target, lambda](std::span<const Tensor> in) {
      const ModelParams p = with_values(params, in);
      return loss(target, forward(*graph, window, p), p, lambda);
    };
    return k;
  };
  return run_cases(std::string(to_string(kind)), options, make,
                   2000 + static_cast<std::uint64_t>(kind));
}

bool GradcheckReport::passed() const noexcept {
  return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.passed; });
}

void GradcheckReport::print(std::ostream& out) const {
  out << std::left << std::setw(12) << "check" << std::setw(7) << "cases" << std::setw(14)
      << "worst_error" << std::setw(14) << "at" << "status\n";
  for (const CheckResult& r : results) {
    std::ostringstream err;
    err << std::scientific << std::setprecision(3) << r.worst_error;
    out << std::setw(12) << r.subject << std::setw(7) << r.cases << std::setw(14) << err.str()
        << std::setw(14) << r.worst_input << (r.passed ? "ok" : "FAIL") << '\n';
  }
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  if (options.trials == 0) {
    throw ConfigError("gradcheck needs at least one trial");
  }
  GradcheckReport report;
  for (OpKind op : k_ops) {
    report.results.push_back(check_op(op, options));
  }
  report.results.push_back(check_composites(options));
  for (ModelKind kind : {ModelKind::gcn, ModelKind::gru, ModelKind::tgcn, ModelKind::a3tgcn}) {
    report.results.push_back(check_variant(kind, options));
  }
  return report;
}

}  // namespace a3t
