#include "a3t/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "a3t/error.hpp"

namespace a3t {

namespace {

struct Slot {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  bool regularized;
};

void add_gate_slots(std::vector<Slot>& out, std::size_t input_width, std::size_t hidden) {
  const std::size_t rows = input_width + hidden;
  out.push_back({"gate_u_w", rows, hidden, true});
  out.push_back({"gate_u_b", 1, hidden, false});
  out.push_back({"gate_r_w", rows, hidden, true});
  out.push_back({"gate_r_b", 1, hidden, false});
  out.push_back({"cand_w", rows, hidden, true});
  out.push_back({"cand_b", 1, hidden, false});
}

std::vector<Slot> layout(const ModelShape& s) {
  std::vector<Slot> out;
  switch (s.kind) {
    case ModelKind::ha:
      break;
    case ModelKind::gcn:
      out.push_back({"gcn_w0", s.history, s.hidden, true});
      out.push_back({"gcn_w1", s.hidden, s.horizon, true});
      break;
    case ModelKind::gru:
      add_gate_slots(out, 1, s.hidden);
      out.push_back({"out_w", s.hidden, s.horizon, true});
      out.push_back({"out_b", 1, s.horizon, false});
      break;
    case ModelKind::tgcn:
    case ModelKind::a3tgcn:
      if (s.per_gate_gc) {
        out.push_back({"gc_w_u", 1, s.gc_width, true});
        out.push_back({"gc_w_r", 1, s.gc_width, true});
        out.push_back({"gc_w_c", 1, s.gc_width, true});
      } else {
        out.push_back({"gc_w", 1, s.gc_width, true});
      }
      add_gate_slots(out, s.gc_width, s.hidden);
      if (s.kind == ModelKind::a3tgcn) {
        out.push_back({"attn_w1", s.nodes * s.hidden, s.scorer_width, true});
        out.push_back({"attn_b1", 1, s.scorer_width, false});
        out.push_back({"attn_w2", s.scorer_width, 1, true});
        out.push_back({"attn_b2", 1, 1, false});
      }
      out.push_back({"out_w", s.hidden, s.horizon, true});
      out.push_back({"out_b", 1, s.horizon, false});
      break;
  }
  return out;
}

std::size_t batch_count(const Tensor& x, std::size_t nodes) {
  if (nodes == 0 || x.rows() % nodes != 0 || x.rows() == 0) {
    throw ShapeError("input " + x.shape_string() + " does not stack whole graphs of " +
                     std::to_string(nodes) + " nodes");
  }
  return x.rows() / nodes;
}

// u = s(W_u[x,h]+b_u); r = s(W_r[x,h]+b_r); c = tanh(W_c[x, r*h]+b_c);
// h' = u*h + (1-u)*c. The gate inputs x_u, x_r, x_c may differ when each
// gate has its own graph convolution.
Tensor gated_update(const Tensor& x_u, const Tensor& x_r, const Tensor& x_c, const Tensor& h_prev,
                    const ModelParams& p) {
  const std::size_t hidden = p.shape().hidden;
  if (h_prev.cols() != hidden || h_prev.rows() != x_u.rows()) {
    throw ShapeError("recurrent cell: hidden state " + h_prev.shape_string() +
                     " does not match input " + x_u.shape_string() + " with H = " +
                     std::to_string(hidden));
  }
  const Tensor u = sigmoid(add_row(matmul(concat_cols(x_u, h_prev), p.at("gate_u_w")), p.at("gate_u_b")));
  const Tensor r = sigmoid(add_row(matmul(concat_cols(x_r, h_prev), p.at("gate_r_w")), p.at("gate_r_b")));
  const Tensor c = tanh(add_row(matmul(concat_cols(x_c, hadamard(r, h_prev)), p.at("cand_w")),
                                p.at("cand_b")));
  const Tensor ones(u.rows(), u.cols(), 1.0);
  return add(hadamard(u, h_prev), hadamard(sub(ones, u), c));
}

Tensor output_head(const Tensor& features, const ModelParams& p) {
  return add_row(matmul(features, p.at("out_w")), p.at("out_b"));
}

void require_kind(const ModelParams& p, std::initializer_list<ModelKind> kinds, const char* op) {
  for (ModelKind k : kinds) {
    if (p.shape().kind == k) {
      return;
    }
  }
  throw ContractError(std::string(op) + ": not defined for model kind " +
                      std::string(to_string(p.shape().kind)));
}

}  // namespace

std::string_view to_string(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::ha:
      return "ha";
    case ModelKind::gcn:
      return "gcn";
    case ModelKind::gru:
      return "gru";
    case ModelKind::tgcn:
      return "tgcn";
    case ModelKind::a3tgcn:
      return "a3tgcn";
  }
  return "?";
}

std::optional<ModelKind> parse_model_kind(std::string_view name) noexcept {
  for (ModelKind k : {ModelKind::ha, ModelKind::gcn, ModelKind::gru, ModelKind::tgcn,
                      ModelKind::a3tgcn}) {
    if (to_string(k) == name) {
      return k;
    }
  }
  return std::nullopt;
}

void ModelShape::validate() const {
  if (nodes == 0 || history == 0 || hidden == 0 || horizon == 0 || scorer_width == 0 ||
      gc_width == 0) {
    throw ConfigError("model shape: nodes, history, hidden, horizon, scorer_width and gc_width "
                      "must all be positive");
  }
}

// ---------------------------------------------------------------- ModelParams

ModelParams::ModelParams(const ModelShape& shape) : shape_(shape) {
  shape_.validate();
  for (const Slot& s : layout(shape_)) {
    entries_.push_back({s.name, Tensor(s.rows, s.cols), s.regularized});
  }
}

const Tensor& ModelParams::at(std::string_view name) const {
  for (const Entry& e : entries_) {
    if (e.name == name) {
      return e.value;
    }
  }
  throw ContractError("model " + std::string(to_string(shape_.kind)) + " has no parameter '" +
                      std::string(name) + "'");
}

Tensor& ModelParams::at(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

bool ModelParams::contains(std::string_view name) const noexcept {
  for (const Entry& e : entries_) {
    if (e.name == name) {
      return true;
    }
  }
  return false;
}

std::size_t ModelParams::parameter_count() const noexcept {
  std::size_t total = 0;
  for (const Entry& e : entries_) {
    total += e.value.size();
  }
  return total;
}

std::string ModelParams::describe() const {
  std::ostringstream out;
  out << to_string(shape_.kind) << " N=" << shape_.nodes << " n=" << shape_.history
      << " H=" << shape_.hidden << " T=" << shape_.horizon << '\n';
  for (const Entry& e : entries_) {
    out << "  " << e.name << ' ' << e.value.shape_string() << (e.regularized ? "" : " (bias)")
        << '\n';
  }
  out << "  total " << parameter_count() << " parameters\n";
  return out.str();
}

ModelParams ModelParams::watched(Tape& tape) const {
  ModelParams out = *this;
  for (Entry& e : out.entries_) {
    e.value = tape.watch(e.value);
  }
  return out;
}

ModelParams ModelParams::detached() const {
  ModelParams out = *this;
  for (Entry& e : out.entries_) {
    e.value = e.value.detached();
  }
  return out;
}

void ModelParams::check_shapes() const {
  shape_.validate();
  const std::vector<Slot> expected = layout(shape_);
  if (expected.size() != entries_.size()) {
    throw ShapeError("model " + std::string(to_string(shape_.kind)) + " expects " +
                     std::to_string(expected.size()) + " tensors, found " +
                     std::to_string(entries_.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const Slot& s = expected[i];
    const Entry& e = entries_[i];
    if (e.name != s.name || e.value.rows() != s.rows || e.value.cols() != s.cols) {
      throw ShapeError("parameter " + e.name + " " + e.value.shape_string() + " does not match " +
                       s.name + " [" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + "]");
    }
  }
}

ModelParams init_params(const ModelShape& shape, std::uint64_t seed) {
  ModelParams params(shape);
  std::mt19937_64 rng(seed);
  for (auto& e : params.entries()) {
    if (!e.regularized) {
      continue;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(e.value.rows()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : e.value.values()) {
      v = dist(rng);
    }
  }
  return params;
}

// ---------------------------------------------------------------- forward passes

Tensor graph_conv(const RoadGraph& graph, const Tensor& x, const Tensor& weight) {
  if (x.cols() != weight.rows()) {
    throw ShapeError("graph_conv: features " + x.shape_string() + " vs weight " +
                     weight.shape_string());
  }
  batch_count(x, graph.n_nodes());
  return matmul(propagate(graph.a_hat(), x), weight);
}

Tensor gcn_forward(const RoadGraph& graph, const Tensor& x, const ModelParams& params) {
  require_kind(params, {ModelKind::gcn}, "gcn_forward");
  if (x.cols() != params.shape().history) {
    throw ShapeError("gcn_forward: input " + x.shape_string() + " needs " +
                     std::to_string(params.shape().history) + " columns");
  }
  const Tensor hidden = relu(graph_conv(graph, x, params.at("gcn_w0")));
  return graph_conv(graph, hidden, params.at("gcn_w1"));
}

Tensor gru_cell(const Tensor& x_t, const Tensor& h_prev, const ModelParams& params) {
  if (x_t.cols() != 1) {
    throw ShapeError("gru_cell: input must have one column, got " + x_t.shape_string());
  }
  const std::size_t rows = params.at("gate_u_w").rows();
  if (rows != 1 + params.shape().hidden) {
    throw ShapeError("gru_cell: gate weights of " + params.at("gate_u_w").shape_string() +
                     " do not take a scalar input");
  }
  return gated_update(x_t, x_t, x_t, h_prev, params);
}

Tensor tgcn_cell(const RoadGraph& graph, const Tensor& x_t, const Tensor& h_prev,
                 const ModelParams& params) {
  require_kind(params, {ModelKind::tgcn, ModelKind::a3tgcn}, "tgcn_cell");
  if (x_t.cols() != 1) {
    throw ShapeError("tgcn_cell: input must have one column, got " + x_t.shape_string());
  }
  if (params.shape().per_gate_gc) {
    return gated_update(graph_conv(graph, x_t, params.at("gc_w_u")),
                        graph_conv(graph, x_t, params.at("gc_w_r")),
                        graph_conv(graph, x_t, params.at("gc_w_c")), h_prev, params);
  }
  const Tensor gc = graph_conv(graph, x_t, params.at("gc_w"));
  return gated_update(gc, gc, gc, h_prev, params);
}

AttentionOutput attention(std::span<const Tensor> states, const ModelParams& params) {
  require_kind(params, {ModelKind::a3tgcn}, "attention");
  if (states.empty()) {
    throw ContractError("attention: empty hidden-state sequence");
  }
  const ModelShape& s = params.shape();
  const std::size_t batch = batch_count(states.front(), s.nodes);
  const std::size_t flat_width = s.nodes * s.hidden;

  std::vector<Tensor> flat;
  flat.reserve(states.size());
  Tensor scores;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (!states[i].same_shape(states.front()) || states[i].cols() != s.hidden) {
      throw ShapeError("attention: state " + std::to_string(i) + " " + states[i].shape_string() +
                       " is inconsistent");
    }
    flat.push_back(reshape(states[i], batch, flat_width));
    Tensor z = add_row(matmul(flat.back(), params.at("attn_w1")), params.at("attn_b1"));
    if (s.scorer_tanh) {
      z = tanh(z);
    }
    Tensor e = add_row(matmul(z, params.at("attn_w2")), params.at("attn_b2"));
    scores = i == 0 ? e : concat_cols(scores, e);
  }
  Tensor alpha = softmax_rows(scores);
  Tensor context_flat;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    Tensor term = scale_rows(flat[i], slice_cols(alpha, i, 1));
    context_flat = i == 0 ? term : add(context_flat, term);
  }
  return {std::move(scores), std::move(alpha), reshape(context_flat, batch * s.nodes, s.hidden)};
}

std::vector<Tensor> recurrent_sweep(const RoadGraph& graph, const Tensor& window,
                                    const ModelParams& params) {
  require_kind(params, {ModelKind::gru, ModelKind::tgcn, ModelKind::a3tgcn}, "recurrent_sweep");
  const ModelShape& s = params.shape();
  if (window.cols() == 0) {
    throw ContractError("recurrent sweep needs at least one time step");
  }
  if (window.cols() != s.history) {
    throw ShapeError("window " + window.shape_string() + " needs " + std::to_string(s.history) +
                     " time steps");
  }
  if (graph.n_nodes() != s.nodes) {
    throw ShapeError("graph has " + std::to_string(graph.n_nodes()) + " nodes, model expects " +
                     std::to_string(s.nodes));
  }
  batch_count(window, s.nodes);
  std::vector<Tensor> states;
  states.reserve(window.cols());
  Tensor h(window.rows(), s.hidden);
  for (std::size_t t = 0; t < window.cols(); ++t) {
    const Tensor x_t = slice_cols(window, t, 1);
    h = s.kind == ModelKind::gru ? gru_cell(x_t, h, params) : tgcn_cell(graph, x_t, h, params);
    states.push_back(h);
  }
  return states;
}

Tensor a3tgcn_forward(const RoadGraph& graph, const Tensor& window, const ModelParams& params) {
  require_kind(params, {ModelKind::a3tgcn}, "a3tgcn_forward");
  const std::vector<Tensor> states = recurrent_sweep(graph, window, params);
  return output_head(attention(states, params).context, params);
}

Tensor forward(const RoadGraph& graph, const Tensor& window, const ModelParams& params) {
  switch (params.shape().kind) {
    case ModelKind::gcn:
      return gcn_forward(graph, window, params);
    case ModelKind::gru:
    case ModelKind::tgcn:
      return output_head(recurrent_sweep(graph, window, params).back(), params);
    case ModelKind::a3tgcn:
      return a3tgcn_forward(graph, window, params);
    case ModelKind::ha:
      break;
  }
  throw ContractError("forward: the historical-average baseline has no learned forward pass");
}

// ---------------------------------------------------------------- loss

Tensor regularization(std::span<const Tensor> weights) {
  Tensor total(1, 1);
  for (const Tensor& w : weights) {
    total = add(total, sum(hadamard(w, w)));
  }
  return total;
}

Tensor regularization(const ModelParams& params) {
  std::vector<Tensor> weights;
  for (const auto& e : params.entries()) {
    if (e.regularized) {
      weights.push_back(e.value);
    }
  }
  return regularization(weights);
}

Tensor loss(const Tensor& y_true, const Tensor& y_pred, std::span<const Tensor> weights,
            double lambda_reg) {
  if (!y_true.same_shape(y_pred)) {
    throw ShapeError("loss: truth " + y_true.shape_string() + " vs prediction " +
                     y_pred.shape_string());
  }
  if (!(lambda_reg >= 0.0)) {
    throw DomainError("loss: lambda_reg must be non-negative");
  }
  const Tensor diff = sub(y_pred, y_true);
  Tensor total = scale(sum(hadamard(diff, diff)), 1.0 / static_cast<double>(diff.size()));
  if (lambda_reg > 0.0) {
    total = add(total, scale(regularization(weights), lambda_reg));
  }
  return total;
}

Tensor loss(const Tensor& y_true, const Tensor& y_pred, const ModelParams& params,
            double lambda_reg) {
  std::vector<Tensor> weights;
  for (const auto& e : params.entries()) {
    if (e.regularized) {
      weights.push_back(e.value);
    }
  }
  return loss(y_true, y_pred, weights, lambda_reg);
}

}  // namespace a3t
