#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "a3t/data.hpp"
#include "a3t/error.hpp"
#include "a3t/train.hpp"
#include "support.hpp"

using namespace a3t;
using a3t::test::random_tensor;

namespace {

TrainConfig small_config(ModelKind kind) {
  TrainConfig c;
  c.model_kind = kind;
  c.epochs = 3;
  c.hidden_units = 4;
  c.history_n = 3;
  c.horizon_t = 1;
  c.batch_size = 16;
  c.scorer_width = 4;
  c.eval_every = 2;
  c.seed = 7;
  return c;
}

struct Fixture {
  SyntheticTraffic data = synth_traffic(5, 200, 1);
  PreparedData prepared = prepare_data(data.speeds, 3, 1, 0.8);
};

}  // namespace

TEST_CASE("historical average") {
  SUBCASE("constant window") {
    const Tensor y = baseline_ha(Tensor(3, 4, 17.0), 2);
    CHECK(y.cols() == 2);
    for (double v : y.values()) {
      CHECK(v == 17.0);
    }
  }
  SUBCASE("window (2, 4) with two future steps") {
    const Tensor y = baseline_ha(Tensor::from_rows({{2, 4}, {2, 4}}), 2);
    for (double v : y.values()) {
      CHECK(v == 3.0);
    }
  }
  SUBCASE("invariant to the order of the window") {
    std::mt19937_64 rng(1);
    const Tensor w = random_tensor(rng, 3, 5);
    Tensor reversed(3, 5);
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t c = 0; c < 5; ++c) {
        reversed(r, c) = w(r, 4 - c);
      }
    }
    CHECK(test::max_abs_diff(baseline_ha(w, 1), baseline_ha(reversed, 1)) < 1e-15);
  }
}

TEST_CASE("adam") {
  ModelShape s;
  s.kind = ModelKind::gru;
  s.nodes = 2;
  s.history = 2;
  s.hidden = 2;
  ModelParams p = init_params(s, 3);
  SUBCASE("zero gradients leave parameters unchanged") {
    const ModelParams before = p;
    AdamState state(p);
    std::vector<Tensor> grads;
    for (const auto& e : p.entries()) {
      grads.emplace_back(e.value.rows(), e.value.cols());
    }
    for (int i = 0; i < 3; ++i) {
      adam_step(p, grads, state, 0.01);
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
      CHECK(test::bit_equal(p.entries()[i].value, before.entries()[i].value));
    }
  }
  SUBCASE("first step moves each entry by about lr against its gradient sign") {
    std::mt19937_64 rng(2);
    const ModelParams before = p;
    AdamState state(p);
    std::vector<Tensor> grads;
    for (const auto& e : p.entries()) {
      grads.push_back(random_tensor(rng, e.value.rows(), e.value.cols(), -5, 5));
    }
    const double lr = 0.001;
    adam_step(p, grads, state, lr);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      for (std::size_t k = 0; k < grads[i].size(); ++k) {
        const double g = grads[i].values()[k];
        // Bias-corrected moments at t = 1 are g and g^2.
        const double expected = -lr * g / (std::abs(g) + 1e-8);
        const double moved = p.entries()[i].value.values()[k] - before.entries()[i].value.values()[k];
        CHECK(std::abs(moved - expected) < 1e-15);
      }
    }
  }
  SUBCASE("misaligned gradients") {
    AdamState state(p);
    CHECK_THROWS_AS(adam_step(p, std::vector<Tensor>{}, state, 0.1), ShapeError);
  }
}

TEST_CASE("training is deterministic") {
  Fixture f;
  for (ModelKind kind : {ModelKind::gcn, ModelKind::tgcn, ModelKind::a3tgcn}) {
    const TrainResult a = train(small_config(kind), f.data.graph, f.prepared);
    const TrainResult b = train(small_config(kind), f.data.graph, f.prepared);
    REQUIRE(a.history.epoch_loss.size() == 3);
    CHECK(a.history.epoch_loss == b.history.epoch_loss);
    CHECK(a.best == b.best);
    CHECK(a.best_epoch == b.best_epoch);
    for (std::size_t i = 0; i < a.params.entries().size(); ++i) {
      CHECK(test::bit_equal(a.params.entries()[i].value, b.params.entries()[i].value));
    }
  }
}

TEST_CASE("evaluation schedule and best checkpoint") {
  Fixture f;
  const TrainResult r = train(small_config(ModelKind::gru), f.data.graph, f.prepared);
  REQUIRE(r.history.evals.size() == 2);  // epochs 2 and 3
  CHECK(r.history.evals[0].epoch == 2);
  CHECK(r.history.evals[1].epoch == 3);
  double best = r.history.evals[0].test.rmse;
  for (const EvalRow& row : r.history.evals) {
    best = std::min(best, row.test.rmse);
  }
  CHECK(r.best.rmse == best);
  const MetricsReport again =
      evaluate_model(f.data.graph, r.params, f.prepared.split.test, f.prepared.scale_max);
  CHECK(again == r.best);
}

TEST_CASE("zero epochs returns the initialization") {
  Fixture f;
  TrainConfig c = small_config(ModelKind::a3tgcn);
  c.epochs = 0;
  const TrainResult r = train(c, f.data.graph, f.prepared);
  CHECK(r.history.epoch_loss.empty());
  CHECK(r.history.evals.empty());
  const ModelParams init = init_params(c.model_shape(5), c.seed);
  for (std::size_t i = 0; i < init.entries().size(); ++i) {
    CHECK(test::bit_equal(r.params.entries()[i].value, init.entries()[i].value));
  }
}

TEST_CASE("historical average skips optimization") {
  Fixture f;
  const TrainResult r = train(small_config(ModelKind::ha), f.data.graph, f.prepared);
  CHECK(r.history.epoch_loss.empty());
  CHECK(r.params.parameter_count() == 0);
  const Tensor truth = denormalize(targets(f.prepared.split.test), f.prepared.scale_max);
  Tensor manual(f.prepared.split.test.size(), 5);
  for (std::size_t k = 0; k < f.prepared.split.test.size(); ++k) {
    const Tensor& w = f.prepared.split.test.samples[k].input;
    for (std::size_t node = 0; node < 5; ++node) {
      manual(k, node) = (w(node, 0) + w(node, 1) + w(node, 2)) / 3.0 * f.prepared.scale_max;
    }
  }
  const MetricsReport m = evaluate(truth, manual);
  CHECK(r.best.rmse == doctest::Approx(m.rmse).epsilon(1e-12));
}

TEST_CASE("divergence names epoch and batch") {
  Fixture f;
  TrainConfig c = small_config(ModelKind::a3tgcn);
  c.learning_rate = 1e200;
  try {
    train(c, f.data.graph, f.prepared);
    FAIL("expected TrainingDiverged");
  } catch (const TrainingDiverged& e) {
    CHECK(e.epoch() == 1);
    CHECK(e.batch() == 2);
    CHECK(std::string(e.what()).find("epoch 1, batch 2") != std::string::npos);
  }
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.train_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lambda_reg = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.eval_every = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("windows that disagree with the config are rejected") {
  Fixture f;
  TrainConfig c = small_config(ModelKind::gru);
  c.history_n = 4;
  CHECK_THROWS_AS(train(c, f.data.graph, f.prepared), ConfigError);
}

TEST_CASE("predict lays out rows node-major") {
  Fixture f;
  const PreparedData two = prepare_data(f.data.speeds, 3, 2, 0.8);
  TrainConfig c = small_config(ModelKind::tgcn);
  c.horizon_t = 2;
  const ModelParams p = init_params(c.model_shape(5), 1);
  const Tensor all = predict(f.data.graph, p, two.split.test);
  CHECK(all.rows() == two.split.test.size());
  CHECK(all.cols() == 10);
  const Tensor one = forward(f.data.graph, two.split.test.samples[1].input, p);
  for (std::size_t node = 0; node < 5; ++node) {
    for (std::size_t t = 0; t < 2; ++t) {
      CHECK(std::abs(all(1, node * 2 + t) - one(node, t)) < 1e-12);
    }
  }
  const Tensor truth = targets(two.split.test);
  CHECK(truth(0, 3) == two.split.test.samples[0].target(1, 1));
}

TEST_CASE("history csv") {
  TrainHistory h;
  h.epoch_loss = {0.5, 0.25};
  MetricsReport m;
  m.rmse = 2.0;
  m.mae = 1.5;
  m.accuracy = 0.75;
  h.evals.push_back({2, 0.25, m});
  test::TempDir dir("hist");
  write_history_csv(dir / "h.csv", h);
  CHECK(test::read_text(dir / "h.csv") ==
        "epoch,train_loss,test_rmse,test_mae,test_accuracy,test_r2,test_var\n"
        "2,0.25,2,1.5,0.75,n/a,n/a\n");
}

TEST_CASE("compare_models") {
  Fixture f;
  SUBCASE("one model, one horizon") {
    const std::vector<TrainConfig> configs{small_config(ModelKind::ha)};
    const ComparisonTable t = compare_models(configs, f.data.graph, f.data.speeds);
    CHECK(t.entries.size() == 1);
    CHECK(t.models.size() == 1);
    CHECK(t.horizons.size() == 1);
    test::TempDir dir("cmp");
    t.write_csv(dir / "c.csv");
    const std::string text = test::read_text(dir / "c.csv");
    CHECK(text.rfind("horizon,metric,ha\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 6);  // header plus five metrics
  }
  SUBCASE("threads do not change results") {
    std::vector<TrainConfig> configs{small_config(ModelKind::gru), small_config(ModelKind::tgcn)};
    const ComparisonTable serial = compare_models(configs, f.data.graph, f.data.speeds, 1);
    const ComparisonTable parallel = compare_models(configs, f.data.graph, f.data.speeds, 2);
    CHECK(serial.at(ModelKind::gru, 1) == parallel.at(ModelKind::gru, 1));
    CHECK(serial.at(ModelKind::tgcn, 1) == parallel.at(ModelKind::tgcn, 1));
    std::ostringstream out;
    serial.print(out);
    CHECK(out.str().find("tgcn") != std::string::npos);
  }
}
