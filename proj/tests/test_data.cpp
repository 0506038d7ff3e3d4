#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "a3t/data.hpp"
#include "a3t/error.hpp"
#include "support.hpp"

using namespace a3t;
using a3t::test::random_tensor;

namespace {

FeatureMatrix ramp(std::size_t steps, std::size_t nodes) {
  Tensor v(steps, nodes);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < nodes; ++i) {
      v(t, i) = static_cast<double>(t);
    }
  }
  return make_feature_matrix(v);
}

FeatureMatrix random_normalized(std::mt19937_64& rng, std::size_t steps, std::size_t nodes) {
  return normalize(make_feature_matrix(random_tensor(rng, steps, nodes, 0.0, 80.0)));
}

}  // namespace

TEST_CASE("load_speed_matrix") {
  test::TempDir dir("speeds");
  test::write_text(dir / "z.csv", "0,0,0\n0,0,0\n0,0,0\n0,0,0\n0,0,0\n");
  SUBCASE("zeros against a matching graph") {
    const FeatureMatrix fm = load_speed_matrix(dir / "z.csv", 3);
    CHECK(fm.n_steps() == 5);
    CHECK(fm.n_nodes() == 3);
    CHECK_FALSE(fm.normalized);
  }
  SUBCASE("node count mismatch names both counts") {
    test::write_text(dir / "w.csv", "0,0,0,0\n0,0,0,0\n0,0,0,0\n0,0,0,0\n0,0,0,0\n");
    try {
      load_speed_matrix(dir / "w.csv", 3);
      FAIL("expected ContractError");
    } catch (const ContractError& e) {
      const std::string what = e.what();
      CHECK(what.find('4') != std::string::npos);
      CHECK(what.find('3') != std::string::npos);
    }
  }
  SUBCASE("non-numeric entry") {
    test::write_text(dir / "bad.csv", "1,2\n3,abc\n");
    try {
      load_speed_matrix(dir / "bad.csv");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.row() == 2);
      CHECK(e.col() == 2);
    }
  }
  SUBCASE("negative speed") {
    test::write_text(dir / "neg.csv", "1,2\n3,-4\n");
    CHECK_THROWS_AS(load_speed_matrix(dir / "neg.csv"), DomainError);
  }
}

TEST_CASE("normalize") {
  SUBCASE("proportional scaling") {
    const FeatureMatrix fm = normalize(make_feature_matrix(Tensor::from_rows({{70, 35}, {7, 0}})));
    CHECK(fm.scale_max == 70.0);
    CHECK(fm.normalized);
    CHECK(fm.values(0, 1) == 0.5);
  }
  SUBCASE("constant matrix becomes all ones") {
    const FeatureMatrix fm = normalize(make_feature_matrix(Tensor(4, 3, 12.5)));
    for (double v : fm.values.values()) {
      CHECK(v == 1.0);
    }
  }
  SUBCASE("all zeros is degenerate") {
    CHECK_THROWS_AS(normalize(make_feature_matrix(Tensor(3, 3))), DomainError);
  }
  SUBCASE("round trip") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
      const FeatureMatrix raw = make_feature_matrix(random_tensor(rng, 7, 3, 0.0, 120.0));
      const FeatureMatrix fm = normalize(raw);
      CHECK(test::max_abs_diff(denormalize(fm.values, fm.scale_max), raw.values) < 1e-12);
      for (double v : fm.values.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
  SUBCASE("explicit scale") {
    const FeatureMatrix fm = normalize_with(make_feature_matrix(Tensor(1, 1, 10.0)), 40.0);
    CHECK(fm.values(0, 0) == 0.25);
    CHECK_THROWS_AS(normalize_with(make_feature_matrix(Tensor(1, 1)), 0.0), DomainError);
  }
}

TEST_CASE("make_windows") {
  SUBCASE("count") {
    CHECK(make_windows(ramp(5, 2), 2, 1).size() == 3);
  }
  SUBCASE("too short") {
    CHECK_THROWS_AS(make_windows(ramp(3, 2), 2, 2), ContractError);
    CHECK_THROWS_AS(make_windows(ramp(3, 2), 0, 1), ContractError);
  }
  SUBCASE("first sample of a ramp") {
    const WindowedDataset ds = make_windows(ramp(6, 3), 2, 1);
    const Sample& s = ds.samples.front();
    for (std::size_t node = 0; node < 3; ++node) {
      CHECK(s.input(node, 0) == 0.0);
      CHECK(s.input(node, 1) == 1.0);
      CHECK(s.target(node, 0) == 2.0);
    }
  }
}

TEST_CASE("stride-1 windows reconstruct the series") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t steps = 10 + trial;
    const std::size_t history = 1 + trial % 4;
    const std::size_t horizon = 1 + trial % 3;
    const FeatureMatrix fm = make_feature_matrix(random_tensor(rng, steps, 3, 0.0, 50.0));
    const WindowedDataset ds = make_windows(fm, history, horizon);
    CHECK(ds.size() == steps - history - horizon + 1);
    // First column of every input, then the tail of the last input and its target.
    Tensor rebuilt(steps, 3);
    for (std::size_t k = 0; k < ds.size(); ++k) {
      for (std::size_t node = 0; node < 3; ++node) {
        rebuilt(k, node) = ds.samples[k].input(node, 0);
      }
    }
    const Sample& last = ds.samples.back();
    for (std::size_t node = 0; node < 3; ++node) {
      for (std::size_t j = 1; j < history; ++j) {
        rebuilt(ds.size() - 1 + j, node) = last.input(node, j);
      }
      for (std::size_t j = 0; j < horizon; ++j) {
        rebuilt(ds.size() - 1 + history + j, node) = last.target(node, j);
      }
    }
    CHECK(test::bit_equal(rebuilt, fm.values));
  }
}

TEST_CASE("split_train_test") {
  const WindowedDataset ten = make_windows(ramp(11, 2), 1, 1);
  REQUIRE(ten.size() == 10);
  SUBCASE("floor rule") {
    const TrainTestSplit a = split_train_test(ten, 0.8);
    CHECK(a.train.size() == 8);
    CHECK(a.test.size() == 2);
    const TrainTestSplit b = split_train_test(ten, 0.99);
    CHECK(b.train.size() == 9);
    CHECK(b.test.size() == 1);
  }
  SUBCASE("empty side") {
    CHECK_THROWS_AS(split_train_test(ten, 0.05), ContractError);
    CHECK_THROWS_AS(split_train_test(ten, 1.0), ContractError);
    CHECK_THROWS_AS(split_train_test(make_windows(ramp(12, 1), 4, 2), 0.8), ContractError);
  }
  SUBCASE("longer windows drop the overlapping samples") {
    const WindowedDataset ds = make_windows(ramp(20, 1), 3, 2);  // 16 samples, gap 3
    const TrainTestSplit s = split_train_test(ds, 0.5);
    CHECK(s.train.size() == 8);
    CHECK(s.test.size() == 5);
    CHECK(s.test.samples.front().start == 11);
  }
  SUBCASE("chronological and leakage-free") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> frac(0.2, 0.7);
    for (int trial = 0; trial < 20; ++trial) {
      const WindowedDataset ds = make_windows(ramp(40 + trial, 1), 1 + trial % 4, 1 + trial % 3);
      const TrainTestSplit s = split_train_test(ds, frac(rng));
      std::size_t last_train_target = 0;
      for (const Sample& x : s.train.samples) {
        last_train_target = std::max(last_train_target, x.start + ds.history + ds.horizon - 1);
      }
      for (const Sample& x : s.test.samples) {
        CHECK(last_train_target <= x.start);
      }
      for (std::size_t k = 1; k < s.train.size(); ++k) {
        CHECK(s.train.samples[k].start == s.train.samples[k - 1].start + 1);
      }
      CHECK(s.train.samples.back().start < s.test.samples.front().start);
      CHECK(s.test.samples.back().start == ds.samples.back().start);
    }
  }
}

TEST_CASE("stacking batches") {
  const WindowedDataset ds = make_windows(ramp(8, 2), 3, 2);
  const std::vector<std::size_t> idx{2, 0};
  const Tensor x = stack_inputs(ds, idx);
  const Tensor y = stack_targets(ds, idx);
  CHECK(x.rows() == 4);
  CHECK(x.cols() == 3);
  CHECK(y.cols() == 2);
  CHECK(x(0, 0) == 2.0);
  CHECK(x(2, 0) == 0.0);
  CHECK(y(3, 1) == 4.0);
  CHECK_THROWS_AS(stack_inputs(ds, std::vector<std::size_t>{}), ContractError);
}

TEST_CASE("noise injection") {
  std::mt19937_64 rng(4);
  const FeatureMatrix fm = random_normalized(rng, 50, 4);

  SUBCASE("deterministic given the seed") {
    for (NoiseKind kind : {NoiseKind::gaussian, NoiseKind::poisson}) {
      NoiseSpec spec;
      spec.kind = kind;
      spec.param = kind == NoiseKind::gaussian ? 0.8 : 4.0;
      spec.seed = 11;
      CHECK(test::bit_equal(add_noise(fm, spec).values, add_noise(fm, spec).values));
      NoiseSpec other = spec;
      other.seed = 12;
      CHECK_FALSE(test::bit_equal(add_noise(fm, spec).values, add_noise(fm, other).values));
    }
  }
  SUBCASE("output stays in [0, 1] and never below the input") {
    for (double sigma : k_gaussian_sigmas) {
      for (NoiseUnit unit : {NoiseUnit::raw, NoiseUnit::normalized}) {
        NoiseSpec spec{NoiseKind::gaussian, sigma, 5, false, unit};
        const FeatureMatrix noisy = add_noise(fm, spec);
        CHECK(noisy.normalized);
        CHECK(noisy.scale_max == fm.scale_max);
        for (std::size_t i = 0; i < fm.values.size(); ++i) {
          const double v = noisy.values.values()[i];
          CHECK(v >= 0.0);
          CHECK(v <= 1.0);
          CHECK(v >= fm.values.values()[i]);
        }
      }
    }
  }
  SUBCASE("raw units add at most one speed unit") {
    NoiseSpec spec{NoiseKind::poisson, 16.0, 5, false, NoiseUnit::raw};
    const FeatureMatrix noisy = add_noise(fm, spec);
    CHECK(test::max_abs_diff(noisy.values, fm.values) <= 1.0 / fm.scale_max + 1e-15);
  }
  SUBCASE("min-max rescaling removes the gaussian scale") {
    // The draws for sigma are sigma times the draws for 1, so after rescaling
    // to [0, 1] the perturbed matrices agree to rounding.
    NoiseSpec small{NoiseKind::gaussian, 0.2, 9, false, NoiseUnit::normalized};
    NoiseSpec large{NoiseKind::gaussian, 2.0, 9, false, NoiseUnit::normalized};
    CHECK(test::max_abs_diff(add_noise(fm, small).values, add_noise(fm, large).values) < 1e-12);
  }
  SUBCASE("poisson rate changes the output") {
    NoiseSpec low{NoiseKind::poisson, 1.0, 9, false, NoiseUnit::normalized};
    NoiseSpec high{NoiseKind::poisson, 16.0, 9, false, NoiseUnit::normalized};
    CHECK_FALSE(test::bit_equal(add_noise(fm, low).values, add_noise(fm, high).values));
  }
  SUBCASE("validation") {
    NoiseSpec spec;
    spec.param = 0.3;
    CHECK_THROWS_AS(spec.validate(), DomainError);
    spec.custom = true;
    CHECK_NOTHROW(spec.validate());
    spec.param = 0.0;
    CHECK_THROWS_AS(spec.validate(), DomainError);
    spec.param = -1.0;
    CHECK_THROWS_AS(spec.validate(), DomainError);
    for (double lambda : k_poisson_lambdas) {
      CHECK_NOTHROW((NoiseSpec{NoiseKind::poisson, lambda}).validate());
    }
    CHECK_THROWS_AS(add_noise(make_feature_matrix(Tensor(2, 2, 1.0)), NoiseSpec{}), ContractError);
  }
  SUBCASE("kind names") {
    CHECK(parse_noise_kind("gaussian") == NoiseKind::gaussian);
    CHECK(parse_noise_kind("poisson") == NoiseKind::poisson);
    CHECK_FALSE(parse_noise_kind("uniform").has_value());
  }
}

TEST_CASE("ring_with_chords") {
  const Tensor a = ring_with_chords(10, 2);
  for (std::size_t i = 0; i < 10; ++i) {
    double degree = 0.0;
    for (std::size_t j = 0; j < 10; ++j) {
      CHECK(a(i, j) == a(j, i));
      degree += a(i, j);
    }
    CHECK(degree == 4.0);
    CHECK(a(i, i) == 0.0);
  }
}

TEST_CASE("synthetic traffic") {
  SUBCASE("decoupled and noiseless nodes follow their sinusoid") {
    SynthOptions o;
    o.n_nodes = 5;
    o.n_steps = 200;
    o.coupling = 0.0;
    o.noise_std = 0.0;
    const SyntheticTraffic s = synth_traffic(o);
    for (std::size_t t = 0; t < o.n_steps; ++t) {
      for (std::size_t i = 0; i < o.n_nodes; ++i) {
        const double phase = 2.0 * std::numbers::pi * static_cast<double>(i) / 5.0;
        const double expected =
            40.0 + 15.0 * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 96.0 + phase);
        CHECK(std::abs(s.speeds.values(t, i) - expected) < 1e-12);
      }
    }
  }
  SUBCASE("full coupling from equal states stays in consensus") {
    SynthOptions o;
    o.n_steps = 300;
    o.coupling = 1.0;
    o.noise_std = 0.0;
    o.initial_speed = 33.0;
    const SyntheticTraffic s = synth_traffic(o);
    for (std::size_t t = 0; t < o.n_steps; ++t) {
      for (std::size_t i = 1; i < o.n_nodes; ++i) {
        CHECK(s.speeds.values(t, i) == s.speeds.values(t, 0));
      }
    }
  }
  SUBCASE("same seed, same data") {
    const SyntheticTraffic a = synth_traffic(10, 500, 3);
    const SyntheticTraffic b = synth_traffic(10, 500, 3);
    const SyntheticTraffic c = synth_traffic(10, 500, 4);
    CHECK(test::bit_equal(a.speeds.values, b.speeds.values));
    CHECK(test::bit_equal(a.graph.adjacency(), b.graph.adjacency()));
    CHECK_FALSE(test::bit_equal(a.speeds.values, c.speeds.values));
  }
  SUBCASE("speeds are non-negative and the graph is the ring") {
    const SyntheticTraffic s = synth_traffic(10, 2000, 0);
    CHECK(s.speeds.n_nodes() == 10);
    CHECK(s.speeds.n_steps() == 2000);
    for (double v : s.speeds.values.values()) {
      CHECK(v >= 0.0);
    }
    CHECK(test::bit_equal(s.graph.adjacency(), ring_with_chords(10, 2)));
  }
  SUBCASE("bad options") {
    SynthOptions o;
    o.coupling = 1.5;
    CHECK_THROWS_AS(synth_traffic(o), ContractError);
    CHECK_THROWS_AS(synth_traffic(1, 500, 0), ContractError);
  }
}
