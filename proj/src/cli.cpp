#include "a3t/cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <array>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "a3t/checkpoint.hpp"
#include "a3t/csv.hpp"
#include "a3t/data.hpp"
#include "a3t/error.hpp"
#include "a3t/gradcheck.hpp"
#include "a3t/train.hpp"

namespace a3t {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

struct DatasetRecord {
  std::string role;
  fs::path path;
  std::string sha256;
};

struct DataFlags {
  std::string graph;
  std::string speeds;
  std::string synth;  // "NxM"
  std::uint64_t synth_seed = 0;
};

struct LoadedData {
  RoadGraph graph;
  FeatureMatrix speeds;
  std::vector<DatasetRecord> records;
};

void add_data_flags(CLI::App& cmd, DataFlags& d) {
  cmd.add_option("--graph", d.graph, "Adjacency CSV (N x N, no header)");
  cmd.add_option("--speeds", d.speeds, "Speed CSV (time x node, no header)");
  cmd.add_option("--synth", d.synth, "Generate a synthetic ring dataset, NODESxSTEPS (e.g. 10x2000)");
  cmd.add_option("--synth-seed", d.synth_seed, "Seed of the synthetic generator");
}

std::pair<std::size_t, std::size_t> parse_synth(const std::string& text) {
  const auto x = text.find('x');
  std::size_t n = 0;
  std::size_t m = 0;
  auto number = [](std::string_view s, std::size_t& v) {
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
  };
  if (x == std::string::npos || !number(std::string_view(text).substr(0, x), n) ||
      !number(std::string_view(text).substr(x + 1), m)) {
    throw ConfigError("--synth expects NODESxSTEPS, got '" + text + "'");
  }
  return {n, m};
}

DatasetRecord record(std::string role, const fs::path& path) {
  return {std::move(role), path, sha256_file(path)};
}

/// Reads the graph and speeds, or generates them. With `save_dir` a
/// synthetic dataset is also written there so later commands can reuse it.
LoadedData load_data(const DataFlags& d, const std::optional<fs::path>& save_dir = std::nullopt) {
  if (!d.synth.empty()) {
    if (!d.graph.empty() || !d.speeds.empty()) {
      throw ConfigError("--synth cannot be combined with --graph or --speeds");
    }
    const auto [n, m] = parse_synth(d.synth);
    SynthOptions o;
    o.n_nodes = n;
    o.n_steps = m;
    o.seed = d.synth_seed;
    SyntheticTraffic synth = [&] {
      try {
        return synth_traffic(o);
      } catch (const ContractError& e) {
        throw ConfigError(e.what());
      }
    }();
    LoadedData out{std::move(synth.graph), std::move(synth.speeds), {}};
    if (save_dir) {
      const fs::path adj = *save_dir / "adjacency.csv";
      const fs::path spd = *save_dir / "speeds.csv";
      write_numeric_csv(adj, out.graph.adjacency());
      write_numeric_csv(spd, out.speeds.values);
      out.records = {record("graph", adj), record("speeds", spd)};
    }
    return out;
  }
  if (d.graph.empty()) {
    throw ConfigError("missing --graph (or --synth)");
  }
  if (d.speeds.empty()) {
    throw ConfigError("missing --speeds");
  }
  RoadGraph graph = load_adjacency(d.graph);
  FeatureMatrix speeds = load_speed_matrix(d.speeds, graph.n_nodes());
  return {std::move(graph), std::move(speeds),
          {record("graph", d.graph), record("speeds", d.speeds)}};
}

struct TrainFlags {
  TrainConfig config;
  std::string model = "a3tgcn";
};

void add_train_flags(CLI::App& cmd, TrainFlags& f, bool with_model) {
  TrainConfig& c = f.config;
  if (with_model) {
    cmd.add_option("--model", f.model, "ha, gcn, gru, tgcn or a3tgcn")->capture_default_str();
    cmd.add_option("--horizon", c.horizon_t, "Steps predicted jointly (T)")->capture_default_str();
  }
  cmd.add_option("--history", c.history_n, "Input window length (n)")->capture_default_str();
  cmd.add_option("--epochs", c.epochs)->capture_default_str();
  cmd.add_option("--lr", c.learning_rate, "Adam learning rate")->capture_default_str();
  cmd.add_option("--hidden", c.hidden_units, "Hidden units (H)")->capture_default_str();
  cmd.add_option("--lambda", c.lambda_reg, "L2 weight on the loss")->capture_default_str();
  cmd.add_option("--batch-size", c.batch_size)->capture_default_str();
  cmd.add_option("--eval-every", c.eval_every, "Test evaluation stride in epochs")->capture_default_str();
  cmd.add_option("--train-fraction", c.train_fraction)->capture_default_str();
  cmd.add_option("--scorer-width", c.scorer_width, "Attention scorer hidden width")->capture_default_str();
  cmd.add_option("--gc-width", c.gc_width, "Graph convolution output width per gate")->capture_default_str();
  cmd.add_flag("--per-gate-gc", c.per_gate_gc, "Separate graph convolution weight per gate");
  cmd.add_flag("--scorer-tanh", c.scorer_tanh, "tanh between the attention scorer layers");
}

void resolve_model(TrainFlags& f) {
  const auto kind = parse_model_kind(f.model);
  if (!kind) {
    throw ConfigError("unknown model '" + f.model + "' (expected ha, gcn, gru, tgcn or a3tgcn)");
  }
  f.config.model_kind = *kind;
}

/// --seed, else A3T_SEED, else 0.
void resolve_seed(const CLI::Option* opt, std::uint64_t& seed) {
  if (opt->count() > 0) {
    return;
  }
  const char* env = std::getenv("A3T_SEED");
  if (env == nullptr || *env == '\0') {
    return;
  }
  const std::string_view text(env);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), seed);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("A3T_SEED is not an unsigned integer: '" + std::string(text) + "'");
  }
}

json metrics_json(const MetricsReport& m) {
  auto opt = [](const std::optional<double>& v) -> json { return v ? json(*v) : json(nullptr); };
  return {{"rmse", m.rmse},
          {"mae", m.mae},
          {"accuracy", opt(m.accuracy)},
          {"r2", opt(m.r2)},
          {"var", opt(m.explained_variance)}};
}

json config_json(const TrainConfig& c) {
  return {{"model", std::string(to_string(c.model_kind))},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"hidden_units", c.hidden_units},
          {"history_n", c.history_n},
          {"horizon_t", c.horizon_t},
          {"lambda_reg", c.lambda_reg},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"train_fraction", c.train_fraction},
          {"eval_every", c.eval_every},
          {"scorer_width", c.scorer_width},
          {"gc_width", c.gc_width},
          {"per_gate_gc", c.per_gate_gc},
          {"scorer_tanh", c.scorer_tanh}};
}

json records_json(const std::vector<DatasetRecord>& records) {
  json out = json::array();
  for (const auto& r : records) {
    out.push_back({{"role", r.role}, {"path", r.path.string()}, {"sha256", r.sha256}});
  }
  return out;
}

void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error("cannot write " + tmp.string());
    }
    out << text;
    if (!out.flush()) {
      throw Error("write failed: " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

void print_metrics(std::ostream& out, const MetricsReport& m) {
  out << "rmse     " << format_double(m.rmse) << '\n'
      << "mae      " << format_double(m.mae) << '\n'
      << "accuracy " << format_metric(m.accuracy) << '\n'
      << "r2       " << format_metric(m.r2) << '\n'
      << "var      " << format_metric(m.explained_variance) << '\n';
}

std::string metric_cells(const MetricsReport& m) {
  return format_double(m.rmse) + ',' + format_double(m.mae) + ',' + format_metric(m.accuracy) +
         ',' + format_metric(m.r2) + ',' + format_metric(m.explained_variance);
}

// ---------------------------------------------------------------- commands

struct TrainCmd {
  DataFlags data;
  TrainFlags flags;
  std::string out_dir;
  CLI::Option* seed_opt = nullptr;

  int run(std::ostream& out) {
    resolve_model(flags);
    resolve_seed(seed_opt, flags.config.seed);
    const TrainConfig& c = flags.config;
    c.validate();
    const auto started = std::chrono::steady_clock::now();
    const fs::path dir(out_dir);
    fs::create_directories(dir);

    const LoadedData loaded = load_data(data, dir);
    const PreparedData prepared = prepare_data(loaded.speeds, c.history_n, c.horizon_t, c.train_fraction);
    out << "training " << to_string(c.model_kind) << " on " << loaded.graph.n_nodes() << " nodes, "
        << prepared.split.train.size() << " train / " << prepared.split.test.size()
        << " test windows\n";
    const TrainResult result = train(c, loaded.graph, prepared);

    const fs::path ckpt = dir / "checkpoint.txt";
    const fs::path hist = dir / "history.csv";
    save_checkpoint(ckpt, result.params, prepared.scale_max);
    write_history_csv(hist, result.history);

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    json manifest = {
        {"command", "train"},
        {"config", config_json(c)},
        {"data",
         {{"graph", data.graph}, {"speeds", data.speeds}, {"synth", data.synth}, {"synth_seed", data.synth_seed}}},
        {"datasets", records_json(loaded.records)},
        {"seed", c.seed},
        {"scale_max", prepared.scale_max},
        {"best_epoch", result.best_epoch},
        {"best_test", metrics_json(result.best)},
        {"artifacts", {{"checkpoint", ckpt.string()}, {"history", hist.string()}, {"predictions", nullptr}}},
        {"wall_clock_seconds", seconds},
    };
    write_atomic(dir / "manifest.json", manifest.dump(2) + "\n");

    out << "best test metrics (epoch " << result.best_epoch << "):\n";
    print_metrics(out, result.best);
    out << "wrote " << ckpt.string() << ", " << hist.string() << ", "
        << (dir / "manifest.json").string() << '\n';
    return exit_ok;
  }
};

struct EvalCmd {
  DataFlags data;
  std::string checkpoint;
  double train_fraction = 0.8;
  std::string metrics_out;
  std::string dump_predictions;

  int run(std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const ModelShape& shape = ckpt.params.shape();
    LoadedData loaded = [&] {
      if (!data.synth.empty()) {
        return load_data(data);
      }
      if (data.graph.empty()) {
        throw ConfigError("missing --graph (or --synth)");
      }
      RoadGraph graph = load_adjacency(data.graph);
      if (graph.n_nodes() != shape.nodes) {
        throw ShapeError("checkpoint expects " + std::to_string(shape.nodes) + " nodes, graph has " +
                         std::to_string(graph.n_nodes()));
      }
      return load_data(data);
    }();
    if (loaded.graph.n_nodes() != shape.nodes) {
      throw ShapeError("checkpoint expects " + std::to_string(shape.nodes) + " nodes, graph has " +
                       std::to_string(loaded.graph.n_nodes()));
    }
    const PreparedData prepared =
        prepare_data(loaded.speeds, shape.history, shape.horizon, train_fraction, ckpt.scale_max);
    const WindowedDataset& test = prepared.split.test;
    const MetricsReport m = evaluate_model(loaded.graph, ckpt.params, test, ckpt.scale_max);
    print_metrics(out, m);

    if (!metrics_out.empty()) {
      std::ostringstream text;
      text << "rmse,mae,accuracy,r2,var\n" << metric_cells(m) << '\n';
      write_atomic(metrics_out, text.str());
    }
    if (!dump_predictions.empty()) {
      const Tensor pred = denormalize(predict(loaded.graph, ckpt.params, test), ckpt.scale_max);
      const std::size_t n_nodes = shape.nodes;
      const std::size_t horizon = shape.horizon;
      std::ostringstream text;
      text << "time,step";
      for (std::size_t i = 0; i < n_nodes; ++i) {
        text << ",node_" << i;
      }
      text << '\n';
      for (std::size_t k = 0; k < test.size(); ++k) {
        for (std::size_t t = 0; t < horizon; ++t) {
          text << test.samples[k].start + shape.history + t << ',' << t + 1;
          for (std::size_t i = 0; i < n_nodes; ++i) {
            text << ',' << format_double(pred(k, i * horizon + t));
          }
          text << '\n';
        }
      }
      write_atomic(dump_predictions, text.str());
      out << "wrote " << dump_predictions << '\n';
    }
    return exit_ok;
  }
};

struct PerturbCmd {
  DataFlags data;
  std::string checkpoint;
  std::string kind;
  std::string unit = "raw";
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  std::string csv_out;
  CLI::Option* seed_opt = nullptr;

  int run(std::ostream& out) {
    resolve_seed(seed_opt, seed);
    const auto noise_kind = parse_noise_kind(kind);
    if (!noise_kind) {
      throw ConfigError("unknown noise kind '" + kind + "' (expected gaussian or poisson)");
    }
    if (unit != "raw" && unit != "normalized") {
      throw ConfigError("--noise-unit must be raw or normalized");
    }
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const ModelShape& shape = ckpt.params.shape();
    const LoadedData loaded = load_data(data);
    if (loaded.graph.n_nodes() != shape.nodes) {
      throw ShapeError("checkpoint expects " + std::to_string(shape.nodes) + " nodes, graph has " +
                       std::to_string(loaded.graph.n_nodes()));
    }
    const FeatureMatrix clean = normalize_with(loaded.speeds, ckpt.scale_max);
    auto test_metrics = [&](const FeatureMatrix& fm) {
      const TrainTestSplit split =
          split_train_test(make_windows(fm, shape.history, shape.horizon), train_fraction);
      return evaluate_model(loaded.graph, ckpt.params, split.test, ckpt.scale_max);
    };
    const MetricsReport base = test_metrics(clean);
    out << "clean: " << metric_cells(base) << '\n';

    const auto& grid = *noise_kind == NoiseKind::gaussian ? k_gaussian_sigmas : k_poisson_lambdas;
    std::ostringstream text;
    text << "kind,param,rmse,mae,accuracy,r2,var\n";
    for (double p : grid) {
      NoiseSpec spec;
      spec.kind = *noise_kind;
      spec.param = p;
      spec.seed = seed;
      spec.unit = unit == "raw" ? NoiseUnit::raw : NoiseUnit::normalized;
      const MetricsReport m = test_metrics(add_noise(clean, spec));
      text << to_string(*noise_kind) << ',' << format_double(p) << ',' << metric_cells(m) << '\n';
      out << to_string(*noise_kind) << ' ' << format_double(p) << ": " << metric_cells(m) << '\n';
    }
    const std::string path = csv_out.empty() ? "perturb_" + kind + ".csv" : csv_out;
    write_atomic(path, text.str());
    out << "wrote " << path << '\n';
    return exit_ok;
  }
};

struct GradcheckCmd {
  GradcheckOptions options;
  std::string fault;
  CLI::Option* seed_opt = nullptr;

  int run(std::ostream& out, std::ostream& err) {
    resolve_seed(seed_opt, options.seed);
    if (!fault.empty()) {
      const auto op = op_from_name(fault);
      if (!op) {
        throw ConfigError("unknown op '" + fault + "'");
      }
      testing::corrupt_backward(*op);
    }
    struct Reset {
      ~Reset() { testing::corrupt_backward(std::nullopt); }
    } reset;
    const GradcheckReport report = run_gradcheck(options);
    report.print(out);
    if (report.passed()) {
      out << "all gradients within " << format_double(options.tolerance) << '\n';
      return exit_ok;
    }
    for (const CheckResult& r : report.results) {
      if (!r.passed) {
        err << "gradient check failed: " << r.subject << " (" << r.worst_input << "), relative error "
            << r.worst_error << '\n';
      }
    }
    return exit_failure;
  }
};

struct CompareCmd {
  DataFlags data;
  TrainFlags flags;
  std::vector<std::string> models{"ha", "gcn", "gru", "tgcn", "a3tgcn"};
  std::vector<std::size_t> horizons{1};
  std::size_t threads = 1;
  std::string csv_out = "comparison.csv";
  CLI::Option* seed_opt = nullptr;

  int run(std::ostream& out) {
    resolve_seed(seed_opt, flags.config.seed);
    std::vector<TrainConfig> configs;
    for (std::size_t h : horizons) {
      for (const std::string& name : models) {
        TrainFlags f = flags;
        f.model = name;
        resolve_model(f);
        f.config.horizon_t = h;
        f.config.validate();
        configs.push_back(f.config);
      }
    }
    const LoadedData loaded = load_data(data);
    const ComparisonTable table = compare_models(configs, loaded.graph, loaded.speeds, threads);
    table.print(out);
    table.write_csv(csv_out);
    out << "wrote " << csv_out << '\n';
    return exit_ok;
  }
};

/// Config-file entries become `--key=value` tokens placed before the user's
/// own flags; with last-wins parsing the command line takes precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::optional<std::string> path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    }
  }
  if (!path) {
    return args;
  }
  std::vector<std::string> out{args.front()};
  for (const auto& [key, value] : read_flat_config(*path)) {
    out.push_back("--" + key + "=" + value);
  }
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

int report_error(std::ostream& err, int code, const std::exception& e) {
  err << "error: " << e.what() << '\n';
  return code;
}

}  // namespace

std::map<std::string, std::string> read_flat_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot read config file " + path.string());
  }
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const auto hash = line.find('#');
    const std::string body = trim(line.substr(0, hash));
    if (body.empty()) {
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(row) + ": expected key = value");
    }
    const std::string key = trim(body.substr(0, eq));
    if (key.empty()) {
      throw ConfigError(path.string() + ":" + std::to_string(row) + ": empty key");
    }
    out[key] = trim(body.substr(eq + 1));
  }
  return out;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot read " + path.string());
  }
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 unavailable");
  }
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) {
      EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

int run_cli(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"A3T-GCN traffic speed forecasting", "a3tgcn"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  std::string config_path;

  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint, history and manifest");
  TrainCmd train_args;
  add_data_flags(*train_cmd, train_args.data);
  add_train_flags(*train_cmd, train_args.flags, true);
  train_args.seed_opt = train_cmd->add_option("--seed", train_args.flags.config.seed, "Seed (falls back to A3T_SEED)");
  train_cmd->add_option("--out-dir", train_args.out_dir, "Output directory")->required();
  train_cmd->add_option("--config", config_path, "Flat key = value file; flags override it");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  EvalCmd eval_args;
  add_data_flags(*eval_cmd, eval_args.data);
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required();
  eval_cmd->add_option("--train-fraction", eval_args.train_fraction)->capture_default_str();
  eval_cmd->add_option("--out", eval_args.metrics_out, "Write the metrics as CSV");
  eval_cmd->add_option("--dump-predictions", eval_args.dump_predictions,
                       "Write test predictions as CSV (time x node)");
  eval_cmd->add_option("--config", config_path);

  auto* perturb_cmd = app.add_subcommand("perturb", "Evaluate a checkpoint under the noise sweep");
  PerturbCmd perturb_args;
  add_data_flags(*perturb_cmd, perturb_args.data);
  perturb_cmd->add_option("--checkpoint", perturb_args.checkpoint)->required();
  perturb_cmd->add_option("--kind", perturb_args.kind, "gaussian or poisson")->required();
  perturb_cmd->add_option("--noise-unit", perturb_args.unit, "raw (km/h) or normalized")->capture_default_str();
  perturb_cmd->add_option("--train-fraction", perturb_args.train_fraction)->capture_default_str();
  perturb_args.seed_opt = perturb_cmd->add_option("--seed", perturb_args.seed, "Noise seed (falls back to A3T_SEED)");
  perturb_cmd->add_option("--out", perturb_args.csv_out, "CSV path (default perturb_<kind>.csv)");
  perturb_cmd->add_option("--config", config_path);

  auto* grad_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
  GradcheckCmd grad_args;
  grad_args.seed_opt = grad_cmd->add_option("--seed", grad_args.options.seed);
  grad_cmd->add_option("--trials", grad_args.options.trials, "Cases per op and per model variant")
      ->capture_default_str();
  grad_cmd->add_option("--fault", grad_args.fault, "Corrupt the backward rule of this op (harness test)");
  grad_cmd->add_option("--config", config_path);

  auto* compare_cmd = app.add_subcommand("compare", "Train and evaluate several models on one dataset");
  CompareCmd compare_args;
  add_data_flags(*compare_cmd, compare_args.data);
  add_train_flags(*compare_cmd, compare_args.flags, false);
  compare_args.seed_opt = compare_cmd->add_option("--seed", compare_args.flags.config.seed);
  compare_cmd->add_option("--models", compare_args.models)->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->capture_default_str();
  compare_cmd->add_option("--horizons", compare_args.horizons)->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)->capture_default_str();
  compare_cmd->add_option("--threads", compare_args.threads)->capture_default_str();
  compare_cmd->add_option("--out", compare_args.csv_out)->capture_default_str();
  compare_cmd->add_option("--config", config_path);

  try {
    std::vector<std::string> args = expand_config(raw_args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return exit_config;
  } catch (const ConfigError& e) {
    return report_error(err, exit_config, e);
  }

  try {
    if (train_cmd->parsed()) {
      return train_args.run(out);
    }
    if (eval_cmd->parsed()) {
      return eval_args.run(out);
    }
    if (perturb_cmd->parsed()) {
      return perturb_args.run(out);
    }
    if (grad_cmd->parsed()) {
      return grad_args.run(out, err);
    }
    return compare_args.run(out);
  } catch (const TrainingDiverged& e) {
    return report_error(err, exit_diverged, e);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    for (const auto* sub : app.get_subcommands()) {
      err << sub->help();
    }
    return exit_config;
  } catch (const ShapeError& e) {
    return report_error(err, exit_config, e);
  } catch (const Error& e) {
    return report_error(err, exit_data, e);
  } catch (const fs::filesystem_error& e) {
    return report_error(err, exit_data, e);
  } catch (const std::exception& e) {
    return report_error(err, exit_failure, e);
  }
}

}  // namespace a3t
