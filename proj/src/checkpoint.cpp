#include "a3t/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "a3t/csv.hpp"
#include "a3t/error.hpp"

namespace a3t {

namespace {

constexpr const char* k_magic = "a3tgcn-checkpoint";
constexpr int k_version = 1;

double parse_double(const std::string& token, const std::string& source, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    throw ParseError(source, line, 0, "bad number '" + token + "'");
  }
  return v;
}

std::size_t parse_count(const std::string& token, const std::string& source, std::size_t line) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    throw ParseError(source, line, 0, "bad count '" + token + "'");
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     double scale_max) {
  const ModelShape& s = params.shape();
  std::ostringstream out;
  out << k_magic << ' ' << k_version << '\n'
      << "kind " << to_string(s.kind) << '\n'
      << "nodes " << s.nodes << '\n'
      << "history " << s.history << '\n'
      << "hidden " << s.hidden << '\n'
      << "horizon " << s.horizon << '\n'
      << "scorer_width " << s.scorer_width << '\n'
      << "gc_width " << s.gc_width << '\n'
      << "per_gate_gc " << (s.per_gate_gc ? 1 : 0) << '\n'
      << "scorer_tanh " << (s.scorer_tanh ? 1 : 0) << '\n'
      << "scale_max " << format_double(scale_max) << '\n'
      << "tensors " << params.entries().size() << '\n';
  for (const auto& e : params.entries()) {
    out << "param " << e.name << ' ' << e.value.rows() << ' ' << e.value.cols() << '\n';
    for (std::size_t r = 0; r < e.value.rows(); ++r) {
      for (std::size_t c = 0; c < e.value.cols(); ++c) {
        out << (c ? " " : "") << format_double(e.value(r, c));
      }
      out << '\n';
    }
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) {
      throw Error("cannot write checkpoint " + path.string());
    }
    file << out.str();
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string src = path.string();
  if (!in) {
    throw ParseError(src, 0, 0, "cannot open checkpoint");
  }
  std::size_t line_no = 0;
  std::string line;
  auto next_line = [&]() -> std::istringstream {
    if (!std::getline(in, line)) {
      throw ParseError(src, line_no + 1, 0, "unexpected end of checkpoint");
    }
    ++line_no;
    return std::istringstream(line);
  };

  {
    auto head = next_line();
    std::string magic;
    int version = 0;
    head >> magic >> version;
    if (magic != k_magic || version != k_version) {
      throw ParseError(src, line_no, 0, "not a version 1 checkpoint");
    }
  }
  std::map<std::string, std::string> header;
  std::size_t tensor_count = 0;
  while (true) {
    auto fields = next_line();
    std::string key;
    std::string value;
    fields >> key >> value;
    if (key == "tensors") {
      tensor_count = parse_count(value, src, line_no);
      break;
    }
    header[key] = value;
  }
  auto need = [&](const char* key) -> const std::string& {
    const auto it = header.find(key);
    if (it == header.end()) {
      throw ParseError(src, line_no, 0, std::string("missing header field '") + key + "'");
    }
    return it->second;
  };

  ModelShape shape;
  const auto kind = parse_model_kind(need("kind"));
  if (!kind) {
    throw ParseError(src, 0, 0, "unknown model kind '" + need("kind") + "'");
  }
  shape.kind = *kind;
  shape.nodes = parse_count(need("nodes"), src, 0);
  shape.history = parse_count(need("history"), src, 0);
  shape.hidden = parse_count(need("hidden"), src, 0);
  shape.horizon = parse_count(need("horizon"), src, 0);
  shape.scorer_width = parse_count(need("scorer_width"), src, 0);
  shape.gc_width = parse_count(need("gc_width"), src, 0);
  shape.per_gate_gc = need("per_gate_gc") == "1";
  shape.scorer_tanh = need("scorer_tanh") == "1";

  Checkpoint ck;
  ck.scale_max = parse_double(need("scale_max"), src, 0);
  ck.params = ModelParams(shape);
  if (tensor_count != ck.params.entries().size()) {
    throw ShapeError(src + ": " + std::to_string(tensor_count) + " tensors listed, model " +
                     std::string(to_string(shape.kind)) + " has " +
                     std::to_string(ck.params.entries().size()));
  }
  for (auto& entry : ck.params.entries()) {
    auto manifest = next_line();
    std::string tag;
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    manifest >> tag >> name >> rows >> cols;
    if (tag != "param") {
      throw ParseError(src, line_no, 0, "expected a param manifest line");
    }
    if (name != entry.name || rows != entry.value.rows() || cols != entry.value.cols()) {
      throw ShapeError(src + ":" + std::to_string(line_no) + ": parameter " + name + " [" +
                       std::to_string(rows) + "x" + std::to_string(cols) + "] does not match " +
                       entry.name + " " + entry.value.shape_string());
    }
    for (std::size_t r = 0; r < rows; ++r) {
      auto values = next_line();
      std::string token;
      for (std::size_t c = 0; c < cols; ++c) {
        if (!(values >> token)) {
          throw ParseError(src, line_no, c + 1, "missing value");
        }
        entry.value(r, c) = parse_double(token, src, line_no);
      }
    }
  }
  ck.params.check_shapes();
  return ck;
}

}  // namespace a3t
