#include "a3t/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "a3t/error.hpp"

namespace a3t {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace

Tensor parse_numeric_csv(const std::string& text, const std::string& source_name) {
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::size_t line_no = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) {
      continue;
    }
    std::size_t col = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = view.find(',', start);
      std::string_view cell =
          trim(view.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      ++col;
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size()) {
        throw ParseError(source_name, line_no, col,
                         "non-numeric cell '" + std::string(cell) + "'");
      }
      if (!std::isfinite(v)) {
        throw ParseError(source_name, line_no, col, "non-finite value");
      }
      values.push_back(v);
      if (comma == std::string_view::npos) {
        break;
      }
      start = comma + 1;
    }
    if (rows == 0) {
      cols = col;
    } else if (col != cols) {
      throw ParseError(source_name, line_no, 0,
                       "row " + std::to_string(line_no) + " has " + std::to_string(col) +
                           " columns, expected " + std::to_string(cols));
    }
    ++rows;
  }
  return Tensor(rows, cols, std::move(values));
}

Tensor read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ParseError(path.string(), 0, 0, "cannot open file");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_numeric_csv(buffer.str(), path.string());
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

void write_numeric_csv(const std::filesystem::path& path, const Tensor& values,
                       const std::vector<std::string>& header) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot write " + path.string());
  }
  for (std::size_t i = 0; i < header.size(); ++i) {
    out << (i ? "," : "") << header[i];
  }
  if (!header.empty()) {
    out << '\n';
  }
  for (std::size_t r = 0; r < values.rows(); ++r) {
    for (std::size_t c = 0; c < values.cols(); ++c) {
      out << (c ? "," : "") << format_double(values(r, c));
    }
    out << '\n';
  }
}

}  // namespace a3t
