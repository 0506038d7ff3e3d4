#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "a3t/tensor.hpp"

namespace a3t {

/// Parses a headerless numeric CSV into a dense matrix. Ragged rows,
/// non-numeric and non-finite cells raise ParseError with 1-based row/column.
Tensor read_numeric_csv(const std::filesystem::path& path);
Tensor parse_numeric_csv(const std::string& text, const std::string& source_name);

/// Writes a matrix as CSV, shortest round-trip formatting, optional header line.
void write_numeric_csv(const std::filesystem::path& path, const Tensor& values,
                       const std::vector<std::string>& header = {});

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace a3t
