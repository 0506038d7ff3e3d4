#pragma once

#include <filesystem>

#include "a3t/model.hpp"

namespace a3t {

struct Checkpoint {
  ModelParams params;
  /// Scale the training data was divided by; inputs are normalized with it.
  double scale_max = 1.0;
};

// Text format: a header of `key value` lines fixing the ModelShape, then for
// each tensor a manifest line `param <name> <rows> <cols>` followed by its
// rows. Values are written in shortest round-trip form, so save followed by
// load reproduces every bit.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     double scale_max);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace a3t
