#pragma once

#include <optional>
#include <string>

#include "json.hpp"
#include "parl/adam.hpp"
#include "parl/mlp.hpp"

namespace parl {

// Versioned binary checkpoint: a JSON metadata blob (policy kind, config
// snapshot, provenance), layer shapes, the flat little-endian float64
// parameter array, and optionally the Adam accumulators.

struct Checkpoint {
  nlohmann::json meta;
  std::optional<Mlp> net;            // absent for tabular baselines
  std::optional<AdamState> optimizer;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace parl
