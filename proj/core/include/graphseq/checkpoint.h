#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "graphseq/model.h"

namespace graphseq {

// Adam moments in the same flat layout as ModelParams::data().
struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

// On-disk layout:
//
//   GRAPHSEQ-CHECKPOINT\n
//   format_version=1\n
//   model.<key>=<value>\n ...      (ModelConfig, sorted by key)
//   meta.<key>=<value>\n ...       (free-form, sorted by key)
//   tensors=<count>\n
//   end_header\n
//   count x { u32 name_len, name, u32 rank, u64 dims[rank], f64 values[] }
//
// All integers and doubles are little-endian; values are row-major.
struct Checkpoint {
  ModelParams params;
  std::optional<OptimizerState> optimizer;
  std::map<std::string, std::string> meta;
};

inline constexpr int kCheckpointFormatVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt);
// Throws IoError on a malformed or truncated buffer.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace graphseq
