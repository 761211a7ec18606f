#pragma once

// Checkpoint file: 8-byte magic "CURLMCK1", uint64 little-endian header
// length, a JSON header (model config, step, tag vocabulary, tokenizer hash,
// tensor list), then raw little-endian float32 blobs: every parameter tensor
// in header order, followed by the AdamW first and second moments in the same
// order when the header says "has_optimizer": true.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "curlm/model.hpp"

namespace curlm {

struct Checkpoint {
  model::ModelParams<float> params;
  std::optional<model::OptimizerState<float>> optimizer;
  std::int64_t step = 0;
  std::uint64_t tokenizer_hash = 0;
  std::vector<std::string> tag_vocabulary;
  std::string train_config_json = "{}";  // free-form JSON object
};

/// Writes to `path` via a temporary file and rename.
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);

/// Throws ParseError on a bad magic, header or truncated blob.
Checkpoint load_checkpoint(const std::string& path);

std::string format_hash(std::uint64_t hash);

}  // namespace curlm
