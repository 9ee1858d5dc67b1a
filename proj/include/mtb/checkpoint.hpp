#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mtb/encoder.hpp"
#include "mtb/objectives.hpp"
#include "mtb/tokens.hpp"

namespace mtb {

inline constexpr int kCheckpointVersion = 1;

/// A checkpoint directory holds manifest.json, tensors.bin (little-endian
/// float32, manifest order) and vocab.txt.
struct Checkpoint {
  EncoderConfig config;
  EncoderParams<float> params;
  Vocabulary vocab;
  std::optional<ClassifierHead<float>> head;
  std::vector<std::string> relation_names;
  std::int64_t step = 0;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);

/// Rejects unknown versions, shape mismatches and vocabularies whose
/// fingerprint differs from the one recorded at save time.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Throws if the vocabulary does not match the checkpoint's.
void check_vocab(const Checkpoint& checkpoint, const Vocabulary& vocab);

std::string encoder_config_to_json(const EncoderConfig& config);
EncoderConfig encoder_config_from_json(const std::string& text);

}  // namespace mtb
