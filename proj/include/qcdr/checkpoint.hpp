#pragma once

#include <filesystem>
#include <string>

#include "qcdr/model.hpp"

namespace qcdr {

enum class Stage { initialized, pretrained, finetuned };

std::string to_string(Stage stage);
Stage parse_stage(const std::string& text);

/// A model together with the lifecycle stage of its weights.
struct ModelState {
  QueryCdr model{nullptr};
  Stage stage = Stage::initialized;
  std::string checkpoint_id;  // empty until saved or loaded

  static ModelState create(const ModelConfig& config, uint64_t seed);
};

/// Single-file bundle:
///   QCDR-CHECKPOINT 1
///   stage <name>
///   config <n bytes>\n<key = value text>
///   tensor <name> f32 <ndim> <d0> ... <dn>\n<little-endian float32 payload>
///   end
/// Returns the checkpoint id (BLAKE2b digest prefix of the file bytes).
std::string save_checkpoint(const std::filesystem::path& path, const ModelState& state);
ModelState load_checkpoint(const std::filesystem::path& path);

/// Writes each query as q<i>.f32: "QRY1" magic, uint32 ndim, int64 dims, float32 data.
void export_queries(const ModelState& state, const std::filesystem::path& dir);
torch::Tensor read_query_file(const std::filesystem::path& path);

std::string digest_hex(std::string_view bytes, std::size_t hex_chars = 16);

}  // namespace qcdr
