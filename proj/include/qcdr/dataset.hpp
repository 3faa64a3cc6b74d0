#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qcdr/distortion.hpp"

namespace qcdr {

enum class Split { pretrain, finetune, test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

struct ManifestRecord {
  std::string fisheye_path;  // relative to the dataset root
  std::string gt_path;
  int degree_label = 0;
  Split split = Split::pretrain;
};

struct SplitCounts {
  int pretrain = 0;
  int finetune = 0;
  int test = 0;
};

struct DatasetOptions {
  int image_size = 256;
  std::vector<int> degrees{1, 2, 3, 4, 5, 6, 7, 8, 9};  // finetune/test round-robin
  int pretrain_degree = 5;
  std::optional<DistortionParams> base;  // defaults to default_base_params
};

/// Records plus the parameter table they were synthesised with. Paths are
/// stored relative to `root`, so a dataset directory can be moved freely.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestRecord> records;
  std::uint64_t seed = 0;
  int image_size = 0;
  DegreeLadder params_table;

  std::vector<ManifestRecord> split(Split which) const;
  std::set<int> degrees(Split which) const;
  std::filesystem::path resolve(const std::string& relative) const { return root / relative; }

  /// Every file exists and decodes to equal-size images; every degree is in params_table.
  void validate() const;
};

/// Resizes sources to image_size, synthesises fisheye/gt pairs and writes
///   out_dir/{pretrain,finetune,test}/{fisheye,gt}/NNNNNN_dI.png
///   out_dir/manifest.txt, out_dir/params.txt
/// The pretrain split uses only pretrain_degree; the other splits cycle
/// through options.degrees. Deterministic for a given seed.
DatasetManifest build_dataset(const std::filesystem::path& src_dir,
                              const std::filesystem::path& out_dir, const SplitCounts& counts,
                              std::uint64_t seed, const DatasetOptions& options = {});

DatasetManifest load_dataset(const std::filesystem::path& dir);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
void write_params_table(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace qcdr
