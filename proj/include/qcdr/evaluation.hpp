#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>

#include <torch/torch.h>

#include "qcdr/checkpoint.hpp"
#include "qcdr/dataset.hpp"

namespace qcdr {

/// Which query a test record of degree d_i is rectified with.
struct ControlPolicy {
  enum class Kind { matched, mapped, fixed, none };
  Kind kind = Kind::matched;
  std::map<int, int> mapping;  // mapped: degree -> query label (identity when absent)
  int fixed_degree = 0;

  /// "matched", "none", "fixed:K", "swap:A:B".
  static ControlPolicy parse(const std::string& text);
  static ControlPolicy swap(int a, int b);
  std::string to_string() const;
  int query_for(int degree) const;
};

struct DegreeMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
  int count = 0;
};

struct EvalReport {
  std::map<int, DegreeMetrics> per_degree;
  double avg_psnr = 0.0;
  double avg_ssim = 0.0;
  std::string checkpoint_id;
  std::string dataset_id;
  std::string control_mode;
  std::string policy;

  /// Recomputes the Avg column as the mean of the per-degree columns
  /// (infinite PSNR entries are left out of the PSNR mean).
  void finalize_averages();

  /// Aligned table: a header of degrees plus Avg, then PSNR and SSIM rows.
  std::string format_table() const;
  static EvalReport parse_table(const std::string& text);

  /// Machine-readable lines "degree<TAB>psnr<TAB>ssim", then "avg<TAB>...".
  void write_records(const std::filesystem::path& path) const;
  static EvalReport read_records(const std::filesystem::path& path);
};

std::string format_metric(double value);
double parse_metric(const std::string& text);

/// Maps a (B, 3, S, S) batch of fisheye inputs of one degree to rectified outputs.
using RectifyBatchFn = std::function<torch::Tensor(const torch::Tensor& input, int degree)>;

/// Runs the test split through `rectify`, accumulating mean PSNR/SSIM per
/// degree. Outputs are scored after 8-bit quantisation, i.e. as they would be
/// saved. Every degree in the params table must appear in the test split.
EvalReport evaluate(const RectifyBatchFn& rectify, const DatasetManifest& dataset,
                    int batch_size = 8);

EvalReport evaluate(ModelState& state, const DatasetManifest& dataset,
                    const ControlPolicy& policy, int batch_size = 8);

std::string dataset_id(const DatasetManifest& dataset);

}  // namespace qcdr
