#include "qcdr/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "qcdr/errors.hpp"
#include "qcdr/metrics.hpp"
#include "qcdr/training.hpp"

namespace qcdr {

ControlPolicy ControlPolicy::parse(const std::string& text) {
  ControlPolicy p;
  if (text == "matched") return p;
  if (text == "none") {
    p.kind = Kind::none;
    return p;
  }
  int a = 0;
  int b = 0;
  if (std::sscanf(text.c_str(), "fixed:%d", &a) == 1 && a >= 1 && a <= 9) {
    p.kind = Kind::fixed;
    p.fixed_degree = a;
    return p;
  }
  if (std::sscanf(text.c_str(), "swap:%d:%d", &a, &b) == 2 && a >= 1 && a <= 9 && b >= 1 && b <= 9) {
    return swap(a, b);
  }
  throw ValidationError("unknown control policy '" + text + "'");
}

ControlPolicy ControlPolicy::swap(int a, int b) {
  ControlPolicy p;
  p.kind = Kind::mapped;
  p.mapping[a] = b;
  p.mapping[b] = a;
  return p;
}

std::string ControlPolicy::to_string() const {
  switch (kind) {
    case Kind::matched: return "matched";
    case Kind::none: return "none";
    case Kind::fixed: return "fixed:" + std::to_string(fixed_degree);
    case Kind::mapped: {
      std::string s = "mapped";
      for (const auto& [from, to] : mapping) s += ":" + std::to_string(from) + ">" + std::to_string(to);
      return s;
    }
  }
  return "?";
}

int ControlPolicy::query_for(int degree) const {
  switch (kind) {
    case Kind::fixed: return fixed_degree;
    case Kind::mapped: {
      const auto it = mapping.find(degree);
      return it == mapping.end() ? degree : it->second;
    }
    default: return degree;
  }
}

// ---------------------------------------------------------------------------

std::string format_metric(double value) {
  if (std::isinf(value) && value > 0) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

double parse_metric(const std::string& text) {
  if (text == "inf") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw DataError("malformed metric value '" + text + "'");
  }
}

void EvalReport::finalize_averages() {
  double psnr_sum = 0.0;
  int psnr_n = 0;
  double ssim_sum = 0.0;
  for (const auto& [degree, m] : per_degree) {
    if (std::isfinite(m.psnr)) {
      psnr_sum += m.psnr;
      ++psnr_n;
    }
    ssim_sum += m.ssim;
  }
  avg_psnr = psnr_n ? psnr_sum / psnr_n
                    : (per_degree.empty() ? 0.0 : std::numeric_limits<double>::infinity());
  avg_ssim = per_degree.empty() ? 0.0 : ssim_sum / static_cast<double>(per_degree.size());
}

std::string EvalReport::format_table() const {
  std::ostringstream out;
  char cell[32];
  auto put = [&](const std::string& s, int width) {
    std::snprintf(cell, sizeof(cell), "%*s", width, s.c_str());
    out << cell;
  };
  constexpr int kWidth = 12;
  std::snprintf(cell, sizeof(cell), "%-8s", "Metric");
  out << cell;
  for (const auto& [degree, m] : per_degree) put("d" + std::to_string(degree), kWidth);
  put("Avg", kWidth);
  out << "\n";
  std::snprintf(cell, sizeof(cell), "%-8s", "PSNR");
  out << cell;
  for (const auto& [degree, m] : per_degree) put(format_metric(m.psnr), kWidth);
  put(format_metric(avg_psnr), kWidth);
  out << "\n";
  std::snprintf(cell, sizeof(cell), "%-8s", "SSIM");
  out << cell;
  for (const auto& [degree, m] : per_degree) put(format_metric(m.ssim), kWidth);
  put(format_metric(avg_ssim), kWidth);
  out << "\n";
  return out.str();
}

EvalReport EvalReport::parse_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  EvalReport report;
  std::vector<int> degrees;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::vector<std::string> tokens;
    for (std::string t; row >> t;) tokens.push_back(t);
    if (tokens.empty()) continue;
    if (tokens[0] == "Metric") {
      for (std::size_t i = 1; i + 1 < tokens.size(); ++i) {
        if (tokens[i].size() < 2 || tokens[i][0] != 'd') throw DataError("bad table header");
        degrees.push_back(std::stoi(tokens[i].substr(1)));
      }
      if (tokens.back() != "Avg") throw DataError("table header lacks Avg column");
      continue;
    }
    if (tokens[0] != "PSNR" && tokens[0] != "SSIM") continue;
    if (tokens.size() != degrees.size() + 2) throw DataError("table row width mismatch");
    const bool is_psnr = tokens[0] == "PSNR";
    for (std::size_t i = 0; i < degrees.size(); ++i) {
      auto& m = report.per_degree[degrees[i]];
      (is_psnr ? m.psnr : m.ssim) = parse_metric(tokens[i + 1]);
    }
    (is_psnr ? report.avg_psnr : report.avg_ssim) = parse_metric(tokens.back());
  }
  return report;
}

void EvalReport::write_records(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# checkpoint " << checkpoint_id << " dataset " << dataset_id << " control_mode "
      << control_mode << " policy " << policy << "\n";
  for (const auto& [degree, m] : per_degree) {
    out << degree << '\t' << format_metric(m.psnr) << '\t' << format_metric(m.ssim) << '\n';
  }
  out << "avg\t" << format_metric(avg_psnr) << '\t' << format_metric(avg_ssim) << '\n';
}

EvalReport EvalReport::read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  EvalReport report;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string key, p, s;
    row >> key >> p >> s;
    if (key == "avg") {
      report.avg_psnr = parse_metric(p);
      report.avg_ssim = parse_metric(s);
    } else {
      auto& m = report.per_degree[std::stoi(key)];
      m.psnr = parse_metric(p);
      m.ssim = parse_metric(s);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

std::string dataset_id(const DatasetManifest& dataset) {
  std::ostringstream text;
  text << dataset.seed;
  for (const auto& r : dataset.records) text << '\n' << r.fisheye_path << '\t' << r.degree_label;
  return digest_hex(text.str(), 12);
}

EvalReport evaluate(const RectifyBatchFn& rectify, const DatasetManifest& dataset,
                    int batch_size) {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  const auto test = dataset.split(Split::test);
  const auto present = dataset.degrees(Split::test);
  for (const auto& [degree, params] : dataset.params_table) {
    if (!present.contains(degree)) {
      throw DataError("test split has no records of degree d" + std::to_string(degree));
    }
  }
  EvalReport report;
  report.dataset_id = dataset_id(dataset);
  for (int degree : present) {
    std::vector<ManifestRecord> records;
    for (const auto& r : test)
      if (r.degree_label == degree) records.push_back(r);
    double psnr_sum = 0.0;
    double ssim_sum = 0.0;
    for (std::size_t start = 0; start < records.size(); start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(records.size(), start + static_cast<std::size_t>(batch_size));
      std::vector<torch::Tensor> inputs;
      std::vector<ImageBuffer> gts;
      for (std::size_t i = start; i < end; ++i) {
        inputs.push_back(image_to_tensor(read_image(dataset.resolve(records[i].fisheye_path))));
        gts.push_back(read_image(dataset.resolve(records[i].gt_path)));
      }
      const torch::Tensor outputs = rectify(torch::stack(inputs), degree);
      for (std::size_t i = 0; i < gts.size(); ++i) {
        const ImageBuffer out = quantize8(tensor_to_image(outputs[static_cast<int64_t>(i)]));
        psnr_sum += psnr(out, gts[i]);
        ssim_sum += ssim(out, gts[i]);
      }
    }
    const double n = static_cast<double>(records.size());
    report.per_degree[degree] = {psnr_sum / n, ssim_sum / n, static_cast<int>(records.size())};
  }
  report.finalize_averages();
  return report;
}

EvalReport evaluate(ModelState& state, const DatasetManifest& dataset,
                    const ControlPolicy& policy, int batch_size) {
  QueryCdr& model = state.model;
  const ControlMode mode = model->config().control_mode;
  if (policy.kind == ControlPolicy::Kind::none && mode != ControlMode::none) {
    throw ValidationError("policy 'none' requires a model trained with control_mode=none");
  }
  model->eval();
  torch::NoGradGuard no_grad;
  const RectifyBatchFn rectify = [&](const torch::Tensor& input, int degree) {
    std::optional<torch::Tensor> control;
    if (mode != ControlMode::none) {
      control = make_control_source(mode, policy.query_for(degree), model->queries());
    }
    return model->forward(input, control).image_out;
  };
  EvalReport report = evaluate(rectify, dataset, batch_size);
  report.checkpoint_id = state.checkpoint_id;
  report.control_mode = to_string(mode);
  report.policy = policy.to_string();
  return report;
}

}  // namespace qcdr
