#include "qcdr/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "qcdr/errors.hpp"

namespace fs = std::filesystem;

namespace qcdr {

std::string to_string(Split split) {
  switch (split) {
    case Split::pretrain: return "pretrain";
    case Split::finetune: return "finetune";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  if (text == "pretrain") return Split::pretrain;
  if (text == "finetune") return Split::finetune;
  if (text == "test") return Split::test;
  throw DataError("unknown split '" + text + "'");
}

std::vector<ManifestRecord> DatasetManifest::split(Split which) const {
  std::vector<ManifestRecord> out;
  for (const auto& r : records)
    if (r.split == which) out.push_back(r);
  return out;
}

std::set<int> DatasetManifest::degrees(Split which) const {
  std::set<int> out;
  for (const auto& r : records)
    if (r.split == which) out.insert(r.degree_label);
  return out;
}

void DatasetManifest::validate() const {
  for (const auto& r : records) {
    if (!params_table.contains(r.degree_label)) {
      throw DataError("degree d" + std::to_string(r.degree_label) + " missing from params table");
    }
    const ImageBuffer fisheye = read_image(resolve(r.fisheye_path));
    const ImageBuffer gt = read_image(resolve(r.gt_path));
    if (!fisheye.same_shape(gt)) throw DataError("size mismatch in pair " + r.fisheye_path);
  }
}

namespace {

std::vector<fs::path> list_sources(const fs::path& src_dir) {
  if (!fs::is_directory(src_dir)) throw DataError("source directory not found: " + src_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(src_dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// Walks the shuffled source list, skipping files that fail to decode.
class SourceCursor {
 public:
  SourceCursor(const std::vector<fs::path>& files, int image_size)
      : files_(files), image_size_(image_size) {}

  void rewind() { pos_ = 0; }

  std::optional<ImageBuffer> next() {
    while (pos_ < files_.size()) {
      const fs::path& path = files_[pos_++];
      try {
        ImageBuffer img = center_crop_square(read_image(path));
        return resize(img, image_size_, image_size_);
      } catch (const std::exception& e) {
        std::cerr << "warning: skipping undecodable source " << path << ": " << e.what() << "\n";
      }
    }
    return std::nullopt;
  }

 private:
  const std::vector<fs::path>& files_;
  int image_size_;
  std::size_t pos_ = 0;
};

std::string record_stem(int index, int degree) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d_d%d", index, degree);
  return buf;
}

}  // namespace

DatasetManifest build_dataset(const fs::path& src_dir, const fs::path& out_dir,
                              const SplitCounts& counts, std::uint64_t seed,
                              const DatasetOptions& options) {
  if (counts.pretrain < 0 || counts.finetune < 0 || counts.test < 0) {
    throw ValidationError("split counts must be non-negative");
  }
  if (options.image_size < 8) throw ValidationError("image_size must be >= 8");
  if (options.degrees.empty()) throw ValidationError("at least one degree is required");
  std::vector<fs::path> files = list_sources(src_dir);
  const int needed_max = std::max({counts.pretrain, counts.finetune, counts.test});
  if (static_cast<int>(files.size()) < needed_max) {
    throw DataError("need at least " + std::to_string(needed_max) + " source images, found " +
                    std::to_string(files.size()));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(files.begin(), files.end(), rng);

  const double norm_radius = 0.5 * options.image_size;
  const DistortionParams base =
      options.base ? options.base->with_norm_radius(norm_radius) : default_base_params(norm_radius);
  const DegreeLadder ladder = build_degree_ladder(base, 9);

  DatasetManifest manifest;
  manifest.root = out_dir;
  manifest.seed = seed;
  manifest.image_size = options.image_size;
  std::set<int> used{options.pretrain_degree};
  used.insert(options.degrees.begin(), options.degrees.end());
  for (int d : used) {
    if (!ladder.contains(d)) throw ValidationError("degree " + std::to_string(d) + " not in 1..9");
    manifest.params_table.emplace(d, ladder.at(d));
  }

  const int total = counts.pretrain + counts.finetune + counts.test;
  const bool disjoint = total <= static_cast<int>(files.size());
  if (!disjoint) {
    std::cerr << "warning: " << files.size() << " sources for " << total
              << " records; splits will share source images\n";
  }

  SourceCursor cursor(files, options.image_size);
  int index = 0;
  auto emit_split = [&](Split split, int count) {
    if (!disjoint) cursor.rewind();
    for (int j = 0; j < count; ++j) {
      std::optional<ImageBuffer> gt = cursor.next();
      if (!gt) {
        throw DataError("ran out of decodable sources while filling split " + to_string(split));
      }
      const int degree = split == Split::pretrain
                             ? options.pretrain_degree
                             : options.degrees[static_cast<std::size_t>(j) % options.degrees.size()];
      const ImageBuffer fisheye = synthesize_fisheye(*gt, manifest.params_table.at(degree));
      const std::string stem = record_stem(index++, degree) + ".png";
      ManifestRecord record;
      record.fisheye_path = to_string(split) + "/fisheye/" + stem;
      record.gt_path = to_string(split) + "/gt/" + stem;
      record.degree_label = degree;
      record.split = split;
      write_png(out_dir / record.fisheye_path, fisheye);
      write_png(out_dir / record.gt_path, *gt);
      manifest.records.push_back(std::move(record));
    }
  };
  emit_split(Split::pretrain, counts.pretrain);
  emit_split(Split::finetune, counts.finetune);
  emit_split(Split::test, counts.test);

  write_manifest(manifest, out_dir / "manifest.txt");
  write_params_table(manifest, out_dir / "params.txt");
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# seed " << manifest.seed << "\n";
  for (const auto& r : manifest.records) {
    out << r.fisheye_path << '\t' << r.gt_path << '\t' << r.degree_label << '\t'
        << to_string(r.split) << '\n';
  }
}

void write_params_table(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# image_size " << manifest.image_size << "\n";
  char line[256];
  for (const auto& [degree, params] : manifest.params_table) {
    const auto& k = params.k();
    std::snprintf(line, sizeof(line), "%d %.17g %.17g %.17g %.17g\n", degree, k[0], k[1], k[2],
                  k[3]);
    out << line;
  }
}

DatasetManifest load_dataset(const fs::path& dir) {
  DatasetManifest manifest;
  manifest.root = dir;

  std::ifstream params(dir / "params.txt");
  if (!params) throw DataError("missing params.txt in " + dir.string());
  std::string line;
  while (std::getline(params, line)) {
    if (line.empty()) continue;
    std::istringstream in(line);
    if (line[0] == '#') {
      std::string hash, key;
      in >> hash >> key;
      if (key == "image_size") in >> manifest.image_size;
      continue;
    }
    int degree = 0;
    std::array<double, 4> k{};
    if (!(in >> degree >> k[0] >> k[1] >> k[2] >> k[3])) {
      throw DataError("malformed params.txt line: " + line);
    }
    const double radius = manifest.image_size > 0 ? 0.5 * manifest.image_size : 1.0;
    manifest.params_table.emplace(degree, DistortionParams(k, degree, radius));
  }

  std::ifstream records(dir / "manifest.txt");
  if (!records) throw DataError("missing manifest.txt in " + dir.string());
  while (std::getline(records, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream in(line);
      std::string hash, key;
      in >> hash >> key;
      if (key == "seed") in >> manifest.seed;
      continue;
    }
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, '\t')) fields.push_back(field);
    if (fields.size() != 4) throw DataError("malformed manifest line: " + line);
    ManifestRecord r;
    r.fisheye_path = fields[0];
    r.gt_path = fields[1];
    r.degree_label = std::stoi(fields[2]);
    r.split = parse_split(fields[3]);
    if (!manifest.params_table.contains(r.degree_label)) {
      throw DataError("manifest references degree d" + fields[2] + " absent from params.txt");
    }
    manifest.records.push_back(std::move(r));
  }
  return manifest;
}

}  // namespace qcdr
