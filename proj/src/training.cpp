#include "qcdr/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "qcdr/errors.hpp"
#include "qcdr/losses.hpp"

namespace qcdr {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (pretrain_steps < 0 || finetune_steps < 0) throw ConfigError("step counts must be >= 0");
  if (pretrain_degree < 1 || pretrain_degree > 9) throw ConfigError("pretrain_degree must be in 1..9");
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg) {
  TrainConfig t;
  t.batch_size = cfg.get_int("batch_size", t.batch_size);
  t.learning_rate = cfg.get_double("learning_rate", t.learning_rate);
  t.pretrain_steps = cfg.get_int("pretrain_steps", t.pretrain_steps);
  t.finetune_steps = cfg.get_int("finetune_steps", t.finetune_steps);
  t.seed = static_cast<uint64_t>(cfg.get_int("seed", static_cast<int>(t.seed)));
  t.weight_reconstruction = cfg.get_double("weight_reconstruction", t.weight_reconstruction);
  t.weight_multiscale = cfg.get_double("weight_multiscale", t.weight_multiscale);
  t.pretrain_degree = cfg.get_int("pretrain_degree", t.pretrain_degree);
  t.log_every = cfg.get_int("log_every", t.log_every);
  t.validate();
  return t;
}

void TrainReport::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# stage " << stage << "\n";
  char line[160];
  for (const auto& r : records) {
    std::snprintf(line, sizeof(line), "%d\t%.9g\t%.9g\t%.9g\t%d\n", r.step, r.l_r, r.l_m, r.total,
                  r.degree);
    out << line;
  }
}

// ---------------------------------------------------------------------------

torch::Tensor image_to_tensor(const ImageBuffer& image) {
  const auto values = image.values();
  return torch::from_blob(const_cast<double*>(values.data()),
                          {3, image.height(), image.width()}, torch::kDouble)
      .to(torch::kFloat);
}

ImageBuffer tensor_to_image(const torch::Tensor& chw) {
  const torch::Tensor t = chw.detach().to(torch::kCPU, torch::kDouble).contiguous();
  if (t.dim() != 3 || t.size(0) != 3) throw DimensionError("expected a (3, H, W) tensor");
  ImageBuffer image(static_cast<int>(t.size(1)), static_cast<int>(t.size(2)));
  std::copy_n(t.data_ptr<double>(), t.numel(), image.values().begin());
  image.clamp();
  return image;
}

PairLoader::PairLoader(const DatasetManifest& manifest, Split split, uint64_t seed)
    : manifest_(manifest), rng_(seed) {
  for (const auto& r : manifest.split(split)) pools_[r.degree_label].records.push_back(r);
  for (auto& [degree, pool] : pools_) std::shuffle(pool.records.begin(), pool.records.end(), rng_);
}

std::vector<int> PairLoader::degrees() const {
  std::vector<int> out;
  for (const auto& [degree, pool] : pools_) out.push_back(degree);
  return out;
}

std::size_t PairLoader::size() const {
  std::size_t n = 0;
  for (const auto& [degree, pool] : pools_) n += pool.records.size();
  return n;
}

Batch PairLoader::next(int degree, int batch_size) {
  const auto it = pools_.find(degree);
  if (it == pools_.end() || it->second.records.empty()) {
    throw DataError("no records of degree d" + std::to_string(degree));
  }
  Pool& pool = it->second;
  std::vector<torch::Tensor> inputs, gts;
  for (int i = 0; i < batch_size; ++i) {
    if (pool.cursor == pool.records.size()) {
      pool.cursor = 0;
      std::shuffle(pool.records.begin(), pool.records.end(), rng_);
    }
    const ManifestRecord& r = pool.records[pool.cursor++];
    if (r.degree_label != degree) throw DataError("mixed-degree batch");
    inputs.push_back(image_to_tensor(read_image(manifest_.resolve(r.fisheye_path))));
    gts.push_back(image_to_tensor(read_image(manifest_.resolve(r.gt_path))));
  }
  return {torch::stack(inputs), torch::stack(gts), degree};
}

// ---------------------------------------------------------------------------

std::optional<torch::Tensor> control_for_degree(QueryCdr& model, int degree) {
  const ControlMode mode = model->config().control_mode;
  if (mode == ControlMode::none) return std::nullopt;
  return make_control_source(mode, degree, model->queries());
}

LossTerms compute_losses(QueryCdr& model, const Batch& batch, const TrainConfig& cfg) {
  const ForwardOutput out = model->forward(batch.input, control_for_degree(model, batch.degree));
  ScaleHeads heads = model->heads();
  LossTerms terms;
  terms.l_r = loss_reconstruction(out.image_out, batch.gt);
  terms.l_m = loss_multiscale(batch.gt, out.decoder_features, heads);
  terms.total = cfg.weight_reconstruction * terms.l_r + cfg.weight_multiscale * terms.l_m;
  return terms;
}

namespace {

TrainReport run_stage(ModelState& state, PairLoader& loader, const TrainConfig& cfg, int steps,
                      const std::vector<int>& degree_cycle, const std::string& stage) {
  TrainReport report;
  report.stage = stage;
  QueryCdr& model = state.model;
  model->train();
  torch::optim::Adam optimizer(model->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
  const auto start = std::chrono::steady_clock::now();
  for (int step = 0; step < steps; ++step) {
    const int degree = degree_cycle[static_cast<std::size_t>(step) % degree_cycle.size()];
    const Batch batch = loader.next(degree, cfg.batch_size);
    const LossTerms terms = compute_losses(model, batch, cfg);
    StepRecord rec{step, terms.l_r.item<double>(), terms.l_m.item<double>(),
                   terms.total.item<double>(), degree};
    if (!std::isfinite(rec.total)) {
      throw TrainingError(stage + " diverged at step " + std::to_string(step) + " (degree d" +
                          std::to_string(degree) + "): L_r=" + std::to_string(rec.l_r) +
                          " L_m=" + std::to_string(rec.l_m));
    }
    optimizer.zero_grad();
    terms.total.backward();
    optimizer.step();
    report.records.push_back(rec);
    if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step + 1 == steps)) {
      std::fprintf(stderr, "[%s] step %d/%d d%d L_r=%.5f L_m=%.5f total=%.5f\n", stage.c_str(),
                   step + 1, steps, degree, rec.l_r, rec.l_m, rec.total);
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace

TrainReport pretrain(ModelState& state, const DatasetManifest& dataset, const TrainConfig& cfg,
                     const std::optional<std::filesystem::path>& checkpoint_path) {
  cfg.validate();
  PairLoader loader(dataset, Split::pretrain, cfg.seed);
  if (loader.size() == 0) throw DataError("pretrain split is empty");
  const std::vector<int> degrees = loader.degrees();
  if (degrees.size() != 1) throw DataError("pretrain split must contain a single degree");
  if (degrees.front() != cfg.pretrain_degree) {
    throw DataError("pretrain split holds d" + std::to_string(degrees.front()) +
                    " but pretrain_degree is d" + std::to_string(cfg.pretrain_degree));
  }
  TrainReport report = run_stage(state, loader, cfg, cfg.pretrain_steps, degrees, "pretrain");
  state.stage = Stage::pretrained;
  if (checkpoint_path) {
    state.checkpoint_id = save_checkpoint(*checkpoint_path, state);
    report.checkpoint = *checkpoint_path;
  }
  return report;
}

TrainReport finetune(ModelState& state, const DatasetManifest& dataset, const TrainConfig& cfg,
                     const std::optional<std::filesystem::path>& checkpoint_path,
                     std::optional<std::vector<int>> degrees) {
  cfg.validate();
  if (state.stage != Stage::pretrained) {
    throw StateError("finetune requires a pretrained model, got stage " + to_string(state.stage));
  }
  PairLoader loader(dataset, Split::finetune, cfg.seed + 1);
  if (!degrees) {
    degrees.emplace();
    *degrees = loader.degrees();
  }
  const std::vector<int> present = loader.degrees();
  for (int d : *degrees) {
    if (std::find(present.begin(), present.end(), d) == present.end()) {
      throw DataError("finetune split has no records of degree d" + std::to_string(d));
    }
    if (d > state.model->queries()->size()) throw DataError("no query slot for degree d" + std::to_string(d));
  }
  state.model->queries()->replicate(cfg.pretrain_degree);
  TrainReport report = run_stage(state, loader, cfg, cfg.finetune_steps, *degrees, "finetune");
  state.stage = Stage::finetuned;
  if (checkpoint_path) {
    state.checkpoint_id = save_checkpoint(*checkpoint_path, state);
    report.checkpoint = *checkpoint_path;
  }
  return report;
}

}  // namespace qcdr
