#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qcdr/checkpoint.hpp"
#include "qcdr/config.hpp"
#include "qcdr/dataset.hpp"
#include "qcdr/errors.hpp"
#include "qcdr/evaluation.hpp"
#include "qcdr/image.hpp"
#include "qcdr/rectifier.hpp"
#include "qcdr/scenes.hpp"
#include "qcdr/service.hpp"
#include "qcdr/training.hpp"

namespace fs = std::filesystem;
using namespace qcdr;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out;
};

KeyValueConfig load_config(const GlobalOptions& g) {
  KeyValueConfig cfg = g.config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(g.config_path);
  if (g.seed) cfg.set("seed", std::to_string(*g.seed));
  return cfg;
}

ModelConfig model_config(const KeyValueConfig& cfg) {
  const std::string preset = cfg.get_string("preset", "full");
  ModelConfig base;
  if (preset == "micro64") {
    base = ModelConfig::micro64();
  } else if (preset == "micro32") {
    base = ModelConfig::micro32();
  } else if (preset != "full") {
    throw ConfigError("unknown preset '" + preset + "' (full, micro64, micro32)");
  }
  KeyValueConfig merged = base.to_config();
  merged.merge(cfg);
  return ModelConfig::from_config(merged);
}

fs::path require_out(const GlobalOptions& g, const char* what) {
  if (g.out.empty()) throw ValidationError(std::string("--out is required for ") + what);
  return g.out;
}

void print_train_summary(const TrainReport& report) {
  std::cout << report.stage << ": " << report.records.size() << " steps in " << report.wall_seconds
            << " s";
  if (!report.records.empty()) std::cout << ", final loss " << report.records.back().total;
  std::cout << "\ncheckpoint " << report.checkpoint.string() << "\n";
}

RectifyService* g_service = nullptr;

void handle_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-controlled fisheye rectification lab"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  uint64_t seed_value = 0;
  app.add_option("--config", g.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed_value, "random seed");
  app.add_option("--out", g.out, "output directory (output file for rectify)");

  // synth
  auto* synth = app.add_subcommand("synth", "synthesise a fisheye/gt dataset");
  std::string src_dir;
  int procedural = 0;
  std::vector<int> counts;
  int size = 0;
  std::vector<int> degrees;
  int pretrain_degree = 0;
  auto* src_opt = synth->add_option("--src", src_dir, "folder of source images")->check(CLI::ExistingDirectory);
  auto* proc_opt = synth->add_option("--procedural", procedural, "render N synthetic scenes as sources")
                       ->check(CLI::PositiveNumber);
  src_opt->excludes(proc_opt);
  synth->add_option("--counts", counts, "pretrain,finetune,test image counts")
      ->delimiter(',')
      ->expected(3)
      ->required();
  synth->add_option("--size", size, "square image size (default 256)");
  synth->add_option("--degrees", degrees, "degree labels for finetune/test")->delimiter(',');
  synth->add_option("--pretrain-degree", pretrain_degree, "degree of the pretrain split");

  // pretrain / finetune
  std::string data_dir;
  std::string ckpt;
  int steps = -1;
  auto* pre = app.add_subcommand("pretrain", "coarse training on the single pretrain degree");
  pre->add_option("--data", data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
  pre->add_option("--steps", steps, "override pretrain_steps");
  auto* fine = app.add_subcommand("finetune", "per-degree training from a pretrained checkpoint");
  fine->add_option("--data", data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
  fine->add_option("--ckpt", ckpt, "pretrained checkpoint")->required()->check(CLI::ExistingFile);
  fine->add_option("--steps", steps, "override finetune_steps");

  // eval
  std::string policy_text = "matched";
  int eval_batch = 8;
  auto* eval = app.add_subcommand("eval", "PSNR/SSIM per degree on the test split");
  eval->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--policy", policy_text, "matched | none | fixed:K | swap:A:B");
  eval->add_option("--batch", eval_batch, "evaluation batch size")->check(CLI::PositiveNumber);

  // rectify
  std::string image_path;
  int degree = 0;
  std::vector<double> blend;
  auto* rect = app.add_subcommand("rectify", "rectify one image");
  rect->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  rect->add_option("--image", image_path, "input image")->required()->check(CLI::ExistingFile);
  auto* degree_opt = rect->add_option("--degree", degree, "degree label");
  auto* blend_opt = rect->add_option("--blend", blend, "convex weights w1,...,wN")->delimiter(',');
  degree_opt->excludes(blend_opt);

  // serve
  int port = 8080;
  std::string host = "127.0.0.1";
  int max_side = 1024;
  auto* serve = app.add_subcommand("serve", "HTTP rectification service");
  serve->add_option("--ckpt", ckpt, "finetuned checkpoint")->required()->check(CLI::ExistingFile);
  serve->add_option("--port", port, "TCP port (0 picks one)");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--max-side", max_side, "largest accepted image side")->check(CLI::PositiveNumber);

  // export-queries
  auto* exq = app.add_subcommand("export-queries", "write each learned query as q<i>.f32");
  exq->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }
  if (*seed_opt) g.seed = seed_value;

  try {
    const KeyValueConfig cfg = load_config(g);

    if (*synth) {
      if (src_dir.empty() && procedural == 0) throw ValidationError("synth needs --src or --procedural");
      const fs::path out = require_out(g, "synth");
      DatasetOptions options;
      options.image_size = size > 0 ? size : cfg.get_int("image_size", options.image_size);
      options.degrees = degrees.empty() ? cfg.get_int_list("degrees", options.degrees) : degrees;
      options.pretrain_degree =
          pretrain_degree > 0 ? pretrain_degree : cfg.get_int("pretrain_degree", options.pretrain_degree);
      const auto seed = static_cast<uint64_t>(cfg.get_int("seed", 0));
      fs::path source = src_dir;
      if (procedural > 0) {
        source = out / "sources";
        write_scene_folder(source, procedural, options.image_size, seed);
      }
      const DatasetManifest m =
          build_dataset(source, out, SplitCounts{counts[0], counts[1], counts[2]}, seed, options);
      std::cout << "wrote " << m.records.size() << " records to " << out.string() << "\n";
      return 0;
    }

    if (*pre) {
      const fs::path out = require_out(g, "pretrain");
      TrainConfig tc = TrainConfig::from_config(cfg);
      if (steps >= 0) tc.pretrain_steps = steps;
      const DatasetManifest data = load_dataset(data_dir);
      ModelState state = ModelState::create(model_config(cfg), tc.seed);
      const TrainReport report = pretrain(state, data, tc, out / "pretrained.ckpt");
      report.write(out / "pretrain_log.tsv");
      print_train_summary(report);
      return 0;
    }

    if (*fine) {
      const fs::path out = require_out(g, "finetune");
      TrainConfig tc = TrainConfig::from_config(cfg);
      if (steps >= 0) tc.finetune_steps = steps;
      const DatasetManifest data = load_dataset(data_dir);
      ModelState state = load_checkpoint(ckpt);
      const TrainReport report = finetune(state, data, tc, out / "finetuned.ckpt");
      report.write(out / "finetune_log.tsv");
      print_train_summary(report);
      return 0;
    }

    if (*eval) {
      const ControlPolicy policy = ControlPolicy::parse(policy_text);
      const DatasetManifest data = load_dataset(data_dir);
      ModelState state = load_checkpoint(ckpt);
      const EvalReport report = evaluate(state, data, policy, eval_batch);
      std::cout << report.format_table();
      const fs::path out = g.out.empty() ? fs::path(".") : fs::path(g.out);
      report.write_records(out / "eval.tsv");
      return 0;
    }

    if (*rect) {
      const fs::path out = require_out(g, "rectify");
      if (!*degree_opt && !*blend_opt) throw ValidationError("rectify needs --degree or --blend");
      const Rectifier rectifier(load_checkpoint(ckpt));
      const RectifyControl control =
          *degree_opt ? RectifyControl{degree} : RectifyControl{QueryBlend{blend}};
      const RectifyResult result = rectifier.rectify(read_image(image_path), control);
      write_png(out, result.image);
      return 0;
    }

    if (*serve) {
      ServiceOptions options;
      options.max_side = max_side;
      RectifyService service(load_checkpoint(ckpt), options);
      const int bound = service.bind(host, port);
      g_service = &service;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      std::cout << "listening on http://" << host << ":" << bound << std::endl;
      service.run();
      g_service = nullptr;
      return 0;
    }

    if (*exq) {
      const fs::path out = require_out(g, "export-queries");
      export_queries(load_checkpoint(ckpt), out);
      std::cout << "queries written to " << out.string() << "\n";
      return 0;
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const StateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
