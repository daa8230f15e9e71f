#include "difftad/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "difftad/dataset.hpp"
#include "difftad/eval.hpp"
#include "difftad/sampler.hpp"
#include "difftad/training.hpp"

namespace difftad {

namespace fs = std::filesystem;

namespace {

// Removes everything registered unless the command commits.
class OutputGuard {
 public:
  void track(const fs::path& p) { paths_.push_back(p); }
  void commit() { committed_ = true; }
  ~OutputGuard() {
    if (committed_) return;
    for (const auto& p : paths_) {
      std::error_code ec;
      fs::remove_all(p, ec);
    }
  }

 private:
  std::vector<fs::path> paths_;
  bool committed_ = false;
};

RunConfig load_config(const std::string& config_path, std::optional<std::uint64_t> seed) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

ModelConfig model_config_of(const RunConfig& cfg) {
  ModelConfig mc;
  mc.dim = cfg.model.dim;
  mc.n_layers = cfg.model.n_layers;
  mc.heads = cfg.model.heads;
  mc.scales = cfg.model.scales;
  mc.ffn_mult = cfg.model.ffn_mult;
  mc.classes = cfg.dataset.classes;
  mc.d_feat = cfg.dataset.d_feat;
  mc.signal_scale = cfg.train.signal_scale;
  mc.t_total = cfg.schedule.t_total;
  return mc;
}

struct SampleFlags {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<int> proposals;
  bool no_sc = false;
  bool no_id = false;
  std::optional<double> gamma;
  bool nms = false;
  std::optional<std::string> fusion;
};

RunConfig sample_config(const Checkpoint& ckpt, const SampleFlags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig::from_text(ckpt.config_text)
                                   : RunConfig::from_file(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.steps) cfg.sample.steps = *f.steps;
  if (f.proposals) cfg.sample.proposals = *f.proposals;
  if (f.no_sc) cfg.sample.selective_conditioning = false;
  if (f.no_id) cfg.sample.iterative_denoising = false;
  if (f.gamma) cfg.sample.gamma = *f.gamma;
  if (f.nms) cfg.sample.nms_threshold = 0.5;
  if (f.fusion) cfg.sample.fusion = *f.fusion;
  cfg.validate();
  return cfg;
}

std::vector<std::string> fusion_modalities(const RunConfig& cfg) {
  if (cfg.sample.fusion == "late") return {"rgb", "flow"};
  return {cfg.sample.fusion};
}

void cmd_make_synth(const std::string& out, const RunConfig& cfg) {
  OutputGuard guard;
  guard.track(fs::path(out) / "features");
  guard.track(fs::path(out) / "annotations.jsonl");
  generate_synthetic(cfg.dataset, cfg.seed, out, cfg.canonical_text());
  guard.commit();
  std::cout << "wrote synthetic dataset (" << cfg.dataset.num_videos << " videos) to " << out
            << "\n";
}

void cmd_train(const std::string& data_dir, const std::string& out_dir, const RunConfig& cfg) {
  Dataset data = load_dataset(data_dir, cfg.modality_list());
  OutputGuard guard;
  guard.track(fs::path(out_dir));
  TrainResult result = train(cfg, data, out_dir);
  guard.commit();
  std::cout << "trained " << result.steps_run << " steps, loss " << result.first_loss << " -> "
            << result.last_loss << ", checkpoint at " << result.checkpoint_path.string() << "\n";
}

void cmd_sample(const SampleFlags& flags) {
  Checkpoint ckpt = load_checkpoint(flags.checkpoint);
  RunConfig cfg = sample_config(ckpt, flags);
  auto models = models_from_checkpoint(ckpt, cfg);
  Dataset data = load_dataset(flags.data, fusion_modalities(cfg));
  OutputGuard guard;
  guard.track(flags.out);
  auto records = sample_dataset(models, data, cfg);
  write_predictions(records, flags.out, cfg.canonical_text());
  guard.commit();
  std::cout << "wrote " << records.size() << " predictions to " << flags.out << "\n";
}

void cmd_eval(const std::string& predictions, const std::string& data_dir,
              const std::string& report_path, const std::string& metrics_path,
              const RunConfig& cfg) {
  auto preds = read_predictions(predictions);
  auto gts = read_annotations(fs::path(data_dir) / "annotations.jsonl");
  std::vector<double> ar_grid;
  for (int i = 0; i <= 9; ++i) ar_grid.push_back(0.5 + 0.05 * i);
  EvalReport report = evaluate(preds, gts, cfg.iou_grid(), cfg.budget_list(), ar_grid);
  OutputGuard guard;
  guard.track(report_path);
  guard.track(metrics_path);
  write_report(report, report_path, cfg.canonical_text());
  write_metrics_file(report, metrics_path, cfg.canonical_text());
  guard.commit();
  char buf[64];
  std::snprintf(buf, sizeof(buf), "average mAP %.6f\n", report.average_map);
  std::cout << buf;
}

// --- ablations -------------------------------------------------------------

double run_eval_map(const std::vector<PredictionRecord>& records, const Dataset& data,
                    const RunConfig& cfg) {
  EvalReport report = map_over_thresholds(records, data.videos, cfg.iou_grid());
  return report.average_map;
}

void cmd_ablate(const std::string& which, const SampleFlags& flags,
                const std::string& out_dir, std::optional<int> train_steps) {
  fs::create_directories(out_dir);
  fs::path table_path = fs::path(out_dir) / ("ablate_" + which + ".txt");
  OutputGuard guard;
  guard.track(table_path);
  std::ofstream table(table_path, std::ios::trunc);
  if (!table) throw std::runtime_error("cannot write " + table_path.string());
  char buf[160];

  if (which == "signal-scale") {
    // retrains per scale; Table-4-style sweep
    RunConfig base = load_config(flags.config, flags.seed);
    if (train_steps) base.train.steps = *train_steps;
    Dataset data = load_dataset(flags.data, base.modality_list());
    table << "# signal scaling sweep\nscale avg_map\n";
    for (double scale : {0.1, 0.5, 1.0, 2.0}) {
      RunConfig cfg = base;
      cfg.train.signal_scale = scale;
      fs::path run_dir = fs::path(out_dir) / ("scale_" + std::to_string(scale));
      TrainResult tr = train(cfg, data, run_dir);
      Checkpoint ckpt = load_checkpoint(tr.checkpoint_path);
      auto models = models_from_checkpoint(ckpt, cfg);
      Dataset sdata = load_dataset(flags.data, fusion_modalities(cfg));
      auto records = sample_dataset(models, sdata, cfg);
      std::snprintf(buf, sizeof(buf), "%.1f %.6f\n", scale, run_eval_map(records, sdata, cfg));
      table << buf;
    }
    guard.commit();
    std::cout << "wrote " << table_path.string() << "\n";
    return;
  }

  Checkpoint ckpt = load_checkpoint(flags.checkpoint);
  RunConfig cfg = sample_config(ckpt, flags);
  auto models = models_from_checkpoint(ckpt, cfg);
  Dataset data = load_dataset(flags.data, fusion_modalities(cfg));

  if (which == "sampling") {
    table << "# sampling decomposition: iterative denoising (id) x selective conditioning (sc)\n";
    table << "id sc steps avg_map\n";
    for (bool id : {false, true}) {
      for (bool sc : {false, true}) {
        for (int steps : {1, 5, 10}) {
          RunConfig c = cfg;
          c.sample.iterative_denoising = id;
          c.sample.selective_conditioning = sc;
          c.sample.steps = steps;
          auto records = sample_dataset(models, data, c);
          std::snprintf(buf, sizeof(buf), "%d %d %d %.6f\n", id ? 1 : 0, sc ? 1 : 0, steps,
                        run_eval_map(records, data, c));
          table << buf;
        }
      }
    }
  } else if (which == "refinement") {
    table << "# refinement design: self-conditioning and selective conditioning\n";
    table << "design avg_map\n";
    struct Row {
      const char* name;
      bool self_cond, sc;
    };
    for (Row row : {Row{"none", false, false}, Row{"self-cond", true, false},
                    Row{"selective-cond", false, true}, Row{"both", true, true}}) {
      RunConfig c = cfg;
      c.sample.self_cond = row.self_cond;
      c.sample.selective_conditioning = row.sc;
      auto records = sample_dataset(models, data, c);
      std::snprintf(buf, sizeof(buf), "%s %.6f\n", row.name, run_eval_map(records, data, c));
      table << buf;
    }
  } else if (which == "speed") {
    table << "# accuracy vs speed\nproposals steps avg_map seconds\n";
    for (int proposals : {10, 30, 50}) {
      for (int steps : {1, 5, 10}) {
        RunConfig c = cfg;
        c.sample.proposals = proposals;
        c.sample.steps = steps;
        auto t0 = std::chrono::steady_clock::now();
        auto records = sample_dataset(models, data, c);
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::snprintf(buf, sizeof(buf), "%d %d %.6f %.3f\n", proposals, steps,
                      run_eval_map(records, data, c), secs);
        table << buf;
      }
    }
  } else if (which == "fusion") {
    table << "# modality fusion\nmode avg_map\n";
    for (const std::string mode : {"rgb", "flow", "late"}) {
      RunConfig c = cfg;
      c.sample.fusion = mode;
      Dataset d = load_dataset(flags.data, fusion_modalities(c));
      auto records = sample_dataset(models, d, c);
      std::snprintf(buf, sizeof(buf), "%s %.6f\n", mode.c_str(), run_eval_map(records, d, c));
      table << buf;
    }
  } else if (which == "nms") {
    table << "# nms on/off\nnms avg_map ar50 ar100 ar500\n";
    for (bool use_nms : {false, true}) {
      RunConfig c = cfg;
      c.sample.nms_threshold = use_nms ? 0.5 : -1.0;
      auto records = sample_dataset(models, data, c);
      std::vector<double> ar_grid;
      for (int i = 0; i <= 9; ++i) ar_grid.push_back(0.5 + 0.05 * i);
      auto ar = ar_at_an(records, data.videos, {50, 100, 500}, ar_grid);
      std::snprintf(buf, sizeof(buf), "%d %.6f %.6f %.6f %.6f\n", use_nms ? 1 : 0,
                    run_eval_map(records, data, c), ar[50], ar[100], ar[500]);
      table << buf;
    }
  } else {
    throw std::runtime_error("unknown ablation '" + which +
                             "' (expected sampling, refinement, signal-scale, speed, fusion, nms)");
  }
  guard.commit();
  std::cout << "wrote " << table_path.string() << "\n";
}

}  // namespace

std::vector<std::pair<std::string, DenoiserModel>> models_from_checkpoint(
    const Checkpoint& ckpt, const RunConfig& cfg) {
  ModelConfig mc = model_config_of(cfg);
  std::vector<std::pair<std::string, DenoiserModel>> models;
  for (const auto& [modality, store] : ckpt.stores) {
    DenoiserModel model(mc, 0);
    load_params(model.params(), store);
    models.emplace_back(modality, std::move(model));
  }
  return models;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"difftad: temporal action detection by proposal denoising diffusion"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;

  // make-synth
  auto* synth = app.add_subcommand("make-synth", "generate a synthetic dataset directory");
  std::string synth_out;
  std::string synth_config;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->add_option("--config", synth_config, "run config file");
  synth->add_option("--seed", synth_seed, "run seed");

  // train
  auto* tr = app.add_subcommand("train", "train denoiser models on a dataset");
  std::string train_data, train_out, train_config;
  std::optional<std::uint64_t> train_seed;
  tr->add_option("--data", train_data, "dataset directory")->required();
  tr->add_option("--out", train_out, "output directory (checkpoint + metrics)")->required();
  tr->add_option("--config", train_config, "run config file");
  tr->add_option("--seed", train_seed, "run seed");

  // sample
  auto* sa = app.add_subcommand("sample", "denoise random proposals into predictions");
  SampleFlags sf;
  sa->add_option("--checkpoint", sf.checkpoint, "trained checkpoint")->required();
  sa->add_option("--data", sf.data, "dataset directory")->required();
  sa->add_option("--out", sf.out, "prediction file")->required();
  sa->add_option("--config", sf.config, "run config file (defaults to the checkpoint echo)");
  sa->add_option("--seed", sf.seed, "run seed");
  sa->add_option("--steps", sf.steps, "sampling steps");
  sa->add_option("--proposals", sf.proposals, "proposals per video");
  sa->add_flag("--no-sc", sf.no_sc, "disable selective conditioning");
  sa->add_flag("--no-id", sf.no_id, "disable iterative (DDIM) denoising");
  sa->add_option("--gamma", sf.gamma, "selective conditioning threshold");
  sa->add_flag("--nms", sf.nms, "apply NMS at IoU 0.5");
  sa->add_option("--fusion", sf.fusion, "late | rgb | flow");

  // eval
  auto* ev = app.add_subcommand("eval", "score predictions against annotations");
  std::string eval_preds, eval_data, eval_report, eval_metrics, eval_config, eval_grid;
  std::optional<std::uint64_t> eval_seed;
  ev->add_option("--predictions", eval_preds, "prediction file")->required();
  ev->add_option("--data", eval_data, "dataset directory")->required();
  ev->add_option("--out-report", eval_report, "report path")->required();
  ev->add_option("--out-metrics", eval_metrics, "metrics path")->required();
  ev->add_option("--config", eval_config, "run config file");
  ev->add_option("--seed", eval_seed, "run seed");
  ev->add_option("--grid", eval_grid, "thumos | anet");

  // ablate
  auto* ab = app.add_subcommand("ablate", "scripted ablation sweeps");
  std::string ab_which, ab_out;
  SampleFlags ab_flags;
  std::optional<int> ab_train_steps;
  ab->add_option("which", ab_which, "sampling | refinement | signal-scale | speed | fusion | nms")
      ->required();
  ab->add_option("--data", ab_flags.data, "dataset directory")->required();
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->add_option("--checkpoint", ab_flags.checkpoint, "trained checkpoint");
  ab->add_option("--config", ab_flags.config, "run config file");
  ab->add_option("--seed", ab_flags.seed, "run seed");
  ab->add_option("--train-steps", ab_train_steps, "training steps for retraining sweeps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth->parsed()) {
      cmd_make_synth(synth_out, load_config(synth_config, synth_seed));
    } else if (tr->parsed()) {
      cmd_train(train_data, train_out, load_config(train_config, train_seed));
    } else if (sa->parsed()) {
      cmd_sample(sf);
    } else if (ev->parsed()) {
      RunConfig cfg = load_config(eval_config, eval_seed);
      if (!eval_grid.empty()) cfg.eval.grid = eval_grid;
      cfg.validate();
      cmd_eval(eval_preds, eval_data, eval_report, eval_metrics, cfg);
    } else if (ab->parsed()) {
      if (ab_which != "signal-scale" && ab_flags.checkpoint.empty()) {
        throw std::runtime_error("ablate " + ab_which + " requires --checkpoint");
      }
      cmd_ablate(ab_which, ab_flags, ab_out, ab_train_steps);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.push_back("difftad");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const auto& s : full) argv.push_back(s.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace difftad
