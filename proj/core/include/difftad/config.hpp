#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace difftad {

// Synthetic dataset shape.
struct DatasetConfig {
  int num_videos = 16;
  int t_snippets = 96;
  int d_feat = 16;
  int classes = 4;
  int max_actions = 3;
  int min_action_snippets = 10;
  double signature_strength = 2.0;
  double noise_level = 1.0;
  double snippet_seconds = 1.0;
};

struct ScheduleConfig {
  int t_total = 1000;
  double offset = 0.008;
};

struct ModelSection {
  int dim = 64;
  int n_layers = 2;
  int heads = 2;
  int scales = 3;
  int ffn_mult = 2;
};

struct TrainConfig {
  int n_train = 30;
  int top_k = 4;
  double lambda_cls = 2.0;
  double lambda_l1 = 5.0;
  double lambda_iou = 2.0;
  double lambda_comp = 1.0;
  double bg_weight = 0.1;  // background cross-entropy weight (detection-transformer convention)
  double self_cond_rate = 0.7;
  double lr = 1e-3;
  std::string lr_schedule = "cosine";  // constant | cosine
  int batch_size = 4;
  int steps = 2000;
  int checkpoint_every = 500;
  double signal_scale = 0.5;
  double jitter_sigma = 0.01;
  std::string modalities = "rgb,flow";
};

struct SampleConfig {
  int steps = 10;
  int proposals = 30;
  double gamma = 0.5;
  bool selective_conditioning = true;
  bool iterative_denoising = true;
  bool self_cond = true;
  bool sim_union = false;
  std::string fusion = "late";  // late | rgb | flow
  double nms_threshold = -1.0;  // < 0 disables NMS
};

struct EvalConfig {
  std::string grid = "thumos";  // thumos | anet
  std::string budgets = "50,100,500";
};

// Every tunable of the pipeline; validated on load, unknown keys rejected,
// echoed verbatim into checkpoints and reports.
struct RunConfig {
  DatasetConfig dataset;
  ScheduleConfig schedule;
  ModelSection model;
  TrainConfig train;
  SampleConfig sample;
  EvalConfig eval;
  std::uint64_t seed = 0;

  void validate() const;

  // Canonical INI rendering; parsing it back reproduces the config.
  std::string canonical_text() const;

  static RunConfig from_text(const std::string& text);
  static RunConfig from_file(const std::filesystem::path& path);

  std::vector<std::string> modality_list() const;
  std::vector<double> iou_grid() const;     // from eval.grid
  std::vector<int> budget_list() const;     // from eval.budgets
};

}  // namespace difftad
