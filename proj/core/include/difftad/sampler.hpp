#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "difftad/config.hpp"
#include "difftad/dataset.hpp"
#include "difftad/network.hpp"
#include "difftad/noise_schedule.hpp"
#include "difftad/rng.hpp"

namespace difftad {

struct SamplingPlan {
  int steps = 10;
  int proposals = 30;
  std::vector<std::pair<int, int>> time_pairs;  // (t_now, t_next), t_now strictly decreasing
  bool iterative_denoising = true;
  bool selective_conditioning = true;
  bool self_cond = true;
  bool sim_union = false;
  double gamma = 0.5;

  static SamplingPlan from_config(const RunConfig& cfg);
};

// Evenly spaced integer times from -1 to T (steps+1 points, rounded and
// deduplicated), reversed and zipped into consecutive pairs.
std::vector<std::pair<int, int>> make_time_pairs(int t_total, int steps);

// Deterministic DDIM update (eta = 0): estimates the noise from x0_hat and
// re-mixes it at t_next, with alpha_bar(-1) = 1 and the result clamped to
// [-scale, scale].
Eigen::MatrixXd ddim_step(const Eigen::MatrixXd& z_t, const Eigen::MatrixXd& x0_hat, int t_now,
                          int t_next, const NoiseSchedule& sched, double scale);

// One denoiser invocation: refined query embeddings in, clean-signal estimate
// and decoded detections out. Oracles in tests implement this directly.
struct StepPrediction {
  Eigen::MatrixXd x0_signal;  // N x 2
  std::vector<DetectionResult> results;
};

struct SamplerHooks {
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd& signal)> project;  // N x 2 -> N x D
  // queries are the (possibly refined) embeddings of z_clamped
  std::function<StepPrediction(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& z_clamped,
                               int t_now, const Eigen::MatrixXd& self_cond)>
      denoise;
};

struct SampleTrace {
  std::vector<std::vector<DetectionResult>> per_step;
  std::vector<DetectionResult> final;
};

SampleTrace sample(const SamplerHooks& hooks, const SamplingPlan& plan,
                   const NoiseSchedule& sched, double scale, Rng rng);

// Hooks wrapping a trained model conditioned on one encoded video.
SamplerHooks model_hooks(const DenoiserModel& model, const EncoderOutput& cond);

struct VideoDetections {
  std::string video_id;
  std::vector<DetectionResult> results;
};

// Union of both modality lists re-ranked by fused score (stable; no
// cross-modality boundary merging). Throws on video-id mismatch.
VideoDetections late_fuse(const VideoDetections& rgb, const VideoDetections& flow);

// --- prediction file ------------------------------------------------------

struct PredictionRecord {
  std::string video_id;
  double start_seconds = 0.0;
  double end_seconds = 0.0;
  int label = 0;
  double score = 0.0;
};

std::vector<PredictionRecord> to_records(const VideoDetections& dets, double duration);

// Text records "video_id start end class score", sorted by video id then
// score descending, preceded by '#' config-echo lines.
void write_predictions(const std::vector<PredictionRecord>& records,
                       const std::filesystem::path& path, const std::string& config_echo);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

// --- whole-dataset sampling ----------------------------------------------

// Runs the sampler over every video with the modalities and fusion mode of
// cfg.sample, applying NMS when cfg.sample.nms_threshold >= 0. Per-video
// randomness is derived from the seed and the video id.
std::vector<PredictionRecord> sample_dataset(
    const std::vector<std::pair<std::string, DenoiserModel>>& models, const Dataset& data,
    const RunConfig& cfg);

}  // namespace difftad
