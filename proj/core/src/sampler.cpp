#include "difftad/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "difftad/codec.hpp"
#include "difftad/conditioning.hpp"
#include "difftad/interval.hpp"

namespace difftad {

SamplingPlan SamplingPlan::from_config(const RunConfig& cfg) {
  SamplingPlan plan;
  plan.steps = cfg.sample.steps;
  plan.proposals = cfg.sample.proposals;
  plan.time_pairs = make_time_pairs(cfg.schedule.t_total, cfg.sample.steps);
  plan.iterative_denoising = cfg.sample.iterative_denoising;
  plan.selective_conditioning = cfg.sample.selective_conditioning;
  plan.self_cond = cfg.sample.self_cond;
  plan.sim_union = cfg.sample.sim_union;
  plan.gamma = cfg.sample.gamma;
  return plan;
}

std::vector<std::pair<int, int>> make_time_pairs(int t_total, int steps) {
  if (steps < 1 || steps > t_total + 1) {
    throw std::invalid_argument("make_time_pairs: steps out of [1, T+1]");
  }
  // steps+1 evenly spaced points spanning [-1, T]
  std::vector<int> times;
  for (int i = 0; i <= steps; ++i) {
    double v = -1.0 + (static_cast<double>(t_total) + 1.0) * i / steps;
    int r = static_cast<int>(std::lround(v));
    if (times.empty() || times.back() != r) times.push_back(r);
  }
  std::reverse(times.begin(), times.end());
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    pairs.emplace_back(times[i], times[i + 1]);
  }
  return pairs;
}

Eigen::MatrixXd ddim_step(const Eigen::MatrixXd& z_t, const Eigen::MatrixXd& x0_hat, int t_now,
                          int t_next, const NoiseSchedule& sched, double scale) {
  if (t_now < 0) throw std::invalid_argument("ddim_step: t_now must be >= 0");
  if (t_next >= t_now || t_next < -1) {
    throw std::invalid_argument("ddim_step: t_next must lie in [-1, t_now)");
  }
  double a_now = sched.alpha_bar(t_now);
  double a_next = sched.alpha_bar(t_next);
  // the clean-signal estimate lives in [-scale, scale] by construction
  Eigen::MatrixXd x0 = x0_hat.cwiseMax(-scale).cwiseMin(scale);
  Eigen::MatrixXd eps_hat;
  if (a_now >= 1.0) {
    eps_hat = Eigen::MatrixXd::Zero(z_t.rows(), z_t.cols());
  } else {
    eps_hat = (z_t - std::sqrt(a_now) * x0) / std::sqrt(1.0 - a_now);
  }
  Eigen::MatrixXd out = std::sqrt(a_next) * x0 + std::sqrt(1.0 - a_next) * eps_hat;
  return out.cwiseMax(-scale).cwiseMin(scale);
}

SampleTrace sample(const SamplerHooks& hooks, const SamplingPlan& plan,
                   const NoiseSchedule& sched, double scale, Rng rng) {
  int n = plan.proposals;
  Eigen::MatrixXd z(n, 2);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 2; ++j) z(i, j) = rng.normal();
  }

  SampleTrace trace;
  Eigen::MatrixXd carry = Eigen::MatrixXd::Zero(n, 2);  // pb_pred across steps
  Eigen::MatrixXd prev_queries;
  std::vector<TemporalProposal> prev_refs;
  bool have_refs = false;

  for (auto [t_now, t_next] : plan.time_pairs) {
    Eigen::MatrixXd z_clamped = clamp_signal_rows(z, scale);
    Eigen::MatrixXd queries = hooks.project(z_clamped);

    if (plan.selective_conditioning && have_refs) {
      Eigen::MatrixXd a = similarity_matrix(queries, prev_queries);
      Eigen::MatrixXd b = pairwise_iou(decode_proposals(z, scale), prev_refs);
      SelectedPairs sel = plan.sim_union ? select_pairs_union(a, b, plan.gamma)
                                         : select_pairs(a, b, plan.gamma);
      queries = refine_queries(queries, sel.qc, queries, queries);
    }

    Eigen::MatrixXd self_cond =
        plan.self_cond ? carry : Eigen::MatrixXd::Zero(n, 2);
    StepPrediction pred = hooks.denoise(queries, z_clamped, t_now, self_cond);
    if (pred.x0_signal.rows() != n || pred.x0_signal.cols() != 2) {
      throw std::runtime_error("sample: denoiser returned a bad x0 shape");
    }

    if (plan.selective_conditioning) {
      prev_queries = queries;
      prev_refs = decode_proposals(pred.x0_signal, scale);
      have_refs = true;
    }
    carry = pred.x0_signal;

    if (plan.iterative_denoising) {
      z = ddim_step(z, pred.x0_signal, t_now, t_next, sched, scale);
    } else {
      z = pred.x0_signal;  // naive baseline: feed the output straight back
    }
    trace.per_step.push_back(std::move(pred.results));
  }
  trace.final = trace.per_step.back();
  return trace;
}

SamplerHooks model_hooks(const DenoiserModel& model, const EncoderOutput& cond) {
  SamplerHooks hooks;
  hooks.project = [&model](const Eigen::MatrixXd& signal) { return model.project(signal); };
  hooks.denoise = [&model, &cond](const Eigen::MatrixXd& queries,
                                  const Eigen::MatrixXd& z_clamped, int t_now,
                                  const Eigen::MatrixXd& self_cond) {
    Eigen::MatrixXd fd = model.decode(queries, cond, t_now, self_cond);
    HeadValues h = model.apply_heads(fd, z_clamped);
    StepPrediction out;
    out.x0_signal = DenoiserModel::x0_from_heads(h);
    out.results = model.make_results(h);
    return out;
  };
  return hooks;
}

VideoDetections late_fuse(const VideoDetections& rgb, const VideoDetections& flow) {
  if (!rgb.video_id.empty() && !flow.video_id.empty() && rgb.video_id != flow.video_id) {
    throw std::invalid_argument("late_fuse: video id mismatch (" + rgb.video_id + " vs " +
                                flow.video_id + ")");
  }
  VideoDetections out;
  out.video_id = rgb.video_id.empty() ? flow.video_id : rgb.video_id;
  out.results = rgb.results;
  out.results.insert(out.results.end(), flow.results.begin(), flow.results.end());
  std::stable_sort(out.results.begin(), out.results.end(),
                   [](const DetectionResult& a, const DetectionResult& b) {
                     return a.fused_score > b.fused_score;
                   });
  return out;
}

std::vector<PredictionRecord> to_records(const VideoDetections& dets, double duration) {
  std::vector<PredictionRecord> out;
  out.reserve(dets.results.size());
  for (const auto& r : dets.results) {
    PredictionRecord rec;
    rec.video_id = dets.video_id;
    rec.start_seconds = r.proposal.start * duration;
    rec.end_seconds = r.proposal.end * duration;
    rec.label = r.label;
    rec.score = r.fused_score;
    out.push_back(std::move(rec));
  }
  return out;
}

void write_predictions(const std::vector<PredictionRecord>& records,
                       const std::filesystem::path& path, const std::string& config_echo) {
  std::vector<PredictionRecord> sorted = records;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const PredictionRecord& a, const PredictionRecord& b) {
                     if (a.video_id != b.video_id) return a.video_id < b.video_id;
                     return a.score > b.score;
                   });
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write predictions: " + path.string());
  std::istringstream echo(config_echo);
  std::string line;
  while (std::getline(echo, line)) os << "# " << line << "\n";
  char buf[256];
  for (const auto& r : sorted) {
    std::snprintf(buf, sizeof(buf), "%s %.9f %.9f %d %.9f\n", r.video_id.c_str(),
                  r.start_seconds, r.end_seconds, r.label, r.score);
    os << buf;
  }
  if (!os) throw std::runtime_error("prediction write failed: " + path.string());
}

std::vector<PredictionRecord> sample_dataset(
    const std::vector<std::pair<std::string, DenoiserModel>>& models, const Dataset& data,
    const RunConfig& cfg) {
  NoiseSchedule sched = build_cosine_schedule(cfg.schedule.t_total, cfg.schedule.offset);
  SamplingPlan plan = SamplingPlan::from_config(cfg);
  double scale = cfg.train.signal_scale;

  std::vector<std::string> needed;
  if (cfg.sample.fusion == "late") {
    needed = {"rgb", "flow"};
  } else {
    needed = {cfg.sample.fusion};
  }
  auto model_for = [&](const std::string& name) -> const DenoiserModel& {
    for (const auto& [mname, model] : models) {
      if (mname == name) return model;
    }
    throw std::runtime_error("sample: checkpoint lacks the " + name +
                             " modality required by fusion=" + cfg.sample.fusion);
  };

  std::vector<PredictionRecord> records;
  for (std::size_t vi = 0; vi < data.videos.size(); ++vi) {
    const AnnotatedVideo& video = data.videos[vi];
    std::vector<VideoDetections> per_modality;
    for (const auto& mod : needed) {
      int code = mod == "rgb" ? 0 : 1;
      const DenoiserModel& model = model_for(mod);
      EncoderOutput cond = model.encode_video(data.features_for(code, vi));
      Rng rng = Rng::derive(cfg.seed, {stream::kSample, Rng::hash_string(video.video_id),
                                       static_cast<std::uint64_t>(code)});
      SampleTrace trace = sample(model_hooks(model, cond), plan, sched, scale, rng);
      per_modality.push_back(VideoDetections{video.video_id, std::move(trace.final)});
    }
    VideoDetections fused = per_modality.size() == 2
                                ? late_fuse(per_modality[0], per_modality[1])
                                : std::move(per_modality[0]);
    if (cfg.sample.nms_threshold >= 0.0) {
      std::vector<TemporalProposal> props;
      std::vector<double> scores;
      for (const auto& r : fused.results) {
        props.push_back(r.proposal);
        scores.push_back(r.fused_score);
      }
      std::vector<DetectionResult> kept;
      for (std::size_t idx : nms(props, scores, cfg.sample.nms_threshold)) {
        kept.push_back(fused.results[idx]);
      }
      fused.results = std::move(kept);
    }
    auto recs = to_records(fused, video.duration);
    records.insert(records.end(), recs.begin(), recs.end());
  }
  return records;
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open predictions: " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    PredictionRecord r;
    if (!(ls >> r.video_id >> r.start_seconds >> r.end_seconds >> r.label >> r.score)) {
      throw std::runtime_error("malformed prediction line in " + path.string() + ": " + line);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace difftad
