#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "difftad/codec.hpp"
#include "difftad/interval.hpp"
#include "difftad/params.hpp"

namespace difftad {

struct ModelConfig {
  int dim = 64;       // query/feature width D
  int n_layers = 2;   // decoder layers
  int heads = 2;      // attention heads
  int scales = 3;     // temporal pyramid levels L
  int classes = 4;    // foreground classes C (background is index C)
  int d_feat = 16;    // snippet feature width
  int ffn_mult = 2;
  double signal_scale = 0.5;
  int t_total = 1000;
};

// One modality's snippet features for one video.
struct VideoFeatures {
  std::string video_id;
  int modality = 0;  // 0 = rgb, 1 = flow
  double duration = 0.0;
  Eigen::MatrixXf data;  // T_snippets x D_feat

  void validate() const;
};

struct EncoderOutput {
  Eigen::MatrixXd f_g;                       // T_total x D
  std::vector<Eigen::Index> scale_lengths;   // per-scale row counts, sums to T_total
};

struct DetectionResult {
  TemporalProposal proposal;
  Eigen::VectorXd class_distribution;  // C+1, sums to 1
  double predicted_iou = 0.0;
  double completeness = 0.0;
  double fused_score = 0.0;
  int label = 0;  // argmax over foreground classes
};

// Raw head outputs for N queries.
struct HeadValues {
  Eigen::MatrixXd cls_prob;  // N x (C+1)
  Eigen::MatrixXd loc;       // N x 3: signal start, signal end, iou logit->prob
  Eigen::MatrixXd comp;      // N x 1, already squashed
};

// (p_bc + p_c) / 2. Inputs must be unit fractions.
double fuse_scores(double p_bc, double p_c);

// Per-scale row counts after repeated stride-2 downsampling (kernel 3, pad 1).
std::vector<Eigen::Index> pyramid_lengths(Eigen::Index t_snippets, int scales);

// Encoder + decoder + heads with every parameter registered in one store so
// the whole model is checkpointable and gradient-checkable.
class DenoiserModel {
 public:
  DenoiserModel(ModelConfig cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // --- graph builders (training path; also backing the value-level API) ---
  ad::Var encode_graph(Binder& b, const Eigen::MatrixXd& snippets) const;
  ad::Var project_graph(Binder& b, const Eigen::MatrixXd& signal) const;
  ad::Var decode_graph(Binder& b, ad::Var queries, ad::Var f_g, int t,
                       const Eigen::MatrixXd& self_cond) const;

  struct HeadsGraph {
    ad::Var cls_logits;  // N x (C+1)
    ad::Var loc;         // N x 3; boundary columns are base_signal + regressed delta
    ad::Var comp;        // N x 1 (raw)
  };
  // base_signal (N x 2) is the clamped noisy signal each query embeds; the
  // localization head regresses a correction on top of it.
  HeadsGraph heads_graph(Binder& b, ad::Var f_d, const Eigen::MatrixXd& base_signal) const;

  // --- value-level API ---
  EncoderOutput encode_video(const VideoFeatures& vf) const;
  Eigen::MatrixXd project(const Eigen::MatrixXd& signal) const;  // N x D
  Eigen::MatrixXd decode(const Eigen::MatrixXd& queries, const EncoderOutput& cond, int t,
                         const Eigen::MatrixXd& self_cond) const;
  HeadValues apply_heads(const Eigen::MatrixXd& f_d, const Eigen::MatrixXd& base_signal) const;

  std::vector<DetectionResult> make_results(const HeadValues& h) const;
  // Predicted clean signal (columns 0..1 of the localization head).
  static Eigen::MatrixXd x0_from_heads(const HeadValues& h);

 private:
  void register_params();
  void init_params(std::uint64_t seed);

  ModelConfig cfg_;
  ParamStore params_;
};

}  // namespace difftad
