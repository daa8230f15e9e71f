#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "difftad/config.hpp"
#include "difftad/dataset.hpp"
#include "difftad/network.hpp"
#include "difftad/noise_schedule.hpp"
#include "difftad/rng.hpp"

namespace difftad {

// --- ground-truth padding -------------------------------------------------

struct PaddedProposals {
  Eigen::MatrixXd signal;          // N_train x 2 in signal space
  std::vector<int> source;         // padded row -> instance index, -1 for filler
};

// Repeats normalized instances cyclically with Gaussian jitter until N_train
// rows, then maps them to signal space. Videos without instances are filled
// with standard-normal signal pairs clamped into range and marked background.
PaddedProposals pad_ground_truth(const Eigen::MatrixXd& gt_norm, int n_train,
                                 double jitter_sigma, double scale, Rng& rng);

// --- corruption -----------------------------------------------------------

struct CorruptionDraw {
  int t = 0;                // shared timestep, uniform on [1, T]
  Eigen::MatrixXd z_t;      // N x 2 corrupted signal
  Eigen::MatrixXd eps;      // the noise that was used
};

CorruptionDraw corruption_step(const Eigen::MatrixXd& padded_signal,
                               const NoiseSchedule& sched, Rng& rng);

// --- assignment -----------------------------------------------------------

struct Assignment {
  std::vector<std::vector<int>> per_gt;  // ascending prediction indices per ground truth
  std::vector<int> pred_gt;              // per prediction: ground-truth index or -1
};

// Top-k least-cost assignment: claims are resolved globally in ascending
// (cost, prediction index, ground-truth index) order, each prediction going
// to at most one ground truth and each ground truth taking at most k.
Assignment ot_assign(const Eigen::MatrixXd& cost, int k);

// cost(g, p) = l_cls*(1 - p_class(y_g)) + l_l1*L1 + l_iou*(1 - IoU), with L1
// on raw-order normalized boundaries and IoU on the min/max-sorted pair.
Eigen::MatrixXd assignment_cost(const Eigen::MatrixXd& cls_prob, const Eigen::MatrixXd& loc_norm,
                                const Eigen::MatrixXd& gt_norm, const std::vector<int>& gt_class,
                                const TrainConfig& tc);

// --- loss -----------------------------------------------------------------

// Targets actually supervised in one step. Built from the current
// predictions (and therefore detached), or passed back in frozen form by the
// finite-difference harness.
struct StepTargets {
  Assignment assignment;
  std::vector<int> class_target;  // per prediction, background = C
  Eigen::VectorXd quality;        // per prediction, IoU with its gt (0 unassigned)
};

struct TrainExample {
  Eigen::MatrixXd snippets;   // T x D_feat
  Eigen::MatrixXd z_t;        // N x 2 corrupted signal
  int t = 1;
  Eigen::MatrixXd self_cond;  // N x 2, zeros when unused
  Eigen::MatrixXd gt_norm;    // M x 2 normalized instances
  std::vector<int> gt_class;  // M
};

struct LossGraph {
  ad::Var total;  // 1x1
  ad::Var cls;
  ad::Var l1;
  ad::Var iou;
  ad::Var comp;
};

// The set-prediction loss over raw head outputs:
//   l_cls * CE over all N (background index C for unassigned)
// + l_l1  * L1 of normalized boundaries (assigned only)
// + l_iou * (1 - IoU) (assigned only)
// + l_comp * squared error of the completeness and predicted-IoU heads
//            against tg.quality (all N, unassigned target 0).
// CE and the head terms average over N, L1/IoU over the assigned count.
LossGraph set_prediction_loss(ad::Tape& tape, ad::Var cls_logits, ad::Var loc, ad::Var comp,
                              const StepTargets& tg, const Eigen::MatrixXd& gt_norm,
                              const TrainConfig& tc, double scale);

// Builds supervision targets from the current predictions; the results are
// plain values, so gradients never flow through them.
StepTargets build_step_targets(const Eigen::MatrixXd& cls_prob, const Eigen::MatrixXd& loc_norm,
                               const Eigen::MatrixXd& gt_norm, const std::vector<int>& gt_class,
                               const TrainConfig& tc, int classes);

struct VideoLoss {
  ad::Var total;  // 1x1
  ad::Var cls;
  ad::Var l1;
  ad::Var iou;
  ad::Var comp;
  StepTargets targets;
};

// Builds the full taped forward (encode, project, decode, heads) plus the
// set-prediction loss for one video. Passing `frozen` reuses previously
// built targets so the loss is a smooth function of the parameters.
VideoLoss build_video_loss(Binder& b, const DenoiserModel& model, const TrainExample& ex,
                           const TrainConfig& tc,
                           const std::optional<StepTargets>& frozen = std::nullopt);

// Runs the estimate pass of Algorithm-style self-conditioning: with
// probability `rate` decodes once with a zero estimate and returns the
// detached clean-signal prediction.
std::optional<Eigen::MatrixXd> self_condition_estimate(const DenoiserModel& model,
                                                       const Eigen::MatrixXd& z_t, int t,
                                                       const EncoderOutput& cond, double rate,
                                                       Rng& rng);

// --- optimizer ------------------------------------------------------------

class AdamOptimizer {
 public:
  explicit AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& params, const std::map<std::string, Eigen::MatrixXd>& grads, double lr);

 private:
  double beta1_, beta2_, eps_;
  int t_ = 0;
  std::map<std::string, std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> state_;
};

// Effective learning rate at a 1-based step under the configured schedule.
double learning_rate_at(const TrainConfig& tc, int step);

// --- gradient checking ----------------------------------------------------

struct GradCheckReport {
  struct Group {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t scalars = 0;
  };
  std::vector<Group> groups;
  double overall_max_rel_err = 0.0;
  std::size_t total_scalars = 0;

  bool pass(double tol) const { return overall_max_rel_err < tol; }
};

// Central finite differences over every parameter scalar against the
// analytic gradient of build_video_loss, with targets frozen at the center
// point. rel err = |a - n| / max(|a|, |n|, 1e-4).
GradCheckReport finite_difference_check(DenoiserModel& model, const TrainExample& ex,
                                        const TrainConfig& tc, double h = 1e-5);

// --- the training loop ----------------------------------------------------

struct TrainResult {
  std::filesystem::path checkpoint_path;
  std::filesystem::path metrics_path;
  double first_loss = 0.0;
  double last_loss = 0.0;
  int steps_run = 0;
};

TrainResult train(const RunConfig& cfg, const Dataset& data,
                  const std::filesystem::path& out_dir);

}  // namespace difftad
