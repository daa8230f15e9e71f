#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "difftad/codec.hpp"
#include "difftad/sampler.hpp"

using namespace difftad;
using ad::Mat;

namespace {

Mat random_mat(Rng& rng, int r, int c, double s = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = s * rng.normal();
  }
  return m;
}

// A denoiser that always answers with the true clean signal: row i of the
// output is the scaled ground-truth pair i mod M.
SamplerHooks oracle_hooks(const Eigen::MatrixXd& gt_norm, double scale, int n) {
  Eigen::MatrixXd x0(n, 2);
  for (int i = 0; i < n; ++i) {
    Eigen::Index src = i % gt_norm.rows();
    SignalProposal sp =
        scale_signal(TemporalProposal{gt_norm(src, 0), gt_norm(src, 1)}, scale);
    x0(i, 0) = sp.start;
    x0(i, 1) = sp.end;
  }
  SamplerHooks hooks;
  hooks.project = [](const Eigen::MatrixXd& z) { return z; };
  hooks.denoise = [x0, scale](const Eigen::MatrixXd&, const Eigen::MatrixXd&, int,
                              const Eigen::MatrixXd&) {
    StepPrediction pred;
    pred.x0_signal = x0;
    for (Eigen::Index i = 0; i < x0.rows(); ++i) {
      DetectionResult r;
      r.proposal = unscale_signal(SignalProposal{x0(i, 0), x0(i, 1)}, scale);
      r.class_distribution = Eigen::Vector2d(0.9, 0.1);
      r.completeness = 0.9;
      r.predicted_iou = 0.9;
      r.fused_score = 0.9;
      r.label = 0;
      pred.results.push_back(std::move(r));
    }
    return pred;
  };
  return hooks;
}

DetectionResult det(double s, double e, double score) {
  DetectionResult r;
  r.proposal = TemporalProposal{s, e};
  r.class_distribution = Eigen::Vector2d(score, 1.0 - score);
  r.completeness = score;
  r.predicted_iou = score;
  r.fused_score = score;
  r.label = 0;
  return r;
}

}  // namespace

TEST_CASE("time pairs span the schedule with the requested step count") {
  SUBCASE("one step jumps straight from T to -1") {
    auto pairs = make_time_pairs(1000, 1);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0] == std::make_pair(1000, -1));
  }
  SUBCASE("unit stride enumerates every timestep") {
    auto pairs = make_time_pairs(9, 10);
    REQUIRE(pairs.size() == 10);
    CHECK(pairs.front() == std::make_pair(9, 8));
    CHECK(pairs.back() == std::make_pair(0, -1));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      CHECK(pairs[i].first == 9 - static_cast<int>(i));
      CHECK(pairs[i].second == 8 - static_cast<int>(i));
    }
  }
  SUBCASE("ten steps over T=1000 match the linspace oracle") {
    auto pairs = make_time_pairs(1000, 10);
    REQUIRE(pairs.size() == 10);
    CHECK(pairs.front().first == 1000);
    CHECK(pairs.back().second == -1);
    std::vector<int> oracle;
    for (int i = 10; i >= 0; --i) {
      oracle.push_back(static_cast<int>(std::lround(-1.0 + 1001.0 * i / 10.0)));
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      CHECK(pairs[i].first == oracle[i]);
      CHECK(pairs[i].second == oracle[i + 1]);
      CHECK(pairs[i].first > pairs[i].second);
    }
  }
  SUBCASE("step bounds are validated") {
    CHECK_THROWS_AS(make_time_pairs(10, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_time_pairs(10, 12), std::invalid_argument);
    CHECK(make_time_pairs(10, 11).size() == 11);
  }
}

TEST_CASE("ddim_step algebra") {
  NoiseSchedule sched = build_cosine_schedule(100, 0.008);
  double scale = 0.5;
  Rng rng(3);

  SUBCASE("terminal step returns the clamped clean estimate") {
    for (int t_now : {0, 1, 37, 100}) {
      Mat z = random_mat(rng, 4, 2);
      Mat x0 = random_mat(rng, 4, 2, 0.4);
      Mat out = ddim_step(z, x0, t_now, -1, sched, scale);
      Mat expect = x0.cwiseMax(-scale).cwiseMin(scale);
      CHECK((out - expect).cwiseAbs().maxCoeff() == 0.0);
    }
  }
  SUBCASE("with the true signal and noise it reproduces the forward corruption") {
    for (int trial = 0; trial < 20; ++trial) {
      // a clean signal inside [-scale, scale], as produced by scale_signal
      Mat z0 = random_mat(rng, 3, 2, 0.3).cwiseMax(-scale).cwiseMin(scale);
      Mat eps = random_mat(rng, 3, 2);
      int t_now = rng.uniform_int(2, 100);
      int t_next = rng.uniform_int(1, t_now - 1);
      Mat z_t = corrupt(z0, t_now, eps, sched);
      Mat out = ddim_step(z_t, z0, t_now, t_next, sched, scale);
      Mat expect = corrupt(z0, t_next, eps, sched).cwiseMax(-scale).cwiseMin(scale);
      CHECK((out - expect).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
  SUBCASE("noise-free input keeps the rescaled estimate") {
    Mat x0 = random_mat(rng, 3, 2, 0.3).cwiseMax(-scale).cwiseMin(scale);
    int t_now = 60, t_next = 20;
    Mat z_t = sched.sqrt_alpha_bar(t_now) * x0;
    Mat out = ddim_step(z_t, x0, t_now, t_next, sched, scale);
    Mat expect = (sched.sqrt_alpha_bar(t_next) * x0).cwiseMax(-scale).cwiseMin(scale);
    CHECK((out - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("t_now = 0 defines the noise estimate as zero") {
    Mat z = random_mat(rng, 2, 2);
    Mat x0 = random_mat(rng, 2, 2, 0.3);
    Mat out = ddim_step(z, x0, 0, -1, sched, scale);
    CHECK((out - x0.cwiseMax(-scale).cwiseMin(scale)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("bad timesteps are rejected") {
    Mat z = Mat::Zero(1, 2);
    CHECK_THROWS_AS(ddim_step(z, z, -1, -2, sched, scale), std::invalid_argument);
    CHECK_THROWS_AS(ddim_step(z, z, 5, 5, sched, scale), std::invalid_argument);
  }
}

TEST_CASE("an oracle denoiser recovers the ground truth at any step count") {
  NoiseSchedule sched = build_cosine_schedule(1000, 0.008);
  double scale = 0.5;
  Eigen::MatrixXd gt(2, 2);
  gt << 0.2, 0.45, 0.6, 0.85;
  SamplerHooks hooks = oracle_hooks(gt, scale, 6);
  for (int steps : {1, 5, 10}) {
    SamplingPlan plan;
    plan.steps = steps;
    plan.proposals = 6;
    plan.time_pairs = make_time_pairs(1000, steps);
    SampleTrace trace = sample(hooks, plan, sched, scale, Rng(17));
    REQUIRE(trace.final.size() == 6);
    for (int i = 0; i < 6; ++i) {
      Eigen::Index src = i % 2;
      CHECK(std::abs(trace.final[static_cast<std::size_t>(i)].proposal.start - gt(src, 0)) < 1e-6);
      CHECK(std::abs(trace.final[static_cast<std::size_t>(i)].proposal.end - gt(src, 1)) < 1e-6);
    }
    CHECK(trace.per_step.size() == static_cast<std::size_t>(steps));
  }
}

TEST_CASE("sampling is deterministic given the seed") {
  NoiseSchedule sched = build_cosine_schedule(200, 0.008);
  Eigen::MatrixXd gt(1, 2);
  gt << 0.3, 0.7;
  SamplerHooks hooks = oracle_hooks(gt, 0.5, 4);
  SamplingPlan plan;
  plan.steps = 5;
  plan.proposals = 4;
  plan.time_pairs = make_time_pairs(200, 5);
  SampleTrace a = sample(hooks, plan, sched, 0.5, Rng(9));
  SampleTrace b = sample(hooks, plan, sched, 0.5, Rng(9));
  REQUIRE(a.final.size() == b.final.size());
  for (std::size_t i = 0; i < a.final.size(); ++i) {
    CHECK(a.final[i].proposal.start == b.final[i].proposal.start);
    CHECK(a.final[i].proposal.end == b.final[i].proposal.end);
  }
}

TEST_CASE("gamma = 1 selective conditioning equals the flag-off path bit for bit") {
  // a denoiser whose output depends on its refined queries, so any
  // refinement difference would surface
  NoiseSchedule sched = build_cosine_schedule(100, 0.008);
  double scale = 0.5;
  SamplerHooks hooks;
  hooks.project = [](const Eigen::MatrixXd& z) {
    Eigen::MatrixXd q(z.rows(), 4);
    q << z, z;  // width-4 embedding
    return q;
  };
  hooks.denoise = [scale](const Eigen::MatrixXd& queries, const Eigen::MatrixXd&, int t,
                          const Eigen::MatrixXd& self_cond) {
    StepPrediction pred;
    pred.x0_signal = 0.4 * queries.leftCols(2) + 0.1 * self_cond +
                     0.01 * static_cast<double>(t) * Eigen::MatrixXd::Ones(queries.rows(), 2);
    pred.x0_signal = pred.x0_signal.cwiseMax(-scale).cwiseMin(scale);
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
      DetectionResult r;
      r.proposal = unscale_signal(SignalProposal{pred.x0_signal(i, 0), pred.x0_signal(i, 1)}, scale);
      r.class_distribution = Eigen::Vector2d(0.5, 0.5);
      r.fused_score = 0.5;
      pred.results.push_back(std::move(r));
    }
    return pred;
  };

  SamplingPlan on;
  on.steps = 6;
  on.proposals = 5;
  on.time_pairs = make_time_pairs(100, 6);
  on.selective_conditioning = true;
  on.gamma = 1.0;
  SamplingPlan off = on;
  off.selective_conditioning = false;

  SampleTrace ta = sample(hooks, on, sched, scale, Rng(33));
  SampleTrace tb = sample(hooks, off, sched, scale, Rng(33));
  REQUIRE(ta.final.size() == tb.final.size());
  for (std::size_t i = 0; i < ta.final.size(); ++i) {
    CHECK(ta.final[i].proposal.start == tb.final[i].proposal.start);
    CHECK(ta.final[i].proposal.end == tb.final[i].proposal.end);
  }
}

TEST_CASE("late fusion unions and re-ranks by fused score") {
  SUBCASE("an empty modality passes the other through") {
    VideoDetections rgb{"v", {det(0.1, 0.2, 0.9)}};
    VideoDetections flow{"v", {}};
    VideoDetections fused = late_fuse(rgb, flow);
    REQUIRE(fused.results.size() == 1);
    CHECK(fused.results[0].fused_score == 0.9);
  }
  SUBCASE("identical lists give a union of size 2N ranked by score") {
    VideoDetections rgb{"v", {det(0.1, 0.2, 0.9), det(0.4, 0.6, 0.5)}};
    VideoDetections fused = late_fuse(rgb, rgb);
    REQUIRE(fused.results.size() == 4);
    CHECK(fused.results[0].fused_score == 0.9);
    CHECK(fused.results[1].fused_score == 0.9);
    CHECK(fused.results[2].fused_score == 0.5);
  }
  SUBCASE("mixed ordering matches a stable sort oracle") {
    VideoDetections rgb{"v", {det(0.1, 0.2, 0.7), det(0.3, 0.4, 0.3)}};
    VideoDetections flow{"v", {det(0.5, 0.6, 0.8), det(0.7, 0.8, 0.3)}};
    VideoDetections fused = late_fuse(rgb, flow);
    std::vector<double> scores;
    for (const auto& r : fused.results) scores.push_back(r.fused_score);
    CHECK(scores == std::vector<double>{0.8, 0.7, 0.3, 0.3});
    // stable: the rgb 0.3 entry precedes the flow 0.3 entry
    CHECK(fused.results[2].proposal.start == 0.3);
    CHECK(fused.results[3].proposal.start == 0.7);
  }
  SUBCASE("video id mismatch is an error") {
    VideoDetections rgb{"a", {}};
    VideoDetections flow{"b", {}};
    CHECK_THROWS_AS(late_fuse(rgb, flow), std::invalid_argument);
  }
}

TEST_CASE("prediction files round-trip and stay sorted") {
  namespace fs = std::filesystem;
  fs::path tmp = fs::temp_directory_path() / "difftad_pred_test.txt";
  std::vector<PredictionRecord> recs{
      {"vid_b", 1.0, 2.0, 0, 0.5},
      {"vid_a", 3.0, 6.5, 2, 0.25},
      {"vid_a", 0.5, 2.5, 1, 0.75},
  };
  write_predictions(recs, tmp, "[run]\nseed = 0\n");
  auto back = read_predictions(tmp);
  REQUIRE(back.size() == 3);
  CHECK(back[0].video_id == "vid_a");
  CHECK(back[0].score == doctest::Approx(0.75));
  CHECK(back[1].video_id == "vid_a");
  CHECK(back[1].score == doctest::Approx(0.25));
  CHECK(back[2].video_id == "vid_b");
  CHECK(back[2].label == 0);
  CHECK(back[1].end_seconds == doctest::Approx(6.5));

  // the config echo is present as comment lines
  std::ifstream is(tmp);
  std::string first;
  std::getline(is, first);
  CHECK(first.rfind("# [run]", 0) == 0);
  fs::remove(tmp);
}
