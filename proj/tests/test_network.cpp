#include <doctest.h>

#include <cmath>
#include <map>

#include "difftad/network.hpp"
#include "difftad/rng.hpp"

using namespace difftad;
using ad::Mat;

namespace {

ModelConfig tiny_config() {
  ModelConfig mc;
  mc.dim = 8;
  mc.n_layers = 1;
  mc.heads = 2;
  mc.scales = 2;
  mc.classes = 2;
  mc.d_feat = 4;
  mc.ffn_mult = 2;
  mc.signal_scale = 0.5;
  mc.t_total = 50;
  return mc;
}

Mat random_mat(Rng& rng, int r, int c, double s = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = s * rng.normal();
  }
  return m;
}

VideoFeatures random_features(Rng& rng, int t, int d) {
  VideoFeatures vf;
  vf.video_id = "test";
  vf.modality = 0;
  vf.duration = t;
  vf.data = random_mat(rng, t, d).cast<float>();
  return vf;
}

}  // namespace

TEST_CASE("pyramid lengths follow repeated stride-2 downsampling") {
  auto lens = pyramid_lengths(96, 3);
  REQUIRE(lens.size() == 3);
  CHECK(lens[0] == 96);
  CHECK(lens[1] == 48);
  CHECK(lens[2] == 24);
  auto odd = pyramid_lengths(5, 3);
  CHECK(odd[1] == 3);
  CHECK(odd[2] == 2);
}

TEST_CASE("encoder output stacks all scales") {
  ModelConfig mc = tiny_config();
  mc.scales = 3;
  mc.dim = 64;
  mc.d_feat = 16;
  DenoiserModel model(mc, 1);
  Rng rng(2);
  EncoderOutput out = model.encode_video(random_features(rng, 96, 16));
  CHECK(out.f_g.rows() == 96 + 48 + 24);
  CHECK(out.f_g.cols() == 64);
  CHECK(out.scale_lengths == std::vector<Eigen::Index>{96, 48, 24});
}

TEST_CASE("encoder rejects empty or mismatched input") {
  DenoiserModel model(tiny_config(), 1);
  VideoFeatures vf;
  vf.data.resize(0, 4);
  CHECK_THROWS(model.encode_video(vf));
  Rng rng(3);
  CHECK_THROWS(model.encode_video(random_features(rng, 8, 5)));
}

TEST_CASE("encoder is position aware") {
  DenoiserModel model(tiny_config(), 4);
  Rng rng(5);
  VideoFeatures vf = random_features(rng, 8, 4);
  EncoderOutput a = model.encode_video(vf);
  vf.data.row(1).swap(vf.data.row(5));
  EncoderOutput b = model.encode_video(vf);
  CHECK((a.f_g - b.f_g).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("zero convolutions make the encoder input independent") {
  ModelConfig mc = tiny_config();
  DenoiserModel model(mc, 6);
  model.params().get("enc.conv0.w").setZero();
  model.params().get("enc.conv0.b").setZero();
  model.params().get("enc.down1.w").setZero();
  model.params().get("enc.down1.b").setZero();
  Rng rng(7);
  VideoFeatures zeros;
  zeros.video_id = "z";
  zeros.modality = 0;
  zeros.duration = 8;
  zeros.data = Eigen::MatrixXf::Zero(8, 4);
  EncoderOutput a = model.encode_video(zeros);
  EncoderOutput b = model.encode_video(random_features(rng, 8, 4));
  // positional encoding is all that remains
  CHECK((a.f_g - b.f_g).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.f_g.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("decode keeps the query count and is deterministic") {
  DenoiserModel model(tiny_config(), 8);
  Rng rng(9);
  EncoderOutput cond = model.encode_video(random_features(rng, 8, 4));
  Mat z = random_mat(rng, 5, 2, 0.5);
  Mat queries = model.project(z);
  CHECK(queries.rows() == 5);
  CHECK(queries.cols() == 8);
  Mat sc = random_mat(rng, 5, 2, 0.3);
  Mat fd1 = model.decode(queries, cond, 10, sc);
  Mat fd2 = model.decode(queries, cond, 10, sc);
  CHECK(fd1.rows() == 5);
  CHECK(fd1.cols() == 8);
  CHECK((fd1 - fd2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a zero self-conditioning estimate is exactly a no-op") {
  DenoiserModel model(tiny_config(), 10);
  Rng rng(11);
  EncoderOutput cond = model.encode_video(random_features(rng, 8, 4));
  Mat queries = model.project(random_mat(rng, 4, 2, 0.5));
  Mat zeros = Mat::Zero(4, 2);
  Mat with_map = model.decode(queries, cond, 3, zeros);
  // scrambling the injection weights must not matter when the estimate is zero
  model.params().get("dec.scemb.w").setConstant(123.0);
  Mat scrambled = model.decode(queries, cond, 3, zeros);
  CHECK((with_map - scrambled).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("decode validates timestep and shapes") {
  DenoiserModel model(tiny_config(), 12);
  Rng rng(13);
  EncoderOutput cond = model.encode_video(random_features(rng, 8, 4));
  Mat queries = model.project(random_mat(rng, 4, 2, 0.5));
  Mat sc = Mat::Zero(4, 2);
  CHECK_THROWS(model.decode(queries, cond, -1, sc));
  CHECK_THROWS(model.decode(queries, cond, 51, sc));
  CHECK_THROWS(model.decode(queries, cond, 3, Mat::Zero(3, 2)));
}

TEST_CASE("heads produce normalized distributions and unit-range scores") {
  DenoiserModel model(tiny_config(), 14);
  Rng rng(15);
  Mat fd = random_mat(rng, 6, 8, 2.0);
  Mat base = random_mat(rng, 6, 2, 0.3);
  HeadValues h = model.apply_heads(fd, base);
  REQUIRE(h.cls_prob.rows() == 6);
  REQUIRE(h.cls_prob.cols() == 3);  // C + background
  for (int i = 0; i < 6; ++i) {
    CHECK(std::abs(h.cls_prob.row(i).sum() - 1.0) < 1e-6);
    CHECK(h.loc(i, 2) >= 0.0);
    CHECK(h.loc(i, 2) <= 1.0);
    CHECK(h.comp(i, 0) >= 0.0);
    CHECK(h.comp(i, 0) <= 1.0);
  }
  auto results = model.make_results(h);
  REQUIRE(results.size() == 6);
  for (const auto& r : results) {
    CHECK(r.proposal.start >= 0.0);
    CHECK(r.proposal.end <= 1.0);
    CHECK(r.proposal.start <= r.proposal.end);
    CHECK(r.label >= 0);
    CHECK(r.label < 2);
    double p_bc = r.class_distribution.head(2).maxCoeff();
    CHECK(r.fused_score == doctest::Approx(0.5 * (p_bc + r.completeness)));
  }
}

TEST_CASE("score fusion is the simple average") {
  CHECK(fuse_scores(0.8, 0.6) == doctest::Approx(0.7));
  CHECK(fuse_scores(1.0, 1.0) == doctest::Approx(1.0));
  CHECK(fuse_scores(0.0, 1.0) == doctest::Approx(0.5));
  CHECK_THROWS_AS(fuse_scores(-0.1, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(fuse_scores(0.5, 1.2), std::invalid_argument);
}

TEST_CASE("network gradients match finite differences through encode+decode+heads") {
  ModelConfig mc = tiny_config();
  DenoiserModel model(mc, 16);
  Rng rng(17);
  Mat snippets = random_mat(rng, 6, 4);
  Mat z = random_mat(rng, 3, 2, 0.5);
  Mat sc = random_mat(rng, 3, 2, 0.3);
  int t = 7;

  auto build = [&](Binder& b) {
    ad::Var fg = model.encode_graph(b, snippets);
    ad::Var q = model.project_graph(b, z);
    ad::Var fd = model.decode_graph(b, q, fg, t, sc);
    auto hg = model.heads_graph(b, fd, z);
    ad::Var loss = ad::add(ad::sum(ad::square(hg.cls_logits)),
                           ad::add(ad::sum(ad::square(hg.loc)), ad::sum(ad::square(hg.comp))));
    return loss;
  };

  std::map<std::string, Mat> analytic;
  {
    ad::Tape tape;
    Binder bind(tape, model.params());
    ad::Var loss = build(bind);
    tape.backward(loss);
    for (const auto& name : model.params().names()) analytic[name] = bind.grad(name);
  }
  auto value = [&]() {
    ad::Tape tape;
    Binder bind(tape, model.params());
    return build(bind).val()(0, 0);
  };

  double h = 1e-5;
  double worst = 0.0;
  for (const auto& name : model.params().names()) {
    Mat& m = model.params().get(name);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        double orig = m(i, j);
        m(i, j) = orig + h;
        double fp = value();
        m(i, j) = orig - h;
        double fm = value();
        m(i, j) = orig;
        double num = (fp - fm) / (2.0 * h);
        double a = analytic[name](i, j);
        worst = std::max(worst, std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-4}));
      }
    }
  }
  CHECK(worst < 1e-4);
}
