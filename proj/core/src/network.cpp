#include "difftad/network.hpp"

#include <cmath>
#include <stdexcept>

#include "difftad/rng.hpp"

namespace difftad {

using ad::Var;

void VideoFeatures::validate() const {
  if (data.rows() < 1) throw std::invalid_argument("VideoFeatures: empty snippet matrix");
  if (!data.allFinite()) throw std::invalid_argument("VideoFeatures: non-finite features");
  if (modality != 0 && modality != 1) throw std::invalid_argument("VideoFeatures: bad modality");
}

double fuse_scores(double p_bc, double p_c) {
  if (p_bc < 0.0 || p_bc > 1.0 || p_c < 0.0 || p_c > 1.0) {
    throw std::invalid_argument("fuse_scores: inputs must be in [0,1]");
  }
  return 0.5 * (p_bc + p_c);
}

std::vector<Eigen::Index> pyramid_lengths(Eigen::Index t_snippets, int scales) {
  std::vector<Eigen::Index> out;
  Eigen::Index len = t_snippets;
  for (int s = 0; s < scales; ++s) {
    out.push_back(len);
    len = (len - 1) / 2 + 1;
  }
  return out;
}

DenoiserModel::DenoiserModel(ModelConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  if (cfg_.dim % cfg_.heads != 0) {
    throw std::invalid_argument("DenoiserModel: dim must be divisible by heads");
  }
  if (cfg_.dim % 4 != 0) {
    throw std::invalid_argument("DenoiserModel: dim must be divisible by 4");
  }
  register_params();
  init_params(init_seed);
}

namespace {

void register_attention(ParamStore& p, const std::string& prefix, int dim) {
  p.create(prefix + "wq", dim, dim);
  p.create(prefix + "bq", 1, dim);
  p.create(prefix + "wk", dim, dim);
  p.create(prefix + "bk", 1, dim);
  p.create(prefix + "wv", dim, dim);
  p.create(prefix + "bv", 1, dim);
  p.create(prefix + "wo", dim, dim);
  p.create(prefix + "bo", 1, dim);
}

void register_ffn(ParamStore& p, const std::string& prefix, int dim, int mult) {
  p.create(prefix + "w1", dim, dim * mult);
  p.create(prefix + "b1", 1, dim * mult);
  p.create(prefix + "w2", dim * mult, dim);
  p.create(prefix + "b2", 1, dim);
}

void register_layer_norm(ParamStore& p, const std::string& prefix, int dim) {
  p.create(prefix + "g", 1, dim);
  p.create(prefix + "b", 1, dim);
}

Var affine(Binder& b, Var x, const std::string& prefix) {
  return ad::add_rowvec(ad::matmul(x, b(prefix + "w")), b(prefix + "b"));
}

// Multi-head scaled dot-product attention; kv_in == q_in gives self-attention.
Var mha(Binder& b, Var q_in, Var kv_in, const std::string& prefix, int heads) {
  int dim = static_cast<int>(q_in.cols());
  int dh = dim / heads;
  Var q = ad::add_rowvec(ad::matmul(q_in, b(prefix + "wq")), b(prefix + "bq"));
  Var k = ad::add_rowvec(ad::matmul(kv_in, b(prefix + "wk")), b(prefix + "bk"));
  Var v = ad::add_rowvec(ad::matmul(kv_in, b(prefix + "wv")), b(prefix + "bv"));
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    Var qh = ad::block(q, 0, h * dh, q.rows(), dh);
    Var kh = ad::block(k, 0, h * dh, k.rows(), dh);
    Var vh = ad::block(v, 0, h * dh, v.rows(), dh);
    Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt);
    outs.push_back(ad::matmul(ad::softmax_rows(scores), vh));
  }
  Var cat = heads == 1 ? outs[0] : ad::concat_cols(outs);
  return ad::add_rowvec(ad::matmul(cat, b(prefix + "wo")), b(prefix + "bo"));
}

Var ffn(Binder& b, Var x, const std::string& prefix) {
  Var h = ad::gelu(ad::add_rowvec(ad::matmul(x, b(prefix + "w1")), b(prefix + "b1")));
  return ad::add_rowvec(ad::matmul(h, b(prefix + "w2")), b(prefix + "b2"));
}

Var ln(Binder& b, Var x, const std::string& prefix) {
  return ad::layer_norm_rows(x, b(prefix + "g"), b(prefix + "b"));
}

Eigen::MatrixXd positional_encoding(Eigen::Index rows, int dim) {
  Eigen::MatrixXd pe(rows, dim);
  for (Eigen::Index i = 0; i < rows; ++i) {
    pe.row(i) = sin_cos_features(static_cast<double>(i), dim);
  }
  return pe;
}

}  // namespace

void DenoiserModel::register_params() {
  ParamStore& p = params_;
  // encoder: input conv + per-scale stride-2 convs, one shared attention block
  p.create("enc.conv0.w", 3 * cfg_.d_feat, cfg_.dim);
  p.create("enc.conv0.b", 1, cfg_.dim);
  for (int s = 1; s < cfg_.scales; ++s) {
    std::string pre = "enc.down" + std::to_string(s) + ".";
    p.create(pre + "w", 3 * cfg_.dim, cfg_.dim);
    p.create(pre + "b", 1, cfg_.dim);
  }
  register_attention(p, "enc.attn.", cfg_.dim);
  register_layer_norm(p, "enc.ln1.", cfg_.dim);
  register_ffn(p, "enc.ffn.", cfg_.dim, cfg_.ffn_mult);
  register_layer_norm(p, "enc.ln2.", cfg_.dim);
  register_layer_norm(p, "enc.lnf.", cfg_.dim);

  // decoder layers (pre-norm blocks with a final norm)
  for (int l = 0; l < cfg_.n_layers; ++l) {
    std::string pre = "dec.l" + std::to_string(l) + ".";
    register_attention(p, pre + "self.", cfg_.dim);
    register_layer_norm(p, pre + "ln1.", cfg_.dim);
    register_attention(p, pre + "cross.", cfg_.dim);
    register_layer_norm(p, pre + "ln2.", cfg_.dim);
    register_ffn(p, pre + "ffn.", cfg_.dim, cfg_.ffn_mult);
    register_layer_norm(p, pre + "ln3.", cfg_.dim);
  }
  register_layer_norm(p, "dec.lnf.", cfg_.dim);
  // timestep embedding affine and the self-conditioning injection (bias-free
  // so a zero estimate is exactly a no-op)
  p.create("dec.temb.w", cfg_.dim, cfg_.dim);
  p.create("dec.temb.b", 1, cfg_.dim);
  p.create("dec.scemb.w", 2, cfg_.dim);

  // heads
  p.create("head.cls.w", cfg_.dim, cfg_.classes + 1);
  p.create("head.cls.b", 1, cfg_.classes + 1);
  p.create("head.loc.w", cfg_.dim, 3);
  p.create("head.loc.b", 1, 3);
  p.create("head.comp.w", cfg_.dim, 1);
  p.create("head.comp.b", 1, 1);

  // query projection g
  register_projection_params(p, cfg_.dim, "g.");
}

void DenoiserModel::init_params(std::uint64_t seed) {
  Rng rng = Rng::derive(seed, {stream::kInit});
  for (const auto& name : params_.names()) {
    Eigen::MatrixXd& m = params_.get(name);
    bool is_ln_gain = name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0;
    if (is_ln_gain) {
      m.setOnes();
      continue;
    }
    if (m.rows() == 1) {  // every 1xC parameter is a bias
      m.setZero();
      continue;
    }
    double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        m(i, j) = rng.uniform(-limit, limit);
      }
    }
  }
}

Var DenoiserModel::encode_graph(Binder& b, const Eigen::MatrixXd& snippets) const {
  if (snippets.rows() < 1) throw std::invalid_argument("encode: empty input");
  if (snippets.cols() != cfg_.d_feat) {
    throw std::invalid_argument("encode: snippet width does not match model d_feat");
  }
  ad::Tape& tape = b.tape();
  Var x = ad::constant(tape, snippets);

  std::vector<Var> scale_feats;
  Var h = ad::gelu(ad::add_rowvec(
      ad::matmul(ad::im2col3(x, 1), b("enc.conv0.w")), b("enc.conv0.b")));
  scale_feats.push_back(h);
  for (int s = 1; s < cfg_.scales; ++s) {
    std::string pre = "enc.down" + std::to_string(s) + ".";
    h = ad::gelu(ad::add_rowvec(ad::matmul(ad::im2col3(h, 2), b(pre + "w")), b(pre + "b")));
    scale_feats.push_back(h);
  }

  std::vector<Var> encoded;
  for (Var f : scale_feats) {
    Var pos = ad::constant(tape, positional_encoding(f.rows(), cfg_.dim));
    Var y = ad::add(f, pos);
    Var a = ln(b, y, "enc.ln1.");
    y = ad::add(y, mha(b, a, a, "enc.attn.", cfg_.heads));
    y = ad::add(y, ffn(b, ln(b, y, "enc.ln2."), "enc.ffn."));
    encoded.push_back(ln(b, y, "enc.lnf."));
  }
  return encoded.size() == 1 ? encoded[0] : ad::concat_rows(encoded);
}

Var DenoiserModel::project_graph(Binder& b, const Eigen::MatrixXd& signal) const {
  return project_queries_graph(b, signal, cfg_.dim, "g.");
}

Var DenoiserModel::decode_graph(Binder& b, Var queries, Var f_g, int t,
                                const Eigen::MatrixXd& self_cond) const {
  if (queries.rows() < 1) throw std::invalid_argument("decode: no queries");
  if (queries.cols() != cfg_.dim || f_g.cols() != cfg_.dim) {
    throw std::invalid_argument("decode: dimension mismatch");
  }
  if (t < 0 || t > cfg_.t_total) throw std::invalid_argument("decode: timestep out of range");
  if (self_cond.rows() != queries.rows() || self_cond.cols() != 2) {
    throw std::invalid_argument("decode: self_cond must be Nx2");
  }
  ad::Tape& tape = b.tape();

  Eigen::MatrixXd tfeat = sin_cos_features(static_cast<double>(t), cfg_.dim);
  Var temb = ad::add_rowvec(ad::matmul(ad::constant(tape, tfeat), b("dec.temb.w")),
                            b("dec.temb.b"));
  Var x = ad::add_rowvec(queries, temb);
  Var sc = ad::matmul(ad::constant(tape, self_cond), b("dec.scemb.w"));
  x = ad::add(x, sc);

  for (int l = 0; l < cfg_.n_layers; ++l) {
    std::string pre = "dec.l" + std::to_string(l) + ".";
    Var s = ln(b, x, pre + "ln1.");
    x = ad::add(x, mha(b, s, s, pre + "self.", cfg_.heads));
    x = ad::add(x, mha(b, ln(b, x, pre + "ln2."), f_g, pre + "cross.", cfg_.heads));
    x = ad::add(x, ffn(b, ln(b, x, pre + "ln3."), pre + "ffn."));
  }
  return ln(b, x, "dec.lnf.");
}

DenoiserModel::HeadsGraph DenoiserModel::heads_graph(Binder& b, Var f_d,
                                                     const Eigen::MatrixXd& base_signal) const {
  if (base_signal.rows() != f_d.rows() || base_signal.cols() != 2) {
    throw std::invalid_argument("heads: base_signal must be Nx2");
  }
  HeadsGraph out;
  out.cls_logits = affine(b, f_d, "head.cls.");
  Var raw = affine(b, f_d, "head.loc.");
  Eigen::MatrixXd base = Eigen::MatrixXd::Zero(base_signal.rows(), 3);
  base.leftCols(2) = base_signal;
  out.loc = ad::add(raw, ad::constant(b.tape(), base));
  out.comp = affine(b, f_d, "head.comp.");
  return out;
}

EncoderOutput DenoiserModel::encode_video(const VideoFeatures& vf) const {
  vf.validate();
  ad::Tape tape;
  Binder bind(tape, params_);
  Var fg = encode_graph(bind, vf.data.cast<double>());
  EncoderOutput out;
  out.f_g = fg.val();
  out.scale_lengths = pyramid_lengths(vf.data.rows(), cfg_.scales);
  return out;
}

Eigen::MatrixXd DenoiserModel::project(const Eigen::MatrixXd& signal) const {
  ad::Tape tape;
  Binder bind(tape, params_);
  return project_graph(bind, signal).val();
}

Eigen::MatrixXd DenoiserModel::decode(const Eigen::MatrixXd& queries, const EncoderOutput& cond,
                                      int t, const Eigen::MatrixXd& self_cond) const {
  ad::Tape tape;
  Binder bind(tape, params_);
  Var q = ad::constant(tape, queries);
  Var fg = ad::constant(tape, cond.f_g);
  return decode_graph(bind, q, fg, t, self_cond).val();
}

HeadValues DenoiserModel::apply_heads(const Eigen::MatrixXd& f_d,
                                      const Eigen::MatrixXd& base_signal) const {
  if (!f_d.allFinite()) throw std::invalid_argument("apply_heads: non-finite features");
  ad::Tape tape;
  Binder bind(tape, params_);
  Var fd = ad::constant(tape, f_d);
  HeadsGraph g = heads_graph(bind, fd, base_signal);
  HeadValues out;
  out.cls_prob = ad::softmax_rows(g.cls_logits).val();
  out.loc = g.loc.val();
  out.loc.col(2) = out.loc.col(2).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  out.comp = g.comp.val().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return out;
}

std::vector<DetectionResult> DenoiserModel::make_results(const HeadValues& h) const {
  std::vector<DetectionResult> out;
  out.reserve(static_cast<std::size_t>(h.loc.rows()));
  for (Eigen::Index i = 0; i < h.loc.rows(); ++i) {
    DetectionResult r;
    r.proposal = unscale_signal(SignalProposal{h.loc(i, 0), h.loc(i, 1)}, cfg_.signal_scale);
    r.class_distribution = h.cls_prob.row(i).transpose();
    r.predicted_iou = h.loc(i, 2);
    r.completeness = h.comp(i, 0);
    Eigen::Index best = 0;
    double p_bc = h.cls_prob.row(i).head(cfg_.classes).maxCoeff(&best);
    r.label = static_cast<int>(best);
    r.fused_score = fuse_scores(p_bc, r.completeness);
    out.push_back(std::move(r));
  }
  return out;
}

Eigen::MatrixXd DenoiserModel::x0_from_heads(const HeadValues& h) {
  return h.loc.leftCols(2);
}

}  // namespace difftad
