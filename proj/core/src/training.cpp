#include "difftad/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "difftad/checkpoint.hpp"
#include "difftad/codec.hpp"
#include "difftad/interval.hpp"

namespace difftad {

using ad::Mat;
using ad::Var;

PaddedProposals pad_ground_truth(const Eigen::MatrixXd& gt_norm, int n_train,
                                 double jitter_sigma, double scale, Rng& rng) {
  if (n_train < 1) throw std::invalid_argument("pad_ground_truth: n_train must be >= 1");
  PaddedProposals out;
  out.signal.resize(n_train, 2);
  out.source.assign(static_cast<std::size_t>(n_train), -1);
  Eigen::Index m = gt_norm.rows();
  if (m == 0) {
    for (int i = 0; i < n_train; ++i) {
      out.signal(i, 0) = std::clamp(rng.normal(), -scale, scale);
      out.signal(i, 1) = std::clamp(rng.normal(), -scale, scale);
    }
    return out;
  }
  for (int i = 0; i < n_train; ++i) {
    Eigen::Index src = static_cast<Eigen::Index>(i) % m;
    double a = gt_norm(src, 0) + jitter_sigma * rng.normal();
    double b = gt_norm(src, 1) + jitter_sigma * rng.normal();
    TemporalProposal p = canonicalize(a, b);
    SignalProposal sp = scale_signal(p, scale);
    out.signal(i, 0) = sp.start;
    out.signal(i, 1) = sp.end;
    out.source[static_cast<std::size_t>(i)] = static_cast<int>(src);
  }
  return out;
}

CorruptionDraw corruption_step(const Eigen::MatrixXd& padded_signal,
                               const NoiseSchedule& sched, Rng& rng) {
  CorruptionDraw out;
  out.t = rng.uniform_int(1, sched.total_steps());
  out.eps.resize(padded_signal.rows(), padded_signal.cols());
  for (Eigen::Index i = 0; i < out.eps.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.eps.cols(); ++j) out.eps(i, j) = rng.normal();
  }
  out.z_t = corrupt(padded_signal, out.t, out.eps, sched);
  return out;
}

Assignment ot_assign(const Eigen::MatrixXd& cost, int k) {
  if (!cost.allFinite()) throw std::invalid_argument("ot_assign: non-finite cost");
  Eigen::Index m = cost.rows(), n = cost.cols();
  if (k < 1) throw std::invalid_argument("ot_assign: k must be >= 1");
  if (k > n) throw std::invalid_argument("ot_assign: k exceeds prediction count");

  struct Edge {
    double c;
    int pred;
    int gt;
  };
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(m * n));
  for (int g = 0; g < m; ++g) {
    for (int p = 0; p < n; ++p) edges.push_back({cost(g, p), p, g});
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    if (a.c != b.c) return a.c < b.c;
    if (a.pred != b.pred) return a.pred < b.pred;
    return a.gt < b.gt;
  });

  Assignment out;
  out.per_gt.assign(static_cast<std::size_t>(m), {});
  out.pred_gt.assign(static_cast<std::size_t>(n), -1);
  for (const Edge& e : edges) {
    if (out.pred_gt[static_cast<std::size_t>(e.pred)] != -1) continue;
    auto& mine = out.per_gt[static_cast<std::size_t>(e.gt)];
    if (static_cast<int>(mine.size()) >= k) continue;
    mine.push_back(e.pred);
    out.pred_gt[static_cast<std::size_t>(e.pred)] = e.gt;
  }
  for (auto& v : out.per_gt) std::sort(v.begin(), v.end());
  return out;
}

namespace {

Mat plain_softmax_rows(const Mat& a) {
  Mat p = a;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double mx = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

double interval_l1(double s_p, double e_p, double s_g, double e_g) {
  return std::abs(s_p - s_g) + std::abs(e_p - e_g);
}

// IoU on the min/max-sorted prediction pair, matching the loss term.
double interval_iou_sorted(double a, double b, double s_g, double e_g) {
  double s_p = std::min(a, b);
  double e_p = std::max(a, b);
  double inter = std::max(0.0, std::min(e_p, e_g) - std::max(s_p, s_g));
  double uni = (e_p - s_p) + (e_g - s_g) - inter;
  return inter / (uni + 1e-9);
}

}  // namespace

Eigen::MatrixXd assignment_cost(const Eigen::MatrixXd& cls_prob, const Eigen::MatrixXd& loc_norm,
                                const Eigen::MatrixXd& gt_norm, const std::vector<int>& gt_class,
                                const TrainConfig& tc) {
  Eigen::Index m = gt_norm.rows(), n = loc_norm.rows();
  Eigen::MatrixXd cost(m, n);
  for (Eigen::Index g = 0; g < m; ++g) {
    int y = gt_class[static_cast<std::size_t>(g)];
    for (Eigen::Index p = 0; p < n; ++p) {
      double c_cls = 1.0 - cls_prob(p, y);
      double c_l1 = interval_l1(loc_norm(p, 0), loc_norm(p, 1), gt_norm(g, 0), gt_norm(g, 1));
      double c_iou =
          1.0 - interval_iou_sorted(loc_norm(p, 0), loc_norm(p, 1), gt_norm(g, 0), gt_norm(g, 1));
      cost(g, p) = tc.lambda_cls * c_cls + tc.lambda_l1 * c_l1 + tc.lambda_iou * c_iou;
    }
  }
  return cost;
}

StepTargets build_step_targets(const Eigen::MatrixXd& cls_prob, const Eigen::MatrixXd& loc_norm,
                               const Eigen::MatrixXd& gt_norm, const std::vector<int>& gt_class,
                               const TrainConfig& tc, int classes) {
  StepTargets tg;
  auto n = static_cast<std::size_t>(loc_norm.rows());
  tg.class_target.assign(n, classes);  // background
  tg.quality = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  if (gt_norm.rows() == 0) {
    tg.assignment.pred_gt.assign(n, -1);
    return tg;
  }
  Mat cost = assignment_cost(cls_prob, loc_norm, gt_norm, gt_class, tc);
  tg.assignment = ot_assign(cost, tc.top_k);
  for (std::size_t g = 0; g < tg.assignment.per_gt.size(); ++g) {
    TemporalProposal gt{gt_norm(static_cast<Eigen::Index>(g), 0),
                        gt_norm(static_cast<Eigen::Index>(g), 1)};
    for (int p : tg.assignment.per_gt[g]) {
      tg.class_target[static_cast<std::size_t>(p)] = gt_class[g];
      TemporalProposal pred = canonicalize(loc_norm(p, 0), loc_norm(p, 1));
      tg.quality(p) = iou(pred, gt);
    }
  }
  return tg;
}

LossGraph set_prediction_loss(ad::Tape& tape, Var cls_logits, Var loc, Var comp,
                              const StepTargets& tg, const Eigen::MatrixXd& gt_norm,
                              const TrainConfig& tc, double scale) {
  auto n = cls_logits.rows();
  if (loc.rows() != n || comp.rows() != n) {
    throw std::invalid_argument("set_prediction_loss: head row counts disagree");
  }
  Var loc01 = ad::block(loc, 0, 0, n, 2);
  Var loc_norm = ad::add_scalar(ad::scale(loc01, 1.0 / (2.0 * scale)), 0.5);

  LossGraph out;
  // classification: weighted mean cross-entropy, background rows down-weighted
  Var ce = ad::sub(ad::log_sum_exp_rows(cls_logits),
                   ad::pick_per_row(cls_logits, tg.class_target));
  Mat weights(n, 1);
  double weight_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    bool bg = tg.assignment.pred_gt[static_cast<std::size_t>(i)] < 0;
    weights(i, 0) = bg ? tc.bg_weight : 1.0;
    weight_sum += weights(i, 0);
  }
  out.cls = ad::scale(ad::sum(ad::mul(ce, ad::constant(tape, weights))), 1.0 / weight_sum);

  std::vector<int> apred;
  for (const auto& preds : tg.assignment.per_gt) {
    for (int p : preds) apred.push_back(p);
  }
  if (!apred.empty()) {
    auto a = static_cast<Eigen::Index>(apred.size());
    Mat agt(a, 2);
    Eigen::Index row = 0;
    for (std::size_t g = 0; g < tg.assignment.per_gt.size(); ++g) {
      for (std::size_t i = 0; i < tg.assignment.per_gt[g].size(); ++i) {
        agt.row(row++) = gt_norm.row(static_cast<Eigen::Index>(g));
      }
    }
    Var ga = ad::gather_rows(loc_norm, apred);
    Var gt_c = ad::constant(tape, agt);
    out.l1 = ad::scale(ad::sum(ad::abs_(ad::sub(ga, gt_c))), 1.0 / static_cast<double>(a));

    Var c0 = ad::block(ga, 0, 0, a, 1);
    Var c1 = ad::block(ga, 0, 1, a, 1);
    Var s_p = ad::cwise_min(c0, c1);
    Var e_p = ad::cwise_max(c0, c1);
    Var gs = ad::constant(tape, Mat(agt.col(0)));
    Var ge = ad::constant(tape, Mat(agt.col(1)));
    Var glen = ad::constant(tape, Mat(agt.col(1) - agt.col(0)));
    Var inter = ad::clamp_min(ad::sub(ad::cwise_min(e_p, ge), ad::cwise_max(s_p, gs)), 0.0);
    Var uni = ad::sub(ad::add(ad::sub(e_p, s_p), glen), inter);
    Var iou_v = ad::div(inter, ad::add_scalar(uni, 1e-9));
    Var ones = ad::constant(tape, Mat::Ones(a, 1));
    out.iou = ad::scale(ad::sum(ad::sub(ones, iou_v)), 1.0 / static_cast<double>(a));
  } else {
    out.l1 = ad::constant_scalar(tape, 0.0);
    out.iou = ad::constant_scalar(tape, 0.0);
  }

  // completeness and predicted-IoU heads share the squared-error target
  Var comp_p = ad::sigmoid(comp);
  Var iou_head = ad::sigmoid(ad::block(loc, 0, 2, n, 1));
  Var q = ad::constant(tape, Mat(tg.quality));
  Var comp_terms = ad::add(ad::sum(ad::square(ad::sub(comp_p, q))),
                           ad::sum(ad::square(ad::sub(iou_head, q))));
  out.comp = ad::scale(comp_terms, 1.0 / static_cast<double>(n));

  out.total = ad::add(ad::add(ad::scale(out.cls, tc.lambda_cls), ad::scale(out.l1, tc.lambda_l1)),
                      ad::add(ad::scale(out.iou, tc.lambda_iou), ad::scale(out.comp, tc.lambda_comp)));
  return out;
}

namespace {

VideoLoss build_loss_with_fg(Binder& b, const DenoiserModel& model, Var f_g,
                             const TrainExample& ex, const TrainConfig& tc,
                             const std::optional<StepTargets>& frozen) {
  ad::Tape& tape = b.tape();
  const ModelConfig& mc = model.config();
  double scale = mc.signal_scale;

  Eigen::MatrixXd z_clamped = clamp_signal_rows(ex.z_t, scale);
  Var queries = model.project_graph(b, z_clamped);
  Var fd = model.decode_graph(b, queries, f_g, ex.t, ex.self_cond);
  DenoiserModel::HeadsGraph hg = model.heads_graph(b, fd, z_clamped);

  VideoLoss out;
  if (frozen) {
    out.targets = *frozen;
  } else {
    Mat loc_norm_val =
        ((hg.loc.val().leftCols(2) / (2.0 * scale)).array() + 0.5).matrix();
    out.targets = build_step_targets(plain_softmax_rows(hg.cls_logits.val()), loc_norm_val,
                                     ex.gt_norm, ex.gt_class, tc, mc.classes);
  }
  LossGraph lg =
      set_prediction_loss(tape, hg.cls_logits, hg.loc, hg.comp, out.targets, ex.gt_norm, tc, scale);
  out.total = lg.total;
  out.cls = lg.cls;
  out.l1 = lg.l1;
  out.iou = lg.iou;
  out.comp = lg.comp;
  return out;
}

}  // namespace

VideoLoss build_video_loss(Binder& b, const DenoiserModel& model, const TrainExample& ex,
                           const TrainConfig& tc, const std::optional<StepTargets>& frozen) {
  Var f_g = model.encode_graph(b, ex.snippets);
  return build_loss_with_fg(b, model, f_g, ex, tc, frozen);
}

std::optional<Eigen::MatrixXd> self_condition_estimate(const DenoiserModel& model,
                                                       const Eigen::MatrixXd& z_t, int t,
                                                       const EncoderOutput& cond, double rate,
                                                       Rng& rng) {
  if (!rng.bernoulli(rate)) return std::nullopt;
  Eigen::MatrixXd z_clamped = clamp_signal_rows(z_t, model.config().signal_scale);
  Eigen::MatrixXd queries = model.project(z_clamped);
  Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(z_t.rows(), 2);
  Eigen::MatrixXd fd = model.decode(queries, cond, t, zeros);
  HeadValues h = model.apply_heads(fd, z_clamped);
  return DenoiserModel::x0_from_heads(h);
}

double learning_rate_at(const TrainConfig& tc, int step) {
  if (tc.lr_schedule == "constant" || tc.steps <= 1) return tc.lr;
  double progress = static_cast<double>(step - 1) / static_cast<double>(tc.steps - 1);
  return 0.5 * tc.lr * (1.0 + std::cos(3.14159265358979323846 * progress));
}

void AdamOptimizer::step(ParamStore& params, const std::map<std::string, Eigen::MatrixXd>& grads,
                         double lr) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, t_);
  double bc2 = 1.0 - std::pow(beta2_, t_);
  for (const auto& name : params.names()) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Eigen::MatrixXd& g = git->second;
    Eigen::MatrixXd& p = params.get(name);
    auto [it, fresh] = state_.try_emplace(
        name, std::make_pair(Eigen::MatrixXd::Zero(p.rows(), p.cols()),
                             Eigen::MatrixXd::Zero(p.rows(), p.cols())));
    Eigen::MatrixXd& m = it->second.first;
    Eigen::MatrixXd& v = it->second.second;
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    Eigen::ArrayXXd mhat = m.array() / bc1;
    Eigen::ArrayXXd vhat = v.array() / bc2;
    p -= (lr * mhat / (vhat.sqrt() + eps_)).matrix();
  }
}

GradCheckReport finite_difference_check(DenoiserModel& model, const TrainExample& ex,
                                        const TrainConfig& tc, double h) {
  // analytic gradients with targets captured at the center point
  std::map<std::string, Eigen::MatrixXd> analytic;
  StepTargets frozen;
  {
    ad::Tape tape;
    Binder b(tape, model.params());
    VideoLoss vl = build_video_loss(b, model, ex, tc);
    tape.backward(vl.total);
    frozen = vl.targets;
    for (const auto& name : model.params().names()) analytic[name] = b.grad(name);
  }
  auto loss_value = [&]() {
    ad::Tape tape;
    Binder b(tape, model.params());
    VideoLoss vl = build_video_loss(b, model, ex, tc, frozen);
    return vl.total.val()(0, 0);
  };

  auto group_of = [](const std::string& name) -> std::string {
    if (name.rfind("enc.", 0) == 0) return "encoder";
    if (name.rfind("dec.temb", 0) == 0 || name.rfind("dec.scemb", 0) == 0) {
      return "timestep-embedding";
    }
    if (name.rfind("dec.", 0) == 0) return "decoder";
    if (name.rfind("head.", 0) == 0) return "heads";
    return "projection";
  };

  GradCheckReport report;
  std::map<std::string, std::size_t> group_index;
  for (const auto& name : model.params().names()) {
    std::string gname = group_of(name);
    auto [it, fresh] = group_index.try_emplace(gname, report.groups.size());
    if (fresh) report.groups.push_back({gname, 0.0, 0});
    GradCheckReport::Group& grp = report.groups[it->second];

    Eigen::MatrixXd& p = model.params().get(name);
    const Eigen::MatrixXd& a = analytic[name];
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      for (Eigen::Index j = 0; j < p.cols(); ++j) {
        double orig = p(i, j);
        p(i, j) = orig + h;
        double fp = loss_value();
        p(i, j) = orig - h;
        double fm = loss_value();
        p(i, j) = orig;
        double num = (fp - fm) / (2.0 * h);
        double denom = std::max({std::abs(a(i, j)), std::abs(num), 1e-4});
        double rel = std::abs(a(i, j) - num) / denom;
        grp.max_rel_err = std::max(grp.max_rel_err, rel);
        report.overall_max_rel_err = std::max(report.overall_max_rel_err, rel);
        ++grp.scalars;
        ++report.total_scalars;
      }
    }
  }
  return report;
}

namespace {

Eigen::MatrixXd normalized_gt(const AnnotatedVideo& v) {
  Eigen::MatrixXd gt(static_cast<Eigen::Index>(v.instances.size()), 2);
  for (std::size_t i = 0; i < v.instances.size(); ++i) {
    gt(static_cast<Eigen::Index>(i), 0) = v.instances[i].start / v.duration;
    gt(static_cast<Eigen::Index>(i), 1) = v.instances[i].end / v.duration;
  }
  return gt;
}

}  // namespace

TrainResult train(const RunConfig& cfg, const Dataset& data,
                  const std::filesystem::path& out_dir) {
  cfg.validate();
  if (data.videos.empty()) throw std::invalid_argument("train: empty dataset");
  std::filesystem::create_directories(out_dir);

  NoiseSchedule sched = build_cosine_schedule(cfg.schedule.t_total, cfg.schedule.offset);
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

  auto modalities = cfg.modality_list();
  std::vector<std::pair<std::string, DenoiserModel>> models;
  std::vector<AdamOptimizer> optims;
  for (const auto& m : modalities) {
    std::uint64_t mseed = Rng::combine(cfg.seed, Rng::hash_string(m));
    models.emplace_back(m, DenoiserModel(mc, mseed));
    optims.emplace_back();
  }

  std::ofstream metrics(out_dir / "metrics.log", std::ios::trunc);
  if (!metrics) throw std::runtime_error("train: cannot write metrics log");
  {
    std::istringstream echo(cfg.canonical_text());
    std::string line;
    while (std::getline(echo, line)) metrics << "# " << line << "\n";
  }

  std::vector<Eigen::MatrixXd> gts;
  std::vector<std::vector<int>> gt_classes;
  for (const auto& v : data.videos) {
    v.validate(cfg.dataset.classes);
    gts.push_back(normalized_gt(v));
    std::vector<int> cls;
    for (const auto& inst : v.instances) cls.push_back(inst.label);
    gt_classes.push_back(std::move(cls));
  }

  TrainResult result;
  int num_videos = static_cast<int>(data.videos.size());
  for (int step = 1; step <= cfg.train.steps; ++step) {
    std::uint64_t ustep = static_cast<std::uint64_t>(step);
    Rng brng = Rng::derive(cfg.seed, {stream::kBatch, ustep});
    std::vector<int> batch;
    for (int s = 0; s < cfg.train.batch_size; ++s) {
      batch.push_back(brng.uniform_int(0, num_videos - 1));
    }

    // the forward corruption is feature agnostic and shared by modalities
    std::vector<TrainExample> base(batch.size());
    double t_sum = 0.0;
    for (std::size_t slot = 0; slot < batch.size(); ++slot) {
      std::uint64_t uslot = static_cast<std::uint64_t>(slot);
      int vid = batch[slot];
      Rng prng = Rng::derive(cfg.seed, {stream::kPad, ustep, uslot});
      PaddedProposals padded =
          pad_ground_truth(gts[static_cast<std::size_t>(vid)], cfg.train.n_train,
                           cfg.train.jitter_sigma, cfg.train.signal_scale, prng);
      Rng crng = Rng::derive(cfg.seed, {stream::kNoise, ustep, uslot});
      CorruptionDraw draw = corruption_step(padded.signal, sched, crng);
      base[slot].z_t = draw.z_t;
      base[slot].t = draw.t;
      base[slot].gt_norm = gts[static_cast<std::size_t>(vid)];
      base[slot].gt_class = gt_classes[static_cast<std::size_t>(vid)];
      t_sum += draw.t;
    }

    double step_total = 0.0, step_cls = 0.0, step_l1 = 0.0, step_iou = 0.0, step_comp = 0.0;
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
      auto& [mname, model] = models[mi];
      int mod_code = mname == "rgb" ? 0 : 1;
      ad::Tape tape;
      Binder bind(tape, model.params());
      Var batch_total;
      for (std::size_t slot = 0; slot < batch.size(); ++slot) {
        std::uint64_t uslot = static_cast<std::uint64_t>(slot);
        int vid = batch[slot];
        TrainExample ex = base[slot];
        ex.snippets = data.features_for(mod_code, static_cast<std::size_t>(vid))
                          .data.cast<double>();

        Var f_g = model.encode_graph(bind, ex.snippets);
        EncoderOutput cond{f_g.val(), pyramid_lengths(ex.snippets.rows(), mc.scales)};
        Rng scrng = Rng::derive(cfg.seed, {stream::kSelfCond, ustep, uslot,
                                           static_cast<std::uint64_t>(mod_code)});
        auto est = self_condition_estimate(model, ex.z_t, ex.t, cond,
                                           cfg.train.self_cond_rate, scrng);
        ex.self_cond = est ? *est : Eigen::MatrixXd::Zero(ex.z_t.rows(), 2);

        VideoLoss vl = build_loss_with_fg(bind, model, f_g, ex, cfg.train, std::nullopt);
        batch_total = batch_total ? ad::add(batch_total, vl.total) : vl.total;
        step_cls += vl.cls.val()(0, 0);
        step_l1 += vl.l1.val()(0, 0);
        step_iou += vl.iou.val()(0, 0);
        step_comp += vl.comp.val()(0, 0);
      }
      double total_val = batch_total.val()(0, 0);
      if (!std::isfinite(total_val)) {
        std::ostringstream os;
        os << "train: non-finite loss at step " << step << " (modality " << mname << ", videos";
        for (int vid : batch) os << " " << data.videos[static_cast<std::size_t>(vid)].video_id;
        os << ")";
        throw std::runtime_error(os.str());
      }
      step_total += total_val;
      tape.backward(batch_total);
      std::map<std::string, Eigen::MatrixXd> grads;
      for (const auto& name : model.params().names()) grads[name] = bind.grad(name);
      optims[mi].step(model.params(), grads, learning_rate_at(cfg.train, step));
    }

    if (step == 1) result.first_loss = step_total;
    result.last_loss = step_total;
    metrics << "step=" << step << " loss_total=" << step_total << " loss_cls=" << step_cls
            << " loss_l1=" << step_l1 << " loss_iou=" << step_iou << " loss_comp=" << step_comp
            << " lr=" << learning_rate_at(cfg.train, step)
            << " t_mean=" << t_sum / static_cast<double>(batch.size()) << "\n";

    bool last = step == cfg.train.steps;
    if (last || (cfg.train.checkpoint_every > 0 && step % cfg.train.checkpoint_every == 0)) {
      Checkpoint ckpt;
      ckpt.config_text = cfg.canonical_text();
      for (auto& [mname, model] : models) ckpt.stores.emplace_back(mname, model.params());
      auto path = last ? out_dir / "checkpoint.ckpt"
                       : out_dir / ("checkpoint_step_" + std::to_string(step) + ".ckpt");
      save_checkpoint(ckpt, path);
      if (last) result.checkpoint_path = path;
    }
  }
  result.metrics_path = out_dir / "metrics.log";
  result.steps_run = cfg.train.steps;
  return result;
}

}  // namespace difftad
