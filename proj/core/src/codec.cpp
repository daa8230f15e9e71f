#include "difftad/codec.hpp"

#include <cmath>
#include <stdexcept>

namespace difftad {

namespace {
constexpr double kTwoPi = 6.28318530717958647692;

void check_scale(double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("signal scale must be positive");
}
}  // namespace

SignalProposal scale_signal(const TemporalProposal& p, double scale) {
  check_scale(scale);
  return SignalProposal{(2.0 * p.start - 1.0) * scale, (2.0 * p.end - 1.0) * scale};
}

TemporalProposal unscale_signal(const SignalProposal& sp, double scale) {
  check_scale(scale);
  if (!std::isfinite(sp.start) || !std::isfinite(sp.end)) {
    throw std::invalid_argument("unscale_signal: non-finite input");
  }
  double a = (sp.start / scale + 1.0) / 2.0;
  double b = (sp.end / scale + 1.0) / 2.0;
  return canonicalize(a, b);
}

Eigen::MatrixXd scale_signal_rows(const Eigen::MatrixXd& normalized, double scale) {
  check_scale(scale);
  return ((2.0 * normalized).array() - 1.0) * scale;
}

Eigen::MatrixXd unscale_signal_rows(const Eigen::MatrixXd& signal, double scale) {
  check_scale(scale);
  return ((signal / scale).array() + 1.0) / 2.0;
}

Eigen::MatrixXd clamp_signal_rows(const Eigen::MatrixXd& signal, double scale) {
  check_scale(scale);
  return signal.cwiseMax(-scale).cwiseMin(scale);
}

std::vector<TemporalProposal> decode_proposals(const Eigen::MatrixXd& signal, double scale) {
  if (signal.cols() != 2) throw std::invalid_argument("decode_proposals: need Nx2 signal");
  Eigen::MatrixXd norm = unscale_signal_rows(signal, scale);
  std::vector<TemporalProposal> out;
  out.reserve(static_cast<std::size_t>(signal.rows()));
  for (Eigen::Index i = 0; i < norm.rows(); ++i) {
    out.push_back(canonicalize(norm(i, 0), norm(i, 1)));
  }
  return out;
}

Eigen::RowVectorXd sin_cos_features(double x, int n, double base) {
  Eigen::RowVectorXd out(n);
  for (int k = 0; k < n; ++k) {
    int pair = k / 2;
    double omega = std::pow(base, -2.0 * pair / n);
    double a = x * omega;
    out(k) = (k % 2 == 0) ? std::sin(a) : std::cos(a);
  }
  return out;
}

Eigen::RowVectorXd sinusoidal_embed(const SignalProposal& sp, int dim) {
  if (dim < 4 || dim % 2 != 0) {
    throw std::invalid_argument("sinusoidal_embed: dim must be even and >= 4");
  }
  int half = dim / 2;
  Eigen::RowVectorXd out(dim);
  out.head(half) = sin_cos_features(kTwoPi * sp.start, half);
  out.tail(half) = sin_cos_features(kTwoPi * sp.end, half);
  return out;
}

Eigen::MatrixXd sinusoidal_embed_rows(const Eigen::MatrixXd& signal, int dim) {
  if (signal.cols() != 2) throw std::invalid_argument("sinusoidal_embed_rows: need Nx2");
  Eigen::MatrixXd out(signal.rows(), dim);
  for (Eigen::Index i = 0; i < signal.rows(); ++i) {
    out.row(i) = sinusoidal_embed(SignalProposal{signal(i, 0), signal(i, 1)}, dim);
  }
  return out;
}

void register_projection_params(ParamStore& store, int dim, const std::string& prefix) {
  store.create(prefix + "w1", dim, dim);
  store.create(prefix + "b1", 1, dim);
  store.create(prefix + "w2", dim, dim);
  store.create(prefix + "b2", 1, dim);
}

ad::Var project_queries_graph(Binder& b, const Eigen::MatrixXd& signal, int dim,
                              const std::string& prefix) {
  ad::Var e = ad::constant(b.tape(), sinusoidal_embed_rows(signal, dim));
  ad::Var h = ad::gelu(ad::add_rowvec(ad::matmul(e, b(prefix + "w1")), b(prefix + "b1")));
  return ad::add_rowvec(ad::matmul(h, b(prefix + "w2")), b(prefix + "b2"));
}

std::vector<QueryEmbedding> project_queries(const std::vector<SignalProposal>& sps,
                                            const ParamStore& params, int dim, int timestep,
                                            const std::string& prefix) {
  Eigen::MatrixXd sig(static_cast<Eigen::Index>(sps.size()), 2);
  for (std::size_t i = 0; i < sps.size(); ++i) {
    sig(static_cast<Eigen::Index>(i), 0) = sps[i].start;
    sig(static_cast<Eigen::Index>(i), 1) = sps[i].end;
  }
  ad::Tape tape;
  Binder bind(tape, params);
  ad::Var q = project_queries_graph(bind, sig, dim, prefix);
  std::vector<QueryEmbedding> out(sps.size());
  for (std::size_t i = 0; i < sps.size(); ++i) {
    out[i].values = q.val().row(static_cast<Eigen::Index>(i));
    out[i].source = sps[i];
    out[i].timestep = timestep;
  }
  return out;
}

}  // namespace difftad
