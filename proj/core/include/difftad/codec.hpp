#pragma once

#include <Eigen/Core>
#include <vector>

#include "difftad/interval.hpp"
#include "difftad/params.hpp"

namespace difftad {

// A proposal in diffusion signal space: both components in [-scale, +scale].
struct SignalProposal {
  double start = 0.0;
  double end = 0.0;
};

struct QueryEmbedding {
  Eigen::RowVectorXd values;  // width D
  SignalProposal source;
  int timestep = 0;
};

// x -> (2x - 1) * scale, mapping [0,1] onto [-scale, scale].
SignalProposal scale_signal(const TemporalProposal& p, double scale);

// Inverse map with clamping into [0,1], then canonical ordering.
TemporalProposal unscale_signal(const SignalProposal& sp, double scale);

// Matrix forms used by the pipelines: rows are (start, end) pairs.
Eigen::MatrixXd scale_signal_rows(const Eigen::MatrixXd& normalized, double scale);
Eigen::MatrixXd unscale_signal_rows(const Eigen::MatrixXd& signal, double scale);
std::vector<TemporalProposal> decode_proposals(const Eigen::MatrixXd& signal, double scale);

// Clamps every entry into [-scale, scale]. Noisy signals pass through this
// before being embedded, in training and sampling alike, so the decoder sees
// one input distribution.
Eigen::MatrixXd clamp_signal_rows(const Eigen::MatrixXd& signal, double scale);

// n alternating sin/cos features of a scalar at geometrically spaced
// frequencies: pair p uses base^(-2p/n).
Eigen::RowVectorXd sin_cos_features(double x, int n, double base = 10000.0);

// Per-coordinate sinusoidal features (dim/2 each for start and end),
// concatenated. Inputs are mapped through a 2*pi gain so the usable signal
// range spreads over the principal period.
Eigen::RowVectorXd sinusoidal_embed(const SignalProposal& sp, int dim);
Eigen::MatrixXd sinusoidal_embed_rows(const Eigen::MatrixXd& signal, int dim);  // N x dim

// Learnable projection g: two affine layers with a GELU between them,
// applied to the sinusoidal embedding. Parameters live under `prefix` in the
// binder's store ("w1","b1","w2","b2").
ad::Var project_queries_graph(Binder& b, const Eigen::MatrixXd& signal, int dim,
                              const std::string& prefix);

// Typed wrapper over the graph path (values only).
std::vector<QueryEmbedding> project_queries(const std::vector<SignalProposal>& sps,
                                            const ParamStore& params, int dim, int timestep,
                                            const std::string& prefix);

void register_projection_params(ParamStore& store, int dim, const std::string& prefix);

}  // namespace difftad
