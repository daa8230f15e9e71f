#include "difftad/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace difftad {

Eigen::MatrixXd similarity_matrix(const Eigen::MatrixXd& current,
                                  const Eigen::MatrixXd& previous) {
  if (current.rows() != previous.rows()) {
    throw std::invalid_argument("similarity_matrix: query count mismatch");
  }
  if (current.cols() != previous.cols()) {
    throw std::invalid_argument("similarity_matrix: embedding width mismatch");
  }
  Eigen::Index n = current.rows();
  Eigen::VectorXd cn = current.rowwise().norm();
  Eigen::VectorXd pn = previous.rowwise().norm();
  Eigen::MatrixXd a = current * previous.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double d = cn(i) * pn(j);
      a(i, j) = d > 0.0 ? a(i, j) / d : 0.0;
    }
  }
  return a;
}

namespace {
SelectedPairs select_impl(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma,
                          bool union_sim) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("select_pairs: A/B shape mismatch");
  }
  if (gamma < -1.0 || gamma > 1.0) {
    throw std::invalid_argument("select_pairs: gamma must lie in [-1, 1]");
  }
  SelectedPairs out;
  Eigen::Index n = a.rows();
  std::vector<std::vector<char>> in_sim(static_cast<std::size_t>(n),
                                        std::vector<char>(static_cast<std::size_t>(n), 0));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (a(i, j) - gamma > 0.0) {
        out.sim.emplace_back(static_cast<int>(i), static_cast<int>(j));
        in_sim[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = 1;
      }
      if (b(i, j) - gamma > 0.0) {
        out.iou.emplace_back(static_cast<int>(i), static_cast<int>(j));
      }
    }
  }
  std::vector<std::vector<char>> in_qc(static_cast<std::size_t>(n),
                                       std::vector<char>(static_cast<std::size_t>(n), 0));
  for (auto [i, j] : out.iou) {
    if (!in_sim[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
      in_qc[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = 1;
    }
  }
  if (union_sim) {
    for (auto [i, j] : out.sim) in_qc[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = 1;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    in_qc[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 1;  // Q_base
  }
  for (int i = 0; i < static_cast<int>(n); ++i) {
    for (int j = 0; j < static_cast<int>(n); ++j) {
      if (in_qc[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
        out.qc.emplace_back(i, j);
      }
    }
  }
  return out;
}
}  // namespace

SelectedPairs select_pairs(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma) {
  return select_impl(a, b, gamma, false);
}

SelectedPairs select_pairs_union(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                 double gamma) {
  return select_impl(a, b, gamma, true);
}

Eigen::MatrixXd refine_queries(const Eigen::MatrixXd& queries,
                               const std::vector<std::pair<int, int>>& qc,
                               const Eigen::MatrixXd& keys, const Eigen::MatrixXd& values) {
  Eigen::Index n = queries.rows();
  Eigen::Index d = queries.cols();
  if (keys.rows() != values.rows() || keys.cols() != d || values.cols() != d) {
    throw std::invalid_argument("refine_queries: key/value shape mismatch");
  }
  std::vector<std::vector<int>> partners(static_cast<std::size_t>(n));
  for (auto [i, j] : qc) {
    if (i < 0 || i >= n || j < 0 || j >= keys.rows()) {
      throw std::invalid_argument("refine_queries: pair index out of range");
    }
    partners[static_cast<std::size_t>(i)].push_back(j);
  }
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d));
  Eigen::MatrixXd out(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& js = partners[static_cast<std::size_t>(i)];
    if (js.empty()) {
      throw std::invalid_argument("refine_queries: query without a self pair");
    }
    std::sort(js.begin(), js.end());
    if (js.size() == 1) {  // softmax over one element has weight exactly 1
      out.row(i) = values.row(js[0]);
      continue;
    }
    Eigen::VectorXd scores(static_cast<Eigen::Index>(js.size()));
    for (std::size_t k = 0; k < js.size(); ++k) {
      scores(static_cast<Eigen::Index>(k)) = queries.row(i).dot(keys.row(js[k])) * inv_sqrt;
    }
    double m = scores.maxCoeff();
    Eigen::VectorXd w = (scores.array() - m).exp();
    w /= w.sum();
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d);
    for (std::size_t k = 0; k < js.size(); ++k) {
      acc += w(static_cast<Eigen::Index>(k)) * values.row(js[k]);
    }
    out.row(i) = acc;
  }
  return out;
}

std::vector<bool> apply_training_rate(std::size_t batch, double rate, Rng& rng) {
  if (rate < 0.0 || rate > 1.0) {
    throw std::invalid_argument("apply_training_rate: rate must lie in [0, 1]");
  }
  std::vector<bool> mask(batch);
  for (std::size_t i = 0; i < batch; ++i) mask[i] = rng.bernoulli(rate);
  return mask;
}

}  // namespace difftad
