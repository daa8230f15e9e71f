#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <utility>
#include <vector>

#include "difftad/rng.hpp"

namespace difftad {

// Pair sets produced by thresholding the similarity matrix A and the IoU
// matrix B against gamma. qc always contains every self pair (i, i), so
// refinement is total; all lists are sorted lexicographically.
struct SelectedPairs {
  std::vector<std::pair<int, int>> sim;  // A[i,j] - gamma > 0
  std::vector<std::pair<int, int>> iou;  // B[i,j] - gamma > 0
  std::vector<std::pair<int, int>> qc;   // (iou \ sim) U {(i,i)}
};

// A[i,j] = cosine similarity of current row i and previous row j; a zero
// vector on either side yields 0.
Eigen::MatrixXd similarity_matrix(const Eigen::MatrixXd& current,
                                  const Eigen::MatrixXd& previous);

SelectedPairs select_pairs(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma);

// Optional variant behind a config flag: qc = (iou \ sim) U sim U base,
// i.e. the similarity pairs are unioned in instead of only subtracted.
SelectedPairs select_pairs_union(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                 double gamma);

// For each query i, scaled dot-product attention over the keys/values of all
// j with (i,j) in qc. With only the self pair and keys == values == queries
// this is exactly the identity.
Eigen::MatrixXd refine_queries(const Eigen::MatrixXd& queries,
                               const std::vector<std::pair<int, int>>& qc,
                               const Eigen::MatrixXd& keys, const Eigen::MatrixXd& values);

// Independent Bernoulli(rate) per proposal; the inference-time mask is
// all-true.
std::vector<bool> apply_training_rate(std::size_t batch, double rate, Rng& rng);

}  // namespace difftad
