#include "difftad/interval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace difftad {

TemporalProposal canonicalize(double a, double b) {
  if (!std::isfinite(a) || !std::isfinite(b)) {
    throw std::invalid_argument("canonicalize: non-finite endpoint");
  }
  double lo = std::min(a, b);
  double hi = std::max(a, b);
  lo = std::clamp(lo, 0.0, 1.0);
  hi = std::clamp(hi, 0.0, 1.0);
  return TemporalProposal{lo, hi};
}

double iou(const TemporalProposal& a, const TemporalProposal& b) {
  double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
  if (inter <= 0.0) return 0.0;
  double uni = a.width() + b.width() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

Eigen::MatrixXd pairwise_iou(const std::vector<TemporalProposal>& xs,
                             const std::vector<TemporalProposal>& ys) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(xs.size()),
                      static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < ys.size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = iou(xs[i], ys[j]);
    }
  }
  return out;
}

std::vector<std::size_t> nms(const std::vector<TemporalProposal>& proposals,
                             const std::vector<double>& scores,
                             double iou_threshold) {
  if (proposals.size() != scores.size()) {
    throw std::invalid_argument("nms: proposals/scores length mismatch");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw std::invalid_argument("nms: non-finite score");
  }
  std::vector<std::size_t> order(proposals.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<std::size_t> kept;
  std::vector<bool> suppressed(proposals.size(), false);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    std::size_t i = order[oi];
    if (suppressed[i]) continue;
    kept.push_back(i);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      std::size_t j = order[oj];
      if (suppressed[j]) continue;
      if (iou(proposals[i], proposals[j]) > iou_threshold) suppressed[j] = true;
    }
  }
  return kept;
}

}  // namespace difftad
