#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

namespace difftad {

// One candidate action interval in normalized time. Canonical means
// start <= end and both endpoints inside [0, 1].
struct TemporalProposal {
  double start = 0.0;
  double end = 0.0;

  double width() const { return end - start; }

  bool operator==(const TemporalProposal&) const = default;
};

// Sorts the pair ascending and clamps to [0, 1]. Throws on NaN/Inf.
TemporalProposal canonicalize(double a, double b);

// Intersection over union of two canonical intervals. Zero-width pairs have
// IoU 0 even when coincident (no detectable extent, avoids 0/0).
double iou(const TemporalProposal& a, const TemporalProposal& b);

// Entry (i, j) = iou(xs[i], ys[j]).
Eigen::MatrixXd pairwise_iou(const std::vector<TemporalProposal>& xs,
                             const std::vector<TemporalProposal>& ys);

// Greedy descending-score suppression: a proposal is dropped when its IoU
// with an already-kept proposal exceeds iou_threshold (strictly, so a
// threshold of 1.0 keeps everything). Returned indices are in descending
// score order; score ties keep the lower index first.
std::vector<std::size_t> nms(const std::vector<TemporalProposal>& proposals,
                             const std::vector<double>& scores,
                             double iou_threshold);

}  // namespace difftad
