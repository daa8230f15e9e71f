#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "difftad/dataset.hpp"
#include "difftad/interval.hpp"
#include "difftad/sampler.hpp"

namespace difftad {

// Greedy TP/FP matching for one class of one video. preds must be sorted by
// score descending; a prediction is TP when its IoU with an unmatched ground
// truth reaches the threshold (>=; best IoU wins, ties to the earlier one).
std::vector<char> match_detections(const std::vector<TemporalProposal>& preds,
                                   const std::vector<double>& scores,
                                   const std::vector<TemporalProposal>& gts,
                                   double iou_threshold);

// Interpolated AP (precision envelope over the PR curve). AP is 0 when
// predictions exist without ground truth; classes with neither are excluded
// upstream.
double average_precision(const std::vector<char>& flags, int num_gt);

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<double> map_per_threshold;
  double average_map = 0.0;
  std::vector<int> class_ids;          // classes that entered the average
  std::vector<std::vector<double>> ap_table;  // [class][threshold]
  std::vector<std::pair<int, double>> ar_at_an;
  int num_videos = 0;
  int num_instances = 0;
  int num_predictions = 0;
};

EvalReport map_over_thresholds(const std::vector<PredictionRecord>& preds,
                               const std::vector<AnnotatedVideo>& gts,
                               const std::vector<double>& thresholds);

// Class-agnostic recall of the top-n predictions per video, averaged over
// iou_grid, for each budget.
std::map<int, double> ar_at_an(const std::vector<PredictionRecord>& preds,
                               const std::vector<AnnotatedVideo>& gts,
                               const std::vector<int>& budgets,
                               const std::vector<double>& iou_grid);

EvalReport evaluate(const std::vector<PredictionRecord>& preds,
                    const std::vector<AnnotatedVideo>& gts,
                    const std::vector<double>& thresholds, const std::vector<int>& budgets,
                    const std::vector<double>& ar_iou_grid);

void write_report(const EvalReport& report, const std::filesystem::path& path,
                  const std::string& config_echo);
void write_metrics_file(const EvalReport& report, const std::filesystem::path& path,
                        const std::string& config_echo);

}  // namespace difftad
