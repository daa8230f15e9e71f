#include "difftad/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace difftad {

namespace {

TemporalProposal seconds_interval(double a, double b) {
  return TemporalProposal{std::min(a, b), std::max(a, b)};
}

// canonical whole-report ordering: score desc, then stable identity keys
void sort_records(std::vector<PredictionRecord>& recs) {
  std::sort(recs.begin(), recs.end(), [](const PredictionRecord& a, const PredictionRecord& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.video_id != b.video_id) return a.video_id < b.video_id;
    if (a.start_seconds != b.start_seconds) return a.start_seconds < b.start_seconds;
    if (a.end_seconds != b.end_seconds) return a.end_seconds < b.end_seconds;
    return a.label < b.label;
  });
}

}  // namespace

std::vector<char> match_detections(const std::vector<TemporalProposal>& preds,
                                   const std::vector<double>& scores,
                                   const std::vector<TemporalProposal>& gts,
                                   double iou_threshold) {
  if (preds.size() != scores.size()) {
    throw std::invalid_argument("match_detections: preds/scores length mismatch");
  }
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[i - 1]) {
      throw std::invalid_argument("match_detections: predictions not sorted by score");
    }
  }
  std::vector<char> flags(preds.size(), 0);
  std::vector<char> taken(gts.size(), 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    double best = -1.0;
    std::size_t best_j = gts.size();
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (taken[j]) continue;
      double v = iou(preds[i], gts[j]);
      if (v > best) {
        best = v;
        best_j = j;
      }
    }
    if (best_j < gts.size() && best >= iou_threshold) {
      flags[i] = 1;
      taken[best_j] = 1;
    }
  }
  return flags;
}

double average_precision(const std::vector<char>& flags, int num_gt) {
  if (num_gt <= 0) return 0.0;
  std::vector<double> precision(flags.size());
  int tp = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i]) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  // precision envelope: max precision at this recall or beyond
  for (std::size_t i = flags.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0.0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i]) ap += precision[i] / static_cast<double>(num_gt);
  }
  return ap;
}

EvalReport map_over_thresholds(const std::vector<PredictionRecord>& preds,
                               const std::vector<AnnotatedVideo>& gts,
                               const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw std::invalid_argument("map_over_thresholds: no thresholds");
  EvalReport report;
  report.thresholds = thresholds;
  report.num_videos = static_cast<int>(gts.size());
  report.num_predictions = static_cast<int>(preds.size());

  // ground truth per (video, class)
  std::map<std::pair<std::string, int>, std::vector<TemporalProposal>> gt_index;
  std::map<int, int> gt_count;
  for (const auto& v : gts) {
    for (const auto& inst : v.instances) {
      gt_index[{v.video_id, inst.label}].push_back(seconds_interval(inst.start, inst.end));
      ++gt_count[inst.label];
      ++report.num_instances;
    }
  }

  std::vector<PredictionRecord> sorted = preds;
  sort_records(sorted);

  std::set<int> class_set;
  for (const auto& [key, n] : gt_count) class_set.insert(key);
  for (const auto& r : sorted) class_set.insert(r.label);

  report.class_ids.assign(class_set.begin(), class_set.end());
  report.ap_table.assign(report.class_ids.size(),
                         std::vector<double>(thresholds.size(), 0.0));
  report.map_per_threshold.assign(thresholds.size(), 0.0);

  for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
    double thr = thresholds[ti];
    double ap_sum = 0.0;
    for (std::size_t ci = 0; ci < report.class_ids.size(); ++ci) {
      int c = report.class_ids[ci];
      int num_gt = gt_count.count(c) ? gt_count[c] : 0;
      // matched state per video for this class
      std::map<std::string, std::vector<char>> taken;
      std::vector<char> flags;
      for (const auto& r : sorted) {
        if (r.label != c) continue;
        auto it = gt_index.find({r.video_id, c});
        if (it == gt_index.end()) {
          flags.push_back(0);
          continue;
        }
        auto& used = taken[r.video_id];
        if (used.empty()) used.assign(it->second.size(), 0);
        TemporalProposal p = seconds_interval(r.start_seconds, r.end_seconds);
        double best = -1.0;
        std::size_t best_j = it->second.size();
        for (std::size_t j = 0; j < it->second.size(); ++j) {
          if (used[j]) continue;
          double v = iou(p, it->second[j]);
          if (v > best) {
            best = v;
            best_j = j;
          }
        }
        if (best_j < it->second.size() && best >= thr) {
          flags.push_back(1);
          used[best_j] = 1;
        } else {
          flags.push_back(0);
        }
      }
      double ap = average_precision(flags, num_gt);
      report.ap_table[ci][ti] = ap;
      ap_sum += ap;
    }
    report.map_per_threshold[ti] =
        report.class_ids.empty() ? 0.0 : ap_sum / static_cast<double>(report.class_ids.size());
  }
  double total = 0.0;
  for (double v : report.map_per_threshold) total += v;
  report.average_map = total / static_cast<double>(thresholds.size());
  return report;
}

std::map<int, double> ar_at_an(const std::vector<PredictionRecord>& preds,
                               const std::vector<AnnotatedVideo>& gts,
                               const std::vector<int>& budgets,
                               const std::vector<double>& iou_grid) {
  for (int b : budgets) {
    if (b < 1) throw std::invalid_argument("ar_at_an: budgets must be positive");
  }
  std::map<std::string, std::vector<TemporalProposal>> gt_by_video;
  int total_gt = 0;
  for (const auto& v : gts) {
    for (const auto& inst : v.instances) {
      gt_by_video[v.video_id].push_back(seconds_interval(inst.start, inst.end));
      ++total_gt;
    }
  }
  std::vector<PredictionRecord> sorted = preds;
  sort_records(sorted);
  std::map<std::string, std::vector<TemporalProposal>> preds_by_video;  // score order
  for (const auto& r : sorted) {
    preds_by_video[r.video_id].push_back(seconds_interval(r.start_seconds, r.end_seconds));
  }

  std::map<int, double> out;
  for (int budget : budgets) {
    double recall_sum = 0.0;
    for (double thr : iou_grid) {
      int matched = 0;
      for (const auto& [vid, gtl] : gt_by_video) {
        auto it = preds_by_video.find(vid);
        if (it == preds_by_video.end()) continue;
        std::vector<char> taken(gtl.size(), 0);
        std::size_t limit = std::min<std::size_t>(it->second.size(),
                                                  static_cast<std::size_t>(budget));
        for (std::size_t i = 0; i < limit; ++i) {
          double best = -1.0;
          std::size_t best_j = gtl.size();
          for (std::size_t j = 0; j < gtl.size(); ++j) {
            if (taken[j]) continue;
            double v = iou(it->second[i], gtl[j]);
            if (v > best) {
              best = v;
              best_j = j;
            }
          }
          if (best_j < gtl.size() && best >= thr) {
            taken[best_j] = 1;
            ++matched;
          }
        }
      }
      recall_sum += total_gt > 0 ? static_cast<double>(matched) / total_gt : 0.0;
    }
    out[budget] = recall_sum / static_cast<double>(iou_grid.size());
  }
  return out;
}

EvalReport evaluate(const std::vector<PredictionRecord>& preds,
                    const std::vector<AnnotatedVideo>& gts,
                    const std::vector<double>& thresholds, const std::vector<int>& budgets,
                    const std::vector<double>& ar_iou_grid) {
  EvalReport report = map_over_thresholds(preds, gts, thresholds);
  auto ar = ar_at_an(preds, gts, budgets, ar_iou_grid);
  report.ar_at_an.assign(ar.begin(), ar.end());
  return report;
}

namespace {
void write_echo(std::ostream& os, const std::string& config_echo) {
  std::istringstream echo(config_echo);
  std::string line;
  while (std::getline(echo, line)) os << "# " << line << "\n";
}
}  // namespace

void write_report(const EvalReport& report, const std::filesystem::path& path,
                  const std::string& config_echo) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write report: " + path.string());
  write_echo(os, config_echo);
  os << "videos: " << report.num_videos << "\n";
  os << "instances: " << report.num_instances << "\n";
  os << "predictions: " << report.num_predictions << "\n\n";
  os << "mAP per IoU threshold\n";
  for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "  %.2f -> %.6f\n", report.thresholds[i],
                  report.map_per_threshold[i]);
    os << buf;
  }
  char avg[64];
  std::snprintf(avg, sizeof(avg), "average mAP: %.6f\n\n", report.average_map);
  os << avg;
  os << "per-class AP\n";
  for (std::size_t ci = 0; ci < report.class_ids.size(); ++ci) {
    os << "  class " << report.class_ids[ci] << ":";
    for (double ap : report.ap_table[ci]) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), " %.4f", ap);
      os << buf;
    }
    os << "\n";
  }
  if (!report.ar_at_an.empty()) {
    os << "\naverage recall\n";
    for (auto [budget, ar] : report.ar_at_an) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "  AR@%d -> %.6f\n", budget, ar);
      os << buf;
    }
  }
  if (!os) throw std::runtime_error("report write failed: " + path.string());
}

void write_metrics_file(const EvalReport& report, const std::filesystem::path& path,
                        const std::string& config_echo) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write metrics: " + path.string());
  write_echo(os, config_echo);
  char buf[96];
  for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "map_%.2f = %.9f\n", report.thresholds[i],
                  report.map_per_threshold[i]);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "average_map = %.9f\n", report.average_map);
  os << buf;
  for (auto [budget, ar] : report.ar_at_an) {
    std::snprintf(buf, sizeof(buf), "ar_%d = %.9f\n", budget, ar);
    os << buf;
  }
  os << "videos = " << report.num_videos << "\n";
  os << "instances = " << report.num_instances << "\n";
  os << "predictions = " << report.num_predictions << "\n";
  if (!os) throw std::runtime_error("metrics write failed: " + path.string());
}

}  // namespace difftad
