#ifndef RTPEN_EVALUATION_HPP
#define RTPEN_EVALUATION_HPP

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rtpen/data_model.hpp"

namespace rtpen {

struct ScoredMoment {
  double start = 0.0;
  double end = 0.0;
  double score = 0.0;
};

struct Prediction {
  std::string sample_id;
  std::vector<ScoredMoment> ranked_moments;  // descending score, post-NMS
};

struct Cell {
  int a = 0;
  int b = 0;
};

double temporal_iou(const Span& x, const Span& y);

// Greedy NMS: keep the highest score (ties to the lexicographically
// smallest interval), drop everything with IoU > threshold against it.
std::vector<ScoredMoment> nms(std::vector<ScoredMoment> moments,
                              double threshold);

double recall_at(const std::vector<Prediction>& predictions,
                 const std::map<std::string, Span>& ground_truths, int n,
                 double m);

double mean_iou(const std::vector<Prediction>& predictions,
                const std::map<std::string, Span>& ground_truths);

// For the fixed 21-candidate setting: fraction of samples whose exact
// ground-truth candidate ranks within top-1 / top-5.
std::pair<double, double> rank_metrics(
    const std::vector<Prediction>& predictions,
    const std::map<std::string, Span>& ground_truths);

// Cell (a,b) covers pooled indices a..b inclusive.
Span grid_to_seconds(Cell cell, double seconds_per_index);
Cell seconds_to_nearest_cell(const Span& span, double seconds_per_index,
                             int n_v);

// Prediction file: sample_id then up to five "start,end,score" triples,
// tab-separated.
void write_predictions(const std::filesystem::path& path,
                       const std::vector<Prediction>& predictions);

// Metrics report: ordered key=value lines.
using MetricsReport = std::vector<std::pair<std::string, double>>;
std::string format_report(const MetricsReport& report);
void write_report(const std::filesystem::path& path,
                  const MetricsReport& report);

}  // namespace rtpen

#endif  // RTPEN_EVALUATION_HPP
