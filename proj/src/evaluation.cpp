#include "rtpen/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "rtpen/errors.hpp"

namespace rtpen {

double temporal_iou(const Span& x, const Span& y) {
  const double inter = std::max(
      0.0, std::min(x.end_seconds, y.end_seconds) -
               std::max(x.start_seconds, y.start_seconds));
  const double uni = std::max(x.end_seconds, y.end_seconds) -
                     std::min(x.start_seconds, y.start_seconds);
  if (uni <= 0.0) {
    // both intervals degenerate: identical points count as a full match
    return (x.start_seconds == y.start_seconds &&
            x.end_seconds == y.end_seconds)
               ? 1.0
               : 0.0;
  }
  return inter / uni;
}

std::vector<ScoredMoment> nms(std::vector<ScoredMoment> moments,
                              double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ArgumentError("nms threshold must lie in (0,1)");
  std::vector<ScoredMoment> kept;
  std::vector<char> alive(moments.size(), 1);
  for (;;) {
    int best = -1;
    for (size_t i = 0; i < moments.size(); ++i) {
      if (!alive[i]) continue;
      if (best < 0) {
        best = static_cast<int>(i);
        continue;
      }
      const auto& m = moments[i];
      const auto& b = moments[best];
      if (m.score > b.score ||
          (m.score == b.score &&
           (m.start < b.start || (m.start == b.start && m.end < b.end))))
        best = static_cast<int>(i);
    }
    if (best < 0) break;
    alive[best] = 0;
    kept.push_back(moments[best]);
    const Span bs{moments[best].start, moments[best].end};
    for (size_t i = 0; i < moments.size(); ++i) {
      if (!alive[i]) continue;
      if (temporal_iou({moments[i].start, moments[i].end}, bs) > threshold)
        alive[i] = 0;
    }
  }
  return kept;
}

namespace {

const Span& gt_for(const std::map<std::string, Span>& ground_truths,
                   const std::string& sample_id) {
  const auto it = ground_truths.find(sample_id);
  if (it == ground_truths.end())
    throw EvaluationError("no ground truth for sample " + sample_id);
  return it->second;
}

}  // namespace

double recall_at(const std::vector<Prediction>& predictions,
                 const std::map<std::string, Span>& ground_truths, int n,
                 double m) {
  if (predictions.empty()) throw EvaluationError("no predictions");
  int hits = 0;
  for (const auto& pred : predictions) {
    const Span& gt = gt_for(ground_truths, pred.sample_id);
    const int top = std::min<int>(n, static_cast<int>(pred.ranked_moments.size()));
    for (int i = 0; i < top; ++i) {
      const auto& mom = pred.ranked_moments[i];
      if (temporal_iou({mom.start, mom.end}, gt) > m) {  // strictly greater
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

double mean_iou(const std::vector<Prediction>& predictions,
                const std::map<std::string, Span>& ground_truths) {
  if (predictions.empty()) throw EvaluationError("no predictions");
  double total = 0.0;
  for (const auto& pred : predictions) {
    const Span& gt = gt_for(ground_truths, pred.sample_id);
    if (pred.ranked_moments.empty()) continue;  // contributes IoU 0
    const auto& top = pred.ranked_moments.front();
    total += temporal_iou({top.start, top.end}, gt);
  }
  return total / static_cast<double>(predictions.size());
}

std::pair<double, double> rank_metrics(
    const std::vector<Prediction>& predictions,
    const std::map<std::string, Span>& ground_truths) {
  if (predictions.empty()) throw EvaluationError("no predictions");
  constexpr double kEps = 1e-9;
  int top1 = 0, top5 = 0;
  for (const auto& pred : predictions) {
    const Span& gt = gt_for(ground_truths, pred.sample_id);
    int rank = -1;
    for (size_t i = 0; i < pred.ranked_moments.size(); ++i) {
      const auto& mom = pred.ranked_moments[i];
      if (std::abs(mom.start - gt.start_seconds) < kEps &&
          std::abs(mom.end - gt.end_seconds) < kEps) {
        rank = static_cast<int>(i);
        break;
      }
    }
    if (rank < 0)
      throw EvaluationError("ground truth of sample " + pred.sample_id +
                            " is not among the ranked candidates");
    if (rank == 0) ++top1;
    if (rank < 5) ++top5;
  }
  const double denom = static_cast<double>(predictions.size());
  return {top1 / denom, top5 / denom};
}

Span grid_to_seconds(Cell cell, double seconds_per_index) {
  return {cell.a * seconds_per_index, (cell.b + 1) * seconds_per_index};
}

Cell seconds_to_nearest_cell(const Span& span, double seconds_per_index,
                             int n_v) {
  int a = static_cast<int>(std::lround(span.start_seconds / seconds_per_index));
  int b = static_cast<int>(std::lround(span.end_seconds / seconds_per_index)) - 1;
  a = std::clamp(a, 0, n_v - 1);
  b = std::clamp(b, a, n_v - 1);
  return {a, b};
}

void write_predictions(const std::filesystem::path& path,
                       const std::vector<Prediction>& predictions) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write predictions " + path.string());
  for (const auto& pred : predictions) {
    out << pred.sample_id;
    const size_t top = std::min<size_t>(5, pred.ranked_moments.size());
    for (size_t i = 0; i < top; ++i) {
      const auto& m = pred.ranked_moments[i];
      char buf[128];
      std::snprintf(buf, sizeof(buf), "\t%.9g,%.9g,%.9g", m.start, m.end,
                    m.score);
      out << buf;
    }
    out << "\n";
  }
}

std::string format_report(const MetricsReport& report) {
  std::string text;
  for (const auto& [key, value] : report) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s=%.4f\n", key.c_str(), value);
    text += buf;
  }
  return text;
}

void write_report(const std::filesystem::path& path,
                  const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write report " + path.string());
  out << format_report(report);
}

}  // namespace rtpen
