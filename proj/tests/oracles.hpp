#ifndef RTPEN_TESTS_ORACLES_HPP
#define RTPEN_TESTS_ORACLES_HPP

// Straight-loop reference implementations used as test oracles. These
// deliberately avoid the library's tape/Eigen expression paths: every
// value is produced by explicit scalar loops.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rtpen/tape.hpp"

namespace oracle {

using rtpen::Mat;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// u_j = sum_i softmax(W q_i + b)_j * (q_i - c_j)
inline Mat vlad(const Mat& q, const Mat& assign_w, const Mat& assign_b,
                const Mat& centers) {
  const int n_q = static_cast<int>(q.rows());
  const int d_q = static_cast<int>(q.cols());
  const int n_c = static_cast<int>(centers.rows());
  Mat alpha(n_q, n_c);
  for (int i = 0; i < n_q; ++i) {
    std::vector<double> logits(n_c, 0.0);
    double mx = -1e300;
    for (int j = 0; j < n_c; ++j) {
      double acc = assign_b(0, j);
      for (int d = 0; d < d_q; ++d) acc += assign_w(j, d) * q(i, d);
      logits[j] = acc;
      mx = std::max(mx, acc);
    }
    double denom = 0.0;
    for (int j = 0; j < n_c; ++j) denom += std::exp(logits[j] - mx);
    for (int j = 0; j < n_c; ++j) alpha(i, j) = std::exp(logits[j] - mx) / denom;
  }
  Mat u = Mat::Zero(n_c, d_q);
  for (int j = 0; j < n_c; ++j)
    for (int i = 0; i < n_q; ++i)
      for (int d = 0; d < d_q; ++d)
        u(j, d) += alpha(i, j) * (q(i, d) - centers(j, d));
  return u;
}

// score_ij = sigmoid(w' tanh(W1 v_i + W2 u_j + b)); omit_sigmoid gives the
// raw attention logits of the cross-modal unit.
inline Mat pair_scores(const Mat& v, const Mat& u, const Mat& w1,
                       const Mat& w2, const Mat& b, const Mat& w,
                       bool apply_sigmoid) {
  const int n = static_cast<int>(v.rows());
  const int m = static_cast<int>(u.rows());
  const int dh = static_cast<int>(w1.rows());
  Mat out(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      double score = 0.0;
      for (int h = 0; h < dh; ++h) {
        double acc = b(0, h);
        for (int d = 0; d < v.cols(); ++d) acc += w1(h, d) * v(i, d);
        for (int d = 0; d < u.cols(); ++d) acc += w2(h, d) * u(j, d);
        score += w(h, 0) * std::tanh(acc);
      }
      out(i, j) = apply_sigmoid ? sigmoid(score) : score;
    }
  }
  return out;
}

// row-softmax aggregation: s_i = sum_j softmax(delta_i.)_j q_j
inline Mat frame_to_word_aggregate(const Mat& delta, const Mat& q) {
  const int n = static_cast<int>(delta.rows());
  const int m = static_cast<int>(delta.cols());
  Mat s = Mat::Zero(n, q.cols());
  for (int i = 0; i < n; ++i) {
    double mx = -1e300;
    for (int j = 0; j < m; ++j) mx = std::max(mx, delta(i, j));
    double denom = 0.0;
    for (int j = 0; j < m; ++j) denom += std::exp(delta(i, j) - mx);
    for (int j = 0; j < m; ++j) {
      const double w = std::exp(delta(i, j) - mx) / denom;
      for (int d = 0; d < q.cols(); ++d) s(i, d) += w * q(j, d);
    }
  }
  return s;
}

// column-softmax aggregation: s_j = sum_i softmax(delta_.j)_i v_i
inline Mat word_to_frame_aggregate(const Mat& delta, const Mat& v) {
  const int n = static_cast<int>(delta.rows());
  const int m = static_cast<int>(delta.cols());
  Mat s = Mat::Zero(m, v.cols());
  for (int j = 0; j < m; ++j) {
    double mx = -1e300;
    for (int i = 0; i < n; ++i) mx = std::max(mx, delta(i, j));
    double denom = 0.0;
    for (int i = 0; i < n; ++i) denom += std::exp(delta(i, j) - mx);
    for (int i = 0; i < n; ++i) {
      const double w = std::exp(delta(i, j) - mx) / denom;
      for (int d = 0; d < v.cols(); ++d) s(j, d) += w * v(i, d);
    }
  }
  return s;
}

// naive interval sums over valid cells; [n_v*n_v, d] with row a*n_v+b
inline Mat moment_map(const Mat& m, const std::vector<std::pair<int, int>>& cells,
                      int n_v) {
  Mat f = Mat::Zero(n_v * n_v, m.cols());
  for (const auto& [a, b] : cells)
    for (int i = a; i <= b; ++i)
      for (int d = 0; d < m.cols(); ++d) f(a * n_v + b, d) += m(i, d);
  return f;
}

// dense same-padded cross-correlation over the full HxW map
inline Mat conv2d(const Mat& map, const Mat& kernel, const Mat& bias, int h,
                  int w, int ksize) {
  const int cin = static_cast<int>(map.cols());
  const int cout = static_cast<int>(kernel.rows());
  const int pad = (ksize - 1) / 2;
  Mat out(h * w, cout);
  for (int oy = 0; oy < h; ++oy) {
    for (int ox = 0; ox < w; ++ox) {
      for (int oc = 0; oc < cout; ++oc) {
        double acc = bias(0, oc);
        for (int ky = 0; ky < ksize; ++ky) {
          const int iy = oy + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < ksize; ++kx) {
            const int ix = ox + kx - pad;
            if (ix < 0 || ix >= w) continue;
            for (int ic = 0; ic < cin; ++ic)
              acc += kernel(oc, (ky * ksize + kx) * cin + ic) *
                     map(iy * w + ix, ic);
          }
        }
        out(oy * w + ox, oc) = acc;
      }
    }
  }
  return out;
}

inline double interval_iou(double s1, double e1, double s2, double e2) {
  const double inter = std::max(0.0, std::min(e1, e2) - std::max(s1, s2));
  const double uni = std::max(e1, e2) - std::min(s1, s2);
  if (uni <= 0.0) return (s1 == s2 && e1 == e2) ? 1.0 : 0.0;
  return inter / uni;
}

// brute-force center-based selection over (cell, score) pairs
struct SelectedCell {
  int a, b;
  double score;
  int pos;
};

inline std::vector<SelectedCell> select_center(
    const std::vector<std::pair<int, int>>& cells,
    const std::vector<double>& scores, int count) {
  int center = 0;
  for (size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[center]) center = static_cast<int>(i);
  std::vector<SelectedCell> rest;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (static_cast<int>(i) == center) continue;
    rest.push_back({cells[i].first, cells[i].second, scores[i],
                    static_cast<int>(i)});
  }
  const auto [ca, cb] = cells[center];
  std::stable_sort(rest.begin(), rest.end(),
                   [&](const SelectedCell& x, const SelectedCell& y) {
                     const double ix = interval_iou(x.a, x.b + 1, ca, cb + 1);
                     const double iy = interval_iou(y.a, y.b + 1, ca, cb + 1);
                     if (ix != iy) return ix > iy;
                     if (x.score != y.score) return x.score > y.score;
                     return x.pos < y.pos;
                   });
  std::vector<SelectedCell> out;
  out.push_back({ca, cb, scores[center], center});
  for (int i = 0; i + 1 < count && i < static_cast<int>(rest.size()); ++i)
    out.push_back(rest[i]);
  return out;
}

struct Box {
  double start, end, score;
};

inline std::vector<Box> nms(std::vector<Box> boxes, double threshold) {
  std::vector<Box> kept;
  while (!boxes.empty()) {
    size_t best = 0;
    for (size_t i = 1; i < boxes.size(); ++i) {
      const Box& x = boxes[i];
      const Box& y = boxes[best];
      if (x.score > y.score ||
          (x.score == y.score &&
           (x.start < y.start || (x.start == y.start && x.end < y.end))))
        best = i;
    }
    const Box top = boxes[best];
    kept.push_back(top);
    std::vector<Box> next;
    for (size_t i = 0; i < boxes.size(); ++i) {
      if (i == best) continue;
      if (interval_iou(boxes[i].start, boxes[i].end, top.start, top.end) <=
          threshold)
        next.push_back(boxes[i]);
    }
    boxes = std::move(next);
  }
  return kept;
}

struct EvalSample {
  std::vector<Box> ranked;  // descending score
  double gt_start, gt_end;
};

inline double recall_at(const std::vector<EvalSample>& samples, int n,
                        double m) {
  int hits = 0;
  for (const auto& s : samples) {
    bool hit = false;
    for (int i = 0; i < n && i < static_cast<int>(s.ranked.size()); ++i)
      if (interval_iou(s.ranked[i].start, s.ranked[i].end, s.gt_start,
                       s.gt_end) > m)
        hit = true;
    if (hit) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

inline double mean_iou(const std::vector<EvalSample>& samples) {
  double total = 0.0;
  for (const auto& s : samples)
    if (!s.ranked.empty())
      total += interval_iou(s.ranked[0].start, s.ranked[0].end, s.gt_start,
                            s.gt_end);
  return total / static_cast<double>(samples.size());
}

inline std::pair<double, double> rank_metrics(
    const std::vector<EvalSample>& samples) {
  int r1 = 0, r5 = 0;
  for (const auto& s : samples) {
    int rank = -1;
    for (size_t i = 0; i < s.ranked.size(); ++i) {
      if (std::abs(s.ranked[i].start - s.gt_start) < 1e-9 &&
          std::abs(s.ranked[i].end - s.gt_end) < 1e-9) {
        rank = static_cast<int>(i);
        break;
      }
    }
    if (rank == 0) ++r1;
    if (rank >= 0 && rank < 5) ++r5;
  }
  return {static_cast<double>(r1) / samples.size(),
          static_cast<double>(r5) / samples.size()};
}

}  // namespace oracle

#endif  // RTPEN_TESTS_ORACLES_HPP
