#include "rtpen/branch.hpp"

#include <algorithm>

#include "rtpen/errors.hpp"

namespace rtpen {

using ad::Tape;
using ad::Var;

int CandidateGrid::cell_index(int a, int b) const {
  const auto it = std::lower_bound(valid_cells.begin(), valid_cells.end(),
                                   std::make_pair(a, b));
  if (it == valid_cells.end() || *it != std::make_pair(a, b)) return -1;
  return static_cast<int>(it - valid_cells.begin());
}

CandidateGrid build_candidate_grid(int n_v, const DatasetProfile& profile) {
  if (n_v < 1) throw ArgumentError("n_v must be >= 1");
  if (profile.sampling_rule.kind == SamplingRule::Kind::kDidemo && n_v != 6)
    throw EmptyGridError("didemo rule expects exactly 6 segments, got n_v=" +
                         std::to_string(n_v));
  CandidateGrid grid;
  grid.n_v = n_v;
  for (int a = 0; a < n_v; ++a)
    for (int b = a; b < n_v; ++b)
      if (profile.sampling_rule.admits(a, b)) grid.valid_cells.emplace_back(a, b);
  if (grid.valid_cells.empty())
    throw EmptyGridError("no valid cells for n_v=" + std::to_string(n_v) +
                         " under rule " + to_string(profile.sampling_rule));
  return grid;
}

AttentionResult frame_to_word_attention(Tape& tape, Var video_stream,
                                        Var query, const BranchParamIds& ids,
                                        const Model& model) {
  Var w1 = tape.param(ids.attn_w1, model.store.value(ids.attn_w1));
  Var w2 = tape.param(ids.attn_w2, model.store.value(ids.attn_w2));
  Var b = tape.param(ids.attn_b, model.store.value(ids.attn_b));
  Var v = tape.param(ids.attn_v, model.store.value(ids.attn_v));
  AttentionResult out;
  Var a = tape.matmul(video_stream, w1, false, true);  // [n_v, d_h]
  Var u = tape.matmul(query, w2, false, true);         // [n_q, d_h]
  out.raw = tape.attn_scores(a, u, b, v);              // [n_v, n_q]
  out.row_soft = tape.softmax_rows(out.raw);
  out.aggregated = tape.matmul(out.row_soft, query);   // [n_v, d_q]
  return out;
}

namespace {

struct GruPrecomputed {
  Var xz, xr, xh;  // per-step input contributions incl. bias: [n, h]
  Var uz, ur, uh;  // recurrent weights
};

GruPrecomputed gru_inputs(Tape& tape, Var x, const GruDirectionIds& ids,
                          const Model& model) {
  GruPrecomputed p;
  Var wz = tape.param(ids.w_update, model.store.value(ids.w_update));
  Var wr = tape.param(ids.w_reset, model.store.value(ids.w_reset));
  Var wh = tape.param(ids.w_cand, model.store.value(ids.w_cand));
  Var bz = tape.param(ids.b_update, model.store.value(ids.b_update));
  Var br = tape.param(ids.b_reset, model.store.value(ids.b_reset));
  Var bh = tape.param(ids.b_cand, model.store.value(ids.b_cand));
  p.xz = tape.add_rowvec(tape.matmul(x, wz, false, true), bz);
  p.xr = tape.add_rowvec(tape.matmul(x, wr, false, true), br);
  p.xh = tape.add_rowvec(tape.matmul(x, wh, false, true), bh);
  p.uz = tape.param(ids.u_update, model.store.value(ids.u_update));
  p.ur = tape.param(ids.u_reset, model.store.value(ids.u_reset));
  p.uh = tape.param(ids.u_cand, model.store.value(ids.u_cand));
  return p;
}

// h_t = (1 - z_t) h_{t-1} + z_t tanh(Wx_t + U (r_t . h_{t-1}) + b)
std::vector<Var> gru_direction(Tape& tape, const GruPrecomputed& p,
                               const std::vector<int>& order, int hidden) {
  std::vector<Var> states(order.size());
  Var h = tape.input(Mat::Zero(1, hidden));
  for (size_t step = 0; step < order.size(); ++step) {
    const int t = order[step];
    Var z = tape.sigmoid_(tape.add(tape.gather_rows(p.xz, {t}),
                                   tape.matmul(h, p.uz, false, true)));
    Var r = tape.sigmoid_(tape.add(tape.gather_rows(p.xr, {t}),
                                   tape.matmul(h, p.ur, false, true)));
    Var cand = tape.tanh_(
        tape.add(tape.gather_rows(p.xh, {t}),
                 tape.matmul(tape.cmul(r, h), p.uh, false, true)));
    h = tape.add(tape.cmul(tape.one_minus(z), h), tape.cmul(z, cand));
    states[static_cast<size_t>(t)] = h;
  }
  return states;
}

}  // namespace

Var fuse_sequence(Tape& tape, Var video_stream, Var aggregated,
                  const BranchParamIds& ids, const Model& model) {
  Var x = tape.concat_cols(video_stream, aggregated);
  const int n = static_cast<int>(tape.val(x).rows());
  const int hidden = model.dims.gru_hidden;

  std::vector<int> forward_order(n), backward_order(n);
  for (int t = 0; t < n; ++t) {
    forward_order[static_cast<size_t>(t)] = t;
    backward_order[static_cast<size_t>(t)] = n - 1 - t;
  }
  GruPrecomputed pf = gru_inputs(tape, x, ids.gru_fwd, model);
  GruPrecomputed pb = gru_inputs(tape, x, ids.gru_bwd, model);
  std::vector<Var> fwd = gru_direction(tape, pf, forward_order, hidden);
  std::vector<Var> bwd = gru_direction(tape, pb, backward_order, hidden);

  std::vector<Var> rows(static_cast<size_t>(n));
  for (int t = 0; t < n; ++t)
    rows[static_cast<size_t>(t)] =
        tape.concat_cols(fwd[static_cast<size_t>(t)], bwd[static_cast<size_t>(t)]);
  return tape.stack_rows(rows);
}

Var build_moment_map(Tape& tape, Var fused, const CandidateGrid& grid) {
  return tape.moment_map(fused, grid.valid_cells, grid.n_v);
}

Var score_moments(Tape& tape, Var moment_map, const CandidateGrid& grid,
                  const BranchParamIds& ids, const Model& model) {
  const int n_v = grid.n_v;
  const int ksize = model.dims.conv_kernel;
  const int reach = (ksize - 1) / 2;

  // conv2 is only read at valid cells; conv1 must therefore cover every
  // map position within one kernel reach of a valid cell.
  std::vector<int> valid_rows;
  valid_rows.reserve(grid.valid_cells.size());
  std::vector<char> needed(static_cast<size_t>(n_v) * n_v, 0);
  for (const auto& [a, b] : grid.valid_cells) {
    valid_rows.push_back(grid.flat(a, b));
    for (int dy = -reach; dy <= reach; ++dy) {
      const int y = a + dy;
      if (y < 0 || y >= n_v) continue;
      for (int dx = -reach; dx <= reach; ++dx) {
        const int x = b + dx;
        if (x < 0 || x >= n_v) continue;
        needed[static_cast<size_t>(y) * n_v + x] = 1;
      }
    }
  }
  std::vector<int> dilated_rows;
  for (int i = 0; i < n_v * n_v; ++i)
    if (needed[static_cast<size_t>(i)]) dilated_rows.push_back(i);

  Var k1 = tape.param(ids.conv1_kernel, model.store.value(ids.conv1_kernel));
  Var b1 = tape.param(ids.conv1_bias, model.store.value(ids.conv1_bias));
  Var k2 = tape.param(ids.conv2_kernel, model.store.value(ids.conv2_kernel));
  Var b2 = tape.param(ids.conv2_bias, model.store.value(ids.conv2_bias));
  Var h1 = tape.relu(
      tape.conv2d_same(moment_map, k1, b1, n_v, n_v, ksize, dilated_rows));
  Var h2 = tape.conv2d_same(h1, k2, b2, n_v, n_v, ksize, valid_rows);

  Var features = tape.gather_rows(h2, valid_rows);  // [M_en, C]
  Var w = tape.param(ids.score_w, model.store.value(ids.score_w));
  Var bias = tape.param(ids.score_b, model.store.value(ids.score_b));
  Var logits = tape.add_rowvec(tape.matmul(features, w), bias);
  return tape.sigmoid_(logits);  // [M_en, 1]
}

ProposalSet select_center_based(const std::vector<double>& scores,
                                const CandidateGrid& grid, int proposal_count,
                                ProposalKind::Kind kind) {
  if (scores.size() != grid.valid_cells.size())
    throw AlignmentError("scores do not align with grid cells");
  if (scores.empty()) throw EmptyGridError("no cells to select from");

  int center = 0;  // ties fall to the lexicographically smallest cell
  for (size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[static_cast<size_t>(center)])
      center = static_cast<int>(i);

  const auto [ca, cb] = grid.valid_cells[static_cast<size_t>(center)];
  const Span center_span{static_cast<double>(ca), static_cast<double>(cb + 1)};

  struct Ranked {
    double iou;
    double score;
    int pos;
  };
  std::vector<Ranked> rest;
  rest.reserve(scores.size() - 1);
  for (size_t i = 0; i < scores.size(); ++i) {
    if (static_cast<int>(i) == center) continue;
    const auto [a, b] = grid.valid_cells[i];
    rest.push_back({temporal_iou({static_cast<double>(a),
                                  static_cast<double>(b + 1)},
                                 center_span),
                    scores[i], static_cast<int>(i)});
  }
  std::sort(rest.begin(), rest.end(), [](const Ranked& x, const Ranked& y) {
    if (x.iou != y.iou) return x.iou > y.iou;
    if (x.score != y.score) return x.score > y.score;
    return x.pos < y.pos;  // valid_cells are lexicographically ordered
  });

  ProposalSet out;
  out.kind = kind;
  out.proposals.push_back(
      {ca, cb, scores[static_cast<size_t>(center)], center});
  const int keep = std::min<int>(proposal_count - 1,
                                 static_cast<int>(rest.size()));
  for (int i = 0; i < keep; ++i) {
    const auto& r = rest[static_cast<size_t>(i)];
    const auto [a, b] = grid.valid_cells[static_cast<size_t>(r.pos)];
    out.proposals.push_back({a, b, r.score, r.pos});
  }
  return out;
}

BranchResult run_branch(Tape& tape, Var video_stream, Var query,
                        const BranchParamIds& ids, const Model& model,
                        const CandidateGrid& grid, int proposal_count,
                        ProposalKind::Kind kind) {
  BranchResult out;
  out.attention = frame_to_word_attention(tape, video_stream, query, ids, model);
  out.fused = fuse_sequence(tape, video_stream, out.attention.aggregated, ids,
                            model);
  Var map = build_moment_map(tape, out.fused, grid);
  out.cell_scores = score_moments(tape, map, grid, ids, model);
  const Mat& s = tape.val(out.cell_scores);
  std::vector<double> score_values(static_cast<size_t>(s.rows()));
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    score_values[static_cast<size_t>(i)] = s(i, 0);
  out.proposals = select_center_based(score_values, grid, proposal_count, kind);
  return out;
}

}  // namespace rtpen
