#include "rtpen/filter.hpp"

#include "rtpen/errors.hpp"

namespace rtpen {

using ad::Tape;
using ad::Var;

Var vlad_aggregate(Tape& tape, Var query, const FilterParamIds& ids,
                   const Model& model) {
  const Mat& q = tape.val(query);
  if (!q.allFinite()) throw NumericalError("non-finite query features");
  Var assign_w = tape.param(ids.assign_w, model.store.value(ids.assign_w));
  Var assign_b = tape.param(ids.assign_b, model.store.value(ids.assign_b));
  Var centers = tape.param(ids.centers, model.store.value(ids.centers));

  // alpha: [n_q, n_c], rows sum to 1
  Var logits = tape.add_rowvec(tape.matmul(query, assign_w, false, true),
                               assign_b);
  Var alpha = tape.softmax_rows(logits);
  // u_j = sum_i alpha_ij q_i - (sum_i alpha_ij) c_j
  Var weighted_q = tape.matmul(alpha, query, true, false);     // [n_c, d_q]
  Var alpha_sums = tape.transpose(tape.col_sums(alpha));       // [n_c, 1]
  Var centered = tape.row_scale(centers, alpha_sums);
  return tape.sub(weighted_q, centered);
}

Var scene_frame_scores(Tape& tape, Var video, Var scenes,
                       const FilterParamIds& ids, const Model& model) {
  Var w1 = tape.param(ids.score_w1, model.store.value(ids.score_w1));
  Var w2 = tape.param(ids.score_w2, model.store.value(ids.score_w2));
  Var b = tape.param(ids.score_b, model.store.value(ids.score_b));
  Var v = tape.param(ids.score_v, model.store.value(ids.score_v));
  Var a = tape.matmul(video, w1, false, true);   // [n_v, d_h]
  Var u = tape.matmul(scenes, w2, false, true);  // [n_c, d_h]
  return tape.sigmoid_(tape.attn_scores(a, u, b, v));
}

Var normalize_scores(Tape& tape, Var score_matrix) {
  return tape.minmax_norm(tape.row_max(score_matrix));
}

std::pair<Var, Var> gate_streams(Tape& tape, Var video, Var normalized) {
  Var enhanced = tape.row_scale(video, normalized);
  Var suppressed = tape.row_scale(video, tape.one_minus(normalized));
  return {enhanced, suppressed};
}

FilterOutput run_filter(Tape& tape, Var video, Var query, const Model& model) {
  FilterOutput out;
  out.scene_features = vlad_aggregate(tape, query, model.filter, model);
  out.score_matrix =
      scene_frame_scores(tape, video, out.scene_features, model.filter, model);
  out.normalized_scores = normalize_scores(tape, out.score_matrix);
  auto [enhanced, suppressed] = gate_streams(tape, video, out.normalized_scores);
  out.enhanced = enhanced;
  out.suppressed = suppressed;
  return out;
}

}  // namespace rtpen
