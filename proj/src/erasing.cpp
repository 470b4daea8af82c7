#include "rtpen/erasing.hpp"

#include <algorithm>
#include <cmath>

#include "rtpen/errors.hpp"
#include "rtpen/filter.hpp"

namespace rtpen {

using ad::Tape;
using ad::Var;

std::vector<double> word_dominance(const Mat& raw_attention) {
  std::vector<double> dom(static_cast<size_t>(raw_attention.cols()));
  for (Eigen::Index j = 0; j < raw_attention.cols(); ++j)
    dom[static_cast<size_t>(j)] = raw_attention.col(j).sum();
  return dom;
}

ErasePlan erase_top_words(const TokenizedQuery& query,
                          const std::vector<double>& dominance,
                          double erase_rate) {
  if (!(erase_rate > 0.0 && erase_rate <= 1.0))
    throw ArgumentError("erase rate must lie in (0,1]; skip erasing for E<=0");
  const int n_q = static_cast<int>(query.token_ids.size());
  if (static_cast<int>(dominance.size()) != n_q)
    throw AlignmentError("dominance length does not match query length");

  const int n_e = std::max(
      1, static_cast<int>(std::llround(erase_rate * static_cast<double>(n_q))));

  std::vector<int> order(static_cast<size_t>(n_q));
  for (int i = 0; i < n_q; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    const double dx = dominance[static_cast<size_t>(x)];
    const double dy = dominance[static_cast<size_t>(y)];
    if (dx != dy) return dx > dy;
    return x < y;  // dominance tie: smaller index erased first
  });

  if (query.unknown_token_embedding.size() != query.embeddings.cols())
    throw DimensionError("query lacks an unknown-token embedding");
  ErasePlan plan;
  plan.erase_rate = erase_rate;
  plan.erased_indices.assign(order.begin(), order.begin() + n_e);
  std::sort(plan.erased_indices.begin(), plan.erased_indices.end());
  plan.erased_query = query;
  for (const int idx : plan.erased_indices)
    plan.erased_query.embeddings.row(idx) = query.unknown_token_embedding;
  return plan;
}

Var word_to_frame_attention(Tape& tape, Var raw_attention, Var stream) {
  if (tape.val(raw_attention).rows() != tape.val(stream).rows())
    throw DimensionError("attention rows must match stream rows");
  Var col_soft = tape.softmax_cols(raw_attention);       // [n_v, n_q]
  return tape.matmul(col_soft, stream, true, false);     // [n_q, d]
}

Var reconstruction_loss(Tape& tape, Var word_visual, Var original_query,
                        const std::vector<int>& erased_indices,
                        const EraseParamIds& ids, const Model& model) {
  if (erased_indices.empty())
    throw ArgumentError("reconstruction loss needs erased indices");
  Var recon_w = tape.param(ids.recon_w, model.store.value(ids.recon_w));
  Var projected = tape.matmul(word_visual, recon_w, false, true);  // [n_q, d_q]
  std::vector<Var> terms;
  terms.reserve(erased_indices.size());
  for (const int j : erased_indices) {
    Var cos = tape.cosine(tape.gather_rows(projected, {j}),
                          tape.gather_rows(original_query, {j}));
    terms.push_back(tape.affine_const(cos, -0.5, 0.5));  // (1 - cos) / 2
  }
  Var sum = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) sum = tape.add(sum, terms[i]);
  return tape.scale(sum, 1.0 / static_cast<double>(terms.size()));
}

Var fuse_proposal_scores(Tape& tape, Var primary, Var erased,
                         const EraseParamIds& ids, const Model& model) {
  if (tape.val(primary).rows() != tape.val(erased).rows() ||
      tape.val(primary).cols() != tape.val(erased).cols())
    throw AlignmentError("fused score cell sets differ");
  Var logit = tape.param(ids.fusion_logit, model.store.value(ids.fusion_logit));
  Var w = tape.sigmoid_(logit);  // in (0,1): keeps the fusion convex
  return tape.add(tape.scale_by_scalar(primary, w),
                  tape.scale_by_scalar(erased, tape.one_minus(w)));
}

ErasedForward erased_forward(Tape& tape, Var enhanced_stream,
                             Var original_query, const TokenizedQuery& query,
                             const std::vector<double>& dominance,
                             double erase_rate, const Model& model,
                             const CandidateGrid& grid) {
  ErasedForward out;
  out.plan = erase_top_words(query, dominance, erase_rate);

  // Erased query on the tape: gradient reaches the unknown embedding.
  Var unknown = tape.param(model.unknown_token,
                           model.store.value(model.unknown_token));
  Var erased_query =
      tape.row_replace(original_query, unknown, out.plan.erased_indices);

  FilterOutput refiltered =
      run_filter(tape, enhanced_stream, erased_query, model);
  BranchResult branch =
      run_branch(tape, refiltered.enhanced, erased_query, model.branch, model,
                 grid, /*proposal_count=*/1, ProposalKind::kPositive);
  out.cell_scores = branch.cell_scores;
  out.raw_attention = branch.attention.raw;
  out.fused_features = branch.fused;

  Var word_visual =
      word_to_frame_attention(tape, branch.attention.raw, branch.fused);
  out.erase_loss = reconstruction_loss(tape, word_visual, original_query,
                                       out.plan.erased_indices, model.erase,
                                       model);
  return out;
}

}  // namespace rtpen
