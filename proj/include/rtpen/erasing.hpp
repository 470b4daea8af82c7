#ifndef RTPEN_ERASING_HPP
#define RTPEN_ERASING_HPP

#include <vector>

#include "rtpen/branch.hpp"
#include "rtpen/data_model.hpp"
#include "rtpen/model.hpp"

namespace rtpen {

struct ErasePlan {
  std::vector<int> erased_indices;  // the n_e most dominant word positions
  TokenizedQuery erased_query;      // masked rows carry the unknown embedding
  double erase_rate = 0.0;
};

// Per-word dominance: raw attention summed over frames.
std::vector<double> word_dominance(const Mat& raw_attention);

// n_e = max(1, round(E * n_q)), round half away from zero; dominance ties
// break toward the smaller index. Callers must skip erasing when E <= 0.
ErasePlan erase_top_words(const TokenizedQuery& query,
                          const std::vector<double>& dominance,
                          double erase_rate);

// Column-softmax over frames, then per-word aggregation of the given
// stream rows: [n_q, cols(stream)].
ad::Var word_to_frame_attention(ad::Tape& tape, ad::Var raw_attention,
                                ad::Var stream);

// Mean over erased words of (1 - cos(W^e s_j, q_j)) / 2.
ad::Var reconstruction_loss(ad::Tape& tape, ad::Var word_visual,
                            ad::Var original_query,
                            const std::vector<int>& erased_indices,
                            const EraseParamIds& ids, const Model& model);

// Per-cell convex combination w^c * primary + (1 - w^c) * erased.
ad::Var fuse_proposal_scores(ad::Tape& tape, ad::Var primary, ad::Var erased,
                             const EraseParamIds& ids, const Model& model);

struct ErasedForward {
  ErasePlan plan;
  ad::Var cell_scores;      // same cell order as the primary pass
  ad::Var raw_attention;    // delta*: [n_v, n_q]
  ad::Var fused_features;   // M*: [n_v, d_m]
  ad::Var erase_loss;       // scalar
};

// Re-filters the enhanced stream with the erased query, runs the shared
// branch over the same grid, and builds the reconstruction loss.
ErasedForward erased_forward(ad::Tape& tape, ad::Var enhanced_stream,
                             ad::Var original_query,
                             const TokenizedQuery& query,
                             const std::vector<double>& dominance,
                             double erase_rate, const Model& model,
                             const CandidateGrid& grid);

}  // namespace rtpen

#endif  // RTPEN_ERASING_HPP
