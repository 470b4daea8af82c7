#ifndef RTPEN_FILTER_HPP
#define RTPEN_FILTER_HPP

#include "rtpen/model.hpp"
#include "rtpen/tape.hpp"

namespace rtpen {

// Language-aware visual filter. Scene-level query aggregation scores each
// frame against the query and splits the stream into an enhanced and a
// suppressed part that sum back to the input.
struct FilterOutput {
  ad::Var scene_features;     // U: [n_c, d_q]
  ad::Var score_matrix;       // beta: [n_v, n_c], entries in (0,1)
  ad::Var normalized_scores;  // beta~: [n_v, 1] in [0,1]
  ad::Var enhanced;           // [n_v, d_v]
  ad::Var suppressed;         // [n_v, d_v]
};

// Soft-assignment residual aggregation against trainable centers.
// assignments: softmax over centers of (W^c q_i + b^c); u_j accumulates
// alpha_ij (q_i - c_j).
ad::Var vlad_aggregate(ad::Tape& tape, ad::Var query,
                       const FilterParamIds& ids, const Model& model);

// beta_ij = sigmoid(w_a' tanh(W1 v_i + W2 u_j + b)).
ad::Var scene_frame_scores(ad::Tape& tape, ad::Var video, ad::Var scenes,
                           const FilterParamIds& ids, const Model& model);

// Per-frame max over scenes followed by min-max normalization; a constant
// distribution maps to 0.5 everywhere.
ad::Var normalize_scores(ad::Tape& tape, ad::Var score_matrix);

// enhanced_i = beta~_i v_i, suppressed_i = (1 - beta~_i) v_i.
std::pair<ad::Var, ad::Var> gate_streams(ad::Tape& tape, ad::Var video,
                                         ad::Var normalized);

FilterOutput run_filter(ad::Tape& tape, ad::Var video, ad::Var query,
                        const Model& model);

}  // namespace rtpen

#endif  // RTPEN_FILTER_HPP
