#ifndef RTPEN_BRANCH_HPP
#define RTPEN_BRANCH_HPP

#include <utility>
#include <vector>

#include "rtpen/data_model.hpp"
#include "rtpen/evaluation.hpp"
#include "rtpen/model.hpp"
#include "rtpen/tape.hpp"

namespace rtpen {

struct CandidateGrid {
  int n_v = 0;
  std::vector<std::pair<int, int>> valid_cells;  // lexicographic (a,b)

  int cell_index(int a, int b) const;  // -1 if not a valid cell
  int flat(int a, int b) const { return a * n_v + b; }
};

// Valid (a,b) cells under the profile's sparse-sampling rule. The didemo
// rule expects exactly six segments.
CandidateGrid build_candidate_grid(int n_v, const DatasetProfile& profile);

struct ProposalKind {
  enum Kind { kPositive, kNegative };
};

struct Proposal {
  int a = 0;
  int b = 0;
  double score = 0.0;
  int grid_pos = 0;  // index into CandidateGrid::valid_cells
};

struct ProposalSet {
  std::vector<Proposal> proposals;  // center first, then IoU-ranked picks
  ProposalKind::Kind kind = ProposalKind::kPositive;
};

struct AttentionResult {
  ad::Var raw;        // delta: [n_v, n_q]
  ad::Var row_soft;   // row-softmax over words
  ad::Var aggregated; // s_i = sum_j softmax(delta)_ij q_j: [n_v, d_q]
};

// Frame-to-word attention (raw scores plus row-normalized aggregation).
AttentionResult frame_to_word_attention(ad::Tape& tape, ad::Var video_stream,
                                        ad::Var query,
                                        const BranchParamIds& ids,
                                        const Model& model);

// Bidirectional gated-recurrent encoding of [v_i ; s_i]; output [n_v, d_m].
ad::Var fuse_sequence(ad::Tape& tape, ad::Var video_stream, ad::Var aggregated,
                      const BranchParamIds& ids, const Model& model);

// F[a,b,:] = sum of fused rows a..b at valid cells, zero elsewhere.
// Returned matrix is [n_v * n_v, d_m] with row index a*n_v + b.
ad::Var build_moment_map(ad::Tape& tape, ad::Var fused,
                         const CandidateGrid& grid);

// Two same-padded conv layers with a rectifier between, then a sigmoid
// readout at valid cells. Returns scores aligned with grid.valid_cells.
ad::Var score_moments(ad::Tape& tape, ad::Var moment_map,
                      const CandidateGrid& grid, const BranchParamIds& ids,
                      const Model& model);

// Highest score becomes the center (ties: smallest (a,b)); the remaining
// cells rank by IoU with the center, ties by score then (a,b).
ProposalSet select_center_based(const std::vector<double>& scores,
                                const CandidateGrid& grid, int proposal_count,
                                ProposalKind::Kind kind);

struct BranchResult {
  ProposalSet proposals;
  ad::Var cell_scores;  // [M_en, 1] aligned with grid.valid_cells
  AttentionResult attention;
  ad::Var fused;        // [n_v, d_m]
};

BranchResult run_branch(ad::Tape& tape, ad::Var video_stream, ad::Var query,
                        const BranchParamIds& ids, const Model& model,
                        const CandidateGrid& grid, int proposal_count,
                        ProposalKind::Kind kind);

}  // namespace rtpen

#endif  // RTPEN_BRANCH_HPP
