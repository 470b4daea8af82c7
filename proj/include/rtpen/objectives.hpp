#ifndef RTPEN_OBJECTIVES_HPP
#define RTPEN_OBJECTIVES_HPP

#include <utility>

#include "rtpen/data_model.hpp"
#include "rtpen/rng.hpp"
#include "rtpen/tape.hpp"

namespace rtpen {

struct LossWeights {
  double intra = 0.1;
  double inter = 1.0;
  double erase = 0.1;
  double global = 0.01;
  double gap = 0.01;
};

struct Margins {
  double intra = 0.4;
  double inter = 0.6;
};

struct LossBundle {
  double intra = 0.0;
  double inter = 0.0;
  double erase = 0.0;
  double global = 0.0;
  double gap = 0.0;
  LossWeights weights;
  double total = 0.0;
};

// max(0, margin - K_en + K_sp)
ad::Var intra_loss(ad::Tape& tape, ad::Var k_enhanced, ad::Var k_suppressed,
                   double margin);

// max(0, margin - K_en + K_neg_video) + max(0, margin - K_en + K_neg_query)
ad::Var inter_loss(ad::Tape& tape, ad::Var k_enhanced, ad::Var k_neg_video,
                   ad::Var k_neg_query, double margin);

// Mean fused score over every valid cell.
ad::Var global_reg(ad::Tape& tape, ad::Var all_cell_scores);

// Entropy of the softmaxed selected-proposal scores; in [0, ln T].
ad::Var gap_reg(ad::Tape& tape, ad::Var selected_scores);

ad::Var total_loss(ad::Tape& tape, ad::Var intra, ad::Var inter, ad::Var erase,
                   ad::Var global, ad::Var gap, const LossWeights& weights);

LossBundle make_bundle(double intra, double inter, double erase, double global,
                       double gap, const LossWeights& weights);

// Uniformly picks a negative-video entry and a negative-query entry whose
// video ids differ from the current sample's.
std::pair<int, int> sample_negative_indices(const DatasetManifest& manifest,
                                            int current_entry, Rng& rng);

}  // namespace rtpen

#endif  // RTPEN_OBJECTIVES_HPP
