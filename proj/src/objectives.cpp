#include "rtpen/objectives.hpp"

#include "rtpen/errors.hpp"

namespace rtpen {

using ad::Tape;
using ad::Var;

Var intra_loss(Tape& tape, Var k_enhanced, Var k_suppressed, double margin) {
  Var diff = tape.sub(k_suppressed, k_enhanced);
  return tape.relu(tape.affine_const(diff, 1.0, margin));
}

Var inter_loss(Tape& tape, Var k_enhanced, Var k_neg_video, Var k_neg_query,
               double margin) {
  Var hv = tape.relu(tape.affine_const(tape.sub(k_neg_video, k_enhanced), 1.0,
                                       margin));
  Var hq = tape.relu(tape.affine_const(tape.sub(k_neg_query, k_enhanced), 1.0,
                                       margin));
  return tape.add(hv, hq);
}

Var global_reg(Tape& tape, Var all_cell_scores) {
  return tape.mean_all(all_cell_scores);
}

Var gap_reg(Tape& tape, Var selected_scores) {
  Var row = tape.transpose(selected_scores);  // [1, T]
  Var probs = tape.softmax_rows(row);
  Var ent = tape.neg(tape.sum_all(tape.cmul(probs, tape.log_(probs))));
  return ent;
}

Var total_loss(Tape& tape, Var intra, Var inter, Var erase, Var global,
               Var gap, const LossWeights& weights) {
  if (weights.intra < 0 || weights.inter < 0 || weights.erase < 0 ||
      weights.global < 0 || weights.gap < 0)
    throw ConfigError("loss weights must be non-negative");
  Var total = tape.scale(intra, weights.intra);
  total = tape.add(total, tape.scale(inter, weights.inter));
  total = tape.add(total, tape.scale(erase, weights.erase));
  total = tape.add(total, tape.scale(global, weights.global));
  total = tape.add(total, tape.scale(gap, weights.gap));
  return total;
}

LossBundle make_bundle(double intra, double inter, double erase, double global,
                       double gap, const LossWeights& weights) {
  if (weights.intra < 0 || weights.inter < 0 || weights.erase < 0 ||
      weights.global < 0 || weights.gap < 0)
    throw ConfigError("loss weights must be non-negative");
  LossBundle b;
  b.intra = intra;
  b.inter = inter;
  b.erase = erase;
  b.global = global;
  b.gap = gap;
  b.weights = weights;
  b.total = weights.intra * intra + weights.inter * inter +
            weights.erase * erase + weights.global * global +
            weights.gap * gap;
  return b;
}

std::pair<int, int> sample_negative_indices(const DatasetManifest& manifest,
                                            int current_entry, Rng& rng) {
  const std::string& current_id =
      manifest.entries[static_cast<size_t>(current_entry)].video_id;
  std::vector<int> eligible;
  eligible.reserve(manifest.entries.size());
  for (size_t i = 0; i < manifest.entries.size(); ++i)
    if (manifest.entries[i].video_id != current_id)
      eligible.push_back(static_cast<int>(i));
  if (eligible.empty())
    throw SamplingError("no entry with a different video id to sample from");
  const int neg_video = eligible[rng.uniform_index(eligible.size())];
  const int neg_query = eligible[rng.uniform_index(eligible.size())];
  return {neg_video, neg_query};
}

}  // namespace rtpen
