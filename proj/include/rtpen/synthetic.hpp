#ifndef RTPEN_SYNTHETIC_HPP
#define RTPEN_SYNTHETIC_HPP

#include <filesystem>
#include <string>

#include "rtpen/branch.hpp"
#include "rtpen/data_model.hpp"

namespace rtpen {

struct SyntheticConfig {
  int num_train = 2000;
  int num_val = 200;
  int num_test = 500;
  int n_v = 32;
  int d_v = 64;
  int d_q = 32;
  int vocab_size = 200;
  int concepts_min = 2;
  int concepts_max = 3;
  int fillers_min = 2;
  int fillers_max = 4;
  double span_frac_min = 0.2;
  double span_frac_max = 0.45;
  double signal_to_noise = 1.0;
  uint64_t seed = 7;
  SamplingRule rule{SamplingRule::Kind::kAllPairs, 1};
  int conv_kernel = 3;
  int proposal_count_T = 16;
  double nms_threshold = 0.55;
  int max_seq = 25;
  std::filesystem::path out_dir;
};

// Writes the embedding table, vocab list, per-sample feature files and a
// manifest per split. Ground-truth spans are recorded in the manifest for
// evaluation only. Deterministic: the same config yields identical bytes.
void generate_dataset(const SyntheticConfig& config);

struct BaselineEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Monte-Carlo R@1 IoU=m of a predictor that picks a uniform random valid
// cell; gts are drawn uniformly per trial.
BaselineEstimate random_baseline(const CandidateGrid& grid,
                                 const std::vector<Span>& gt_spans, double m,
                                 int trials, uint64_t seed,
                                 double seconds_per_index);

}  // namespace rtpen

#endif  // RTPEN_SYNTHETIC_HPP
