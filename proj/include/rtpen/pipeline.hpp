#ifndef RTPEN_PIPELINE_HPP
#define RTPEN_PIPELINE_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rtpen/branch.hpp"
#include "rtpen/data_model.hpp"
#include "rtpen/erasing.hpp"
#include "rtpen/evaluation.hpp"
#include "rtpen/model.hpp"
#include "rtpen/objectives.hpp"
#include "rtpen/synthetic.hpp"

namespace rtpen {

struct TrainConfig {
  std::string profile = "synthetic";
  std::filesystem::path train_manifest;
  std::filesystem::path val_manifest;
  std::filesystem::path test_manifest;
  std::filesystem::path embeddings;
  std::filesystem::path vocab;
  std::filesystem::path out_dir = "runs/rtpen";

  int d_v = 0;
  int d_q = 0;
  int d_h = 512;
  int n_c = 8;
  int gru_hidden = 256;
  int conv_channels = 512;
  int proposal_count_T = 0;  // 0: take the profile's T

  double erase_rate = 0.2;
  bool erasing_enabled = true;
  bool filter_enabled = true;
  bool share_parameters = true;

  LossWeights lambdas;
  Margins margins;
  double learning_rate = 1e-4;
  double weight_decay = 1e-7;
  int batch_size = 8;
  int epochs = 20;
  uint64_t seed = 1;
  std::string negative_sampling = "dataset";  // or "batch"
  int threads = 2;
};

// Flat key=value text; later keys win. '#' starts a comment line.
std::map<std::string, std::string> parse_config_file(
    const std::filesystem::path& path);
TrainConfig train_config_from(const std::map<std::string, std::string>& kv);
SyntheticConfig synthetic_config_from(
    const std::map<std::string, std::string>& kv);
// File values, then overrides ("key=value" strings), then RTPEN_SEED.
TrainConfig load_train_config(const std::filesystem::path& path,
                              const std::vector<std::string>& overrides);
SyntheticConfig load_synthetic_config(const std::filesystem::path& path,
                                      const std::vector<std::string>& overrides);
std::string train_config_text(const TrainConfig& config);

struct ForwardOptions {
  bool train_mode = true;
  double erase_rate = 0.2;
  bool erasing_enabled = true;
  bool filter_enabled = true;
};

// The enhanced path shared by positive and negative samples: filter,
// primary branch, optional erasing refinement, center-based selection.
struct EnhancedPath {
  CandidateGrid grid;
  ad::Var query_leaf;
  ad::Var enhanced_stream;
  BranchResult primary;
  ad::Var fused_scores;  // [M_en,1]; equals primary scores without erasing
  ProposalSet selection; // selected on primary scores
  ad::Var k_enhanced;    // sum of fused scores over the selection
  bool has_erase = false;
  ErasedForward erased;  // valid when has_erase
};

// When suppressed_stream_out is given and the filter is enabled, the same
// filter pass also yields the suppressed stream.
EnhancedPath run_enhanced_path(ad::Tape& tape, const TrainView& view,
                               const Model& model,
                               const DatasetProfile& profile,
                               const ForwardOptions& options,
                               ad::Var* suppressed_stream_out = nullptr);

struct ForwardResult {
  EnhancedPath enhanced;
  bool has_suppressed = false;
  BranchResult suppressed;
  ad::Var k_suppressed;
  ad::Var global_term;
  ad::Var gap_term;
};

ForwardResult forward_rtpen(ad::Tape& tape, const TrainView& view,
                            const Model& model, const DatasetProfile& profile,
                            const ForwardOptions& options);

struct EpochLog {
  int epoch = 0;
  double intra = 0.0, inter = 0.0, erase = 0.0, global = 0.0, gap = 0.0;
  double total = 0.0;
  double val_r1_iou05 = 0.0;
};

struct TrainResult {
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::vector<EpochLog> log;
  std::vector<double> step_losses;  // per optimizer step, in order
};

TrainResult train(const TrainConfig& config);

MetricsReport evaluate(const TrainConfig& config, const Model& model,
                       const std::filesystem::path& split_manifest,
                       std::vector<Prediction>* predictions_out = nullptr);

void export_attention(const TrainConfig& config, const Model& model,
                      const std::filesystem::path& split_manifest,
                      const std::string& sample_id,
                      const std::filesystem::path& out_path);

}  // namespace rtpen

#endif  // RTPEN_PIPELINE_HPP
