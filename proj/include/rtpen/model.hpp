#ifndef RTPEN_MODEL_HPP
#define RTPEN_MODEL_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rtpen/rng.hpp"
#include "rtpen/tape.hpp"

namespace rtpen {

// Named trainable matrices plus Adam moments. Values are read-only during
// forward passes; updates happen only between steps under the trainer.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Mat value;
    Mat adam_m;
    Mat adam_v;
  };

  int add(const std::string& name, Mat init);
  int find(const std::string& name) const;  // -1 if absent
  int count() const { return static_cast<int>(entries_.size()); }
  Mat& value(int pid) { return entries_[static_cast<size_t>(pid)].value; }
  const Mat& value(int pid) const {
    return entries_[static_cast<size_t>(pid)].value;
  }
  Entry& entry(int pid) { return entries_[static_cast<size_t>(pid)]; }
  const Entry& entry(int pid) const {
    return entries_[static_cast<size_t>(pid)];
  }
  const std::vector<Entry>& entries() const { return entries_; }

  int64_t adam_step = 0;

  // One Adam update over the given gradients (entries with empty grads are
  // skipped). Weight decay is added to the gradient.
  void adam_update(const std::vector<Mat>& grads, double learning_rate,
                   double weight_decay);

 private:
  std::vector<Entry> entries_;
};

struct GruDirectionIds {
  int w_update, u_update, b_update;
  int w_reset, u_reset, b_reset;
  int w_cand, u_cand, b_cand;
};

struct FilterParamIds {
  int centers;             // [n_c, d_q]
  int assign_w, assign_b;  // [n_c, d_q], [1, n_c]
  int score_w1, score_w2, score_b, score_v;  // [d_h,d_v],[d_h,d_q],[1,d_h],[d_h,1]
};

struct BranchParamIds {
  int attn_w1, attn_w2, attn_b, attn_v;
  GruDirectionIds gru_fwd, gru_bwd;
  int conv1_kernel, conv1_bias, conv2_kernel, conv2_bias;
  int score_w, score_b;  // [conv_channels, 1], [1,1]
};

struct EraseParamIds {
  int recon_w;       // [d_q, d_m]
  int fusion_logit;  // [1,1]; fusion weight = sigmoid(logit), starts at 0.5
};

struct ModelDims {
  int d_v = 0;
  int d_q = 0;
  int d_h = 512;
  int n_c = 8;
  int gru_hidden = 256;  // per direction; d_m = 2 * gru_hidden
  int conv_channels = 512;
  int conv_kernel = 3;

  int d_m() const { return 2 * gru_hidden; }
};

struct Model {
  ParamStore store;
  ModelDims dims;
  FilterParamIds filter{};
  BranchParamIds branch{};
  // Present only for the unshared-parameter ablation; otherwise the
  // suppressed pass uses `branch` itself.
  std::optional<BranchParamIds> branch_suppressed;
  EraseParamIds erase{};
  int unknown_token = -1;  // [1, d_q]

  const BranchParamIds& suppressed_branch() const {
    return branch_suppressed ? *branch_suppressed : branch;
  }
};

// Uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] init, seeded; the unknown
// token embedding uses a small normal and the fusion logit starts at 0.
Model build_model(const ModelDims& dims, uint64_t seed,
                  bool share_branch_params = true);

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const std::string& config_text, int epoch, uint64_t seed);

struct Checkpoint {
  Model model;
  std::string config_text;
  int epoch = 0;
  uint64_t seed = 0;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rtpen

#endif  // RTPEN_MODEL_HPP
