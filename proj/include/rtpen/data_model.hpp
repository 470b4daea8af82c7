#ifndef RTPEN_DATA_MODEL_HPP
#define RTPEN_DATA_MODEL_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "rtpen/tape.hpp"

namespace rtpen {

struct Span {
  double start_seconds = 0.0;
  double end_seconds = 0.0;
};

struct VideoFeatures {
  std::string video_id;
  Mat features;  // [n_v, d_v]
  double seconds_per_index = 1.0;
};

struct TokenizedQuery {
  std::string query_id;
  std::vector<int> token_ids;
  std::vector<std::string> tokens;
  Mat embeddings;  // [n_q, d_q]
  Eigen::RowVectorXd unknown_token_embedding;
};

struct Sample {
  VideoFeatures video;
  TokenizedQuery query;
  std::optional<Span> ground_truth_span;
};

// What the training path is allowed to see: no ground-truth span.
struct TrainView {
  const VideoFeatures& video;
  const TokenizedQuery& query;
};

inline TrainView train_view(const Sample& s) { return {s.video, s.query}; }

struct SamplingRule {
  enum class Kind { kAllPairs, kModZero, kOddPairs, kDidemo };
  Kind kind = Kind::kAllPairs;
  int k = 1;  // modulus for kModZero

  bool admits(int a, int b) const {
    switch (kind) {
      case Kind::kAllPairs:
      case Kind::kDidemo:
        return a <= b;
      case Kind::kModZero:
        return (b - a) % k == 0;
      case Kind::kOddPairs:
        return (b - a) % 2 == 1;
    }
    return false;
  }
};

SamplingRule parse_sampling_rule(const std::string& text);
std::string to_string(const SamplingRule& rule);

struct DatasetProfile {
  std::string name;
  int pooling_stride = 1;
  int max_seq = 25;
  SamplingRule sampling_rule;
  int conv_kernel = 3;
  int proposal_count_T = 16;
  double nms_threshold = 0.55;
};

// Built-in profiles: "activitycaption", "charades", "didemo". "synthetic"
// starts from all-pairs defaults and takes overrides from the manifest
// header. Unknown names raise ConfigError.
DatasetProfile builtin_profile(const std::string& name);

struct ManifestEntry {
  std::string video_id;
  std::string feature_path;  // relative to the manifest's directory
  std::string query_text;
  std::optional<Span> gt;
};

struct DatasetManifest {
  std::string split;
  DatasetProfile profile;
  double seconds_per_index = 1.0;  // of the raw (pre-pooling) features
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;
};

struct Vocab {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;
  Mat embeddings;  // [vocab_size, d_q]
};

// Feature file: "RTPF", u32le n_v, u32le d_v, then n_v*d_v f32le row-major.
VideoFeatures load_video_features(const std::filesystem::path& path,
                                  int expected_dim);
void write_video_features(const std::filesystem::path& path,
                          const VideoFeatures& video);

// Embedding table: "RTPE", u32le vocab_size, u32le d_q, f32le row-major.
Mat load_embedding_table(const std::filesystem::path& path);
void write_embedding_table(const std::filesystem::path& path, const Mat& table);

// One token per line, line i names embedding row i.
std::vector<std::string> load_vocab_tokens(const std::filesystem::path& path);
void write_vocab_tokens(const std::filesystem::path& path,
                        const std::vector<std::string>& tokens);
Vocab load_vocab(const std::filesystem::path& table_path,
                 const std::filesystem::path& tokens_path);

DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const DatasetManifest& manifest);

// Mean over groups of `stride` consecutive rows; a shorter final group
// keeps the remainder.
Mat temporal_pool(const Mat& features, int stride);

TokenizedQuery prepare_query(const std::string& raw_text, const Vocab& vocab,
                             int max_seq);

}  // namespace rtpen

#endif  // RTPEN_DATA_MODEL_HPP
