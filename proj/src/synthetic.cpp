#include "rtpen/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "rtpen/errors.hpp"
#include "rtpen/evaluation.hpp"
#include "rtpen/rng.hpp"

namespace rtpen {

namespace {

// Quantize through f32 so written files round-trip bitwise.
double as_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

struct SplitSpec {
  std::string name;
  int count;
};

}  // namespace

void generate_dataset(const SyntheticConfig& config) {
  if (config.vocab_size < 4)
    throw ArgumentError("vocab_size must be at least 4");
  if (config.concepts_min < 1 || config.concepts_max < config.concepts_min)
    throw ArgumentError("bad concepts_per_query range");
  if (config.fillers_min < 0 || config.fillers_max < config.fillers_min)
    throw ArgumentError("bad filler_tokens range");
  if (!(config.span_frac_min > 0.0 && config.span_frac_max < 1.0 &&
        config.span_frac_min <= config.span_frac_max))
    throw ArgumentError("span_length_fraction range must lie in (0,1)");
  if (config.signal_to_noise < 0.0)
    throw ArgumentError("signal_to_noise must be non-negative");

  DatasetProfile profile = builtin_profile("synthetic");
  profile.sampling_rule = config.rule;
  profile.conv_kernel = config.conv_kernel;
  profile.proposal_count_T = config.proposal_count_T;
  profile.nms_threshold = config.nms_threshold;
  profile.max_seq = config.max_seq;
  // fails fast if the geometry admits no candidate cells
  build_candidate_grid(config.n_v, profile);

  std::filesystem::create_directories(config.out_dir);
  std::filesystem::create_directories(config.out_dir / "features");

  Rng rng(config.seed);

  // Vocabulary: concept tokens first, filler tokens after; fillers are
  // never used as concepts.
  const int n_concept_pool = config.vocab_size / 2;
  std::vector<std::string> tokens(static_cast<size_t>(config.vocab_size));
  for (int i = 0; i < config.vocab_size; ++i)
    tokens[static_cast<size_t>(i)] =
        (i < n_concept_pool ? "act" : "pad") + std::to_string(i);
  Mat table(config.vocab_size, config.d_q);
  for (Eigen::Index r = 0; r < table.rows(); ++r)
    for (Eigen::Index c = 0; c < table.cols(); ++c)
      table(r, c) = as_f32(rng.normal());
  write_embedding_table(config.out_dir / "embeddings.rtpe", table);
  write_vocab_tokens(config.out_dir / "vocab.txt", tokens);

  // One projection shared by the whole dataset ties queries to features.
  Mat projection(config.d_v, config.d_q);
  const double proj_scale = 1.0 / std::sqrt(static_cast<double>(config.d_q));
  for (Eigen::Index r = 0; r < projection.rows(); ++r)
    for (Eigen::Index c = 0; c < projection.cols(); ++c)
      projection(r, c) = proj_scale * rng.normal();

  const double spi = 1.0;
  const SplitSpec splits[3] = {{"train", config.num_train},
                               {"val", config.num_val},
                               {"test", config.num_test}};
  for (const auto& split : splits) {
    DatasetManifest manifest;
    manifest.split = split.name;
    manifest.profile = profile;
    manifest.seconds_per_index = spi;
    manifest.base_dir = config.out_dir;
    for (int s = 0; s < split.count; ++s) {
      const std::string video_id =
          split.name + "_" + std::to_string(100000 + s).substr(1);

      // concepts and fillers
      const int n_concepts = rng.uniform_int(config.concepts_min,
                                             config.concepts_max);
      std::vector<int> concept_ids;
      while (static_cast<int>(concept_ids.size()) < n_concepts) {
        const int cand = static_cast<int>(rng.uniform_index(n_concept_pool));
        if (std::find(concept_ids.begin(), concept_ids.end(), cand) ==
            concept_ids.end())
          concept_ids.push_back(cand);
      }
      const int n_fillers = rng.uniform_int(config.fillers_min,
                                            config.fillers_max);
      std::vector<int> word_ids = concept_ids;
      for (int f = 0; f < n_fillers; ++f)
        word_ids.push_back(n_concept_pool +
                           static_cast<int>(rng.uniform_index(
                               config.vocab_size - n_concept_pool)));
      rng.shuffle(word_ids);

      // target span
      Span gt;
      if (config.rule.kind == SamplingRule::Kind::kDidemo) {
        const int a = rng.uniform_int(0, config.n_v - 1);
        const int b = rng.uniform_int(a, config.n_v - 1);
        gt = grid_to_seconds({a, b}, spi);
      } else {
        const double frac = rng.uniform(config.span_frac_min,
                                        config.span_frac_max);
        const double len =
            std::max(1.0, frac * static_cast<double>(config.n_v) * spi);
        const double start =
            rng.uniform(0.0, static_cast<double>(config.n_v) * spi - len);
        gt = {start, start + len};
      }

      // features: unit noise, plus the projected concept sum inside the span
      Eigen::VectorXd concept_sum = Eigen::VectorXd::Zero(config.d_q);
      for (const int cid : concept_ids)
        concept_sum += table.row(cid).transpose();
      const Eigen::VectorXd signal =
          config.signal_to_noise * (projection * concept_sum);
      Mat features(config.n_v, config.d_v);
      for (int i = 0; i < config.n_v; ++i) {
        const double center = (static_cast<double>(i) + 0.5) * spi;
        const bool in_span =
            center >= gt.start_seconds && center <= gt.end_seconds;
        for (int d = 0; d < config.d_v; ++d) {
          double v = rng.normal();
          if (in_span) v += signal(d);
          features(i, d) = as_f32(v);
        }
      }
      const std::string feature_rel = "features/" + video_id + ".rtpf";
      VideoFeatures vf;
      vf.video_id = video_id;
      vf.features = std::move(features);
      vf.seconds_per_index = spi;
      write_video_features(config.out_dir / feature_rel, vf);

      ManifestEntry entry;
      entry.video_id = video_id;
      entry.feature_path = feature_rel;
      for (size_t w = 0; w < word_ids.size(); ++w) {
        if (w) entry.query_text += ' ';
        entry.query_text += tokens[static_cast<size_t>(word_ids[w])];
      }
      entry.gt = gt;
      manifest.entries.push_back(std::move(entry));
    }
    write_manifest(config.out_dir / (split.name + ".manifest"), manifest);
  }
}

BaselineEstimate random_baseline(const CandidateGrid& grid,
                                 const std::vector<Span>& gt_spans, double m,
                                 int trials, uint64_t seed,
                                 double seconds_per_index) {
  if (trials < 10000)
    throw ArgumentError("random_baseline needs at least 10^4 trials");
  if (gt_spans.empty()) throw ArgumentError("no ground-truth spans");
  Rng rng(seed);
  int64_t hits = 0;
  for (int t = 0; t < trials; ++t) {
    const Span& gt = gt_spans[rng.uniform_index(gt_spans.size())];
    const auto& [a, b] =
        grid.valid_cells[rng.uniform_index(grid.valid_cells.size())];
    if (temporal_iou(grid_to_seconds({a, b}, seconds_per_index), gt) > m)
      ++hits;
  }
  BaselineEstimate est;
  est.mean = static_cast<double>(hits) / static_cast<double>(trials);
  est.std_error =
      std::sqrt(est.mean * (1.0 - est.mean) / static_cast<double>(trials));
  return est;
}

}  // namespace rtpen
