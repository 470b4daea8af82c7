#include "rtpen/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "rtpen/errors.hpp"
#include "rtpen/filter.hpp"

namespace rtpen {

using ad::Tape;
using ad::Var;

std::map<std::string, std::string> parse_config_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        " is not key=value: " + line);
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    const auto trim = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      s = (b == std::string::npos) ? "" : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(value);
    kv[key] = value;
  }
  return kv;
}

namespace {

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("boolean expected for " + key + ", got '" + value + "'");
}

void apply_overrides(std::map<std::string, std::string>& kv,
                     const std::vector<std::string>& overrides) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override is not key=value: " + ov);
    kv[ov.substr(0, eq)] = ov.substr(eq + 1);
  }
}

}  // namespace

TrainConfig train_config_from(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "profile")
      c.profile = value;
    else if (key == "train_manifest")
      c.train_manifest = value;
    else if (key == "val_manifest")
      c.val_manifest = value;
    else if (key == "test_manifest")
      c.test_manifest = value;
    else if (key == "embeddings")
      c.embeddings = value;
    else if (key == "vocab")
      c.vocab = value;
    else if (key == "out_dir")
      c.out_dir = value;
    else if (key == "d_v")
      c.d_v = std::stoi(value);
    else if (key == "d_q")
      c.d_q = std::stoi(value);
    else if (key == "d_h")
      c.d_h = std::stoi(value);
    else if (key == "n_c")
      c.n_c = std::stoi(value);
    else if (key == "gru_hidden")
      c.gru_hidden = std::stoi(value);
    else if (key == "conv_channels")
      c.conv_channels = std::stoi(value);
    else if (key == "T")
      c.proposal_count_T = std::stoi(value);
    else if (key == "erase_rate")
      c.erase_rate = std::stod(value);
    else if (key == "erasing_enabled")
      c.erasing_enabled = parse_bool(value, key);
    else if (key == "filter_enabled")
      c.filter_enabled = parse_bool(value, key);
    else if (key == "share_parameters")
      c.share_parameters = parse_bool(value, key);
    else if (key == "lambda_intra")
      c.lambdas.intra = std::stod(value);
    else if (key == "lambda_inter")
      c.lambdas.inter = std::stod(value);
    else if (key == "lambda_erase")
      c.lambdas.erase = std::stod(value);
    else if (key == "lambda_global")
      c.lambdas.global = std::stod(value);
    else if (key == "lambda_gap")
      c.lambdas.gap = std::stod(value);
    else if (key == "margin_intra")
      c.margins.intra = std::stod(value);
    else if (key == "margin_inter")
      c.margins.inter = std::stod(value);
    else if (key == "learning_rate")
      c.learning_rate = std::stod(value);
    else if (key == "weight_decay")
      c.weight_decay = std::stod(value);
    else if (key == "batch_size")
      c.batch_size = std::stoi(value);
    else if (key == "epochs")
      c.epochs = std::stoi(value);
    else if (key == "seed")
      c.seed = std::stoull(value);
    else if (key == "negative_sampling")
      c.negative_sampling = value;
    else if (key == "threads")
      c.threads = std::stoi(value);
    else
      throw ConfigError("unknown config key: " + key);
  }
  if (c.lambdas.intra < 0 || c.lambdas.inter < 0 || c.lambdas.erase < 0 ||
      c.lambdas.global < 0 || c.lambdas.gap < 0)
    throw ConfigError("loss weights must be non-negative");
  if (c.negative_sampling != "dataset" && c.negative_sampling != "batch")
    throw ConfigError("negative_sampling must be 'dataset' or 'batch'");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  return c;
}

SyntheticConfig synthetic_config_from(
    const std::map<std::string, std::string>& kv) {
  SyntheticConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "out_dir")
      c.out_dir = value;
    else if (key == "num_train")
      c.num_train = std::stoi(value);
    else if (key == "num_val")
      c.num_val = std::stoi(value);
    else if (key == "num_test")
      c.num_test = std::stoi(value);
    else if (key == "n_v")
      c.n_v = std::stoi(value);
    else if (key == "d_v")
      c.d_v = std::stoi(value);
    else if (key == "d_q")
      c.d_q = std::stoi(value);
    else if (key == "vocab_size")
      c.vocab_size = std::stoi(value);
    else if (key == "concepts_min")
      c.concepts_min = std::stoi(value);
    else if (key == "concepts_max")
      c.concepts_max = std::stoi(value);
    else if (key == "fillers_min")
      c.fillers_min = std::stoi(value);
    else if (key == "fillers_max")
      c.fillers_max = std::stoi(value);
    else if (key == "span_frac_min")
      c.span_frac_min = std::stod(value);
    else if (key == "span_frac_max")
      c.span_frac_max = std::stod(value);
    else if (key == "signal_to_noise")
      c.signal_to_noise = std::stod(value);
    else if (key == "seed")
      c.seed = std::stoull(value);
    else if (key == "rule")
      c.rule = parse_sampling_rule(value);
    else if (key == "kernel")
      c.conv_kernel = std::stoi(value);
    else if (key == "T")
      c.proposal_count_T = std::stoi(value);
    else if (key == "nms")
      c.nms_threshold = std::stod(value);
    else if (key == "max_seq")
      c.max_seq = std::stoi(value);
    else
      throw ConfigError("unknown generate config key: " + key);
  }
  if (c.out_dir.empty()) throw ConfigError("generate config needs out_dir");
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path,
                              const std::vector<std::string>& overrides) {
  auto kv = parse_config_file(path);
  apply_overrides(kv, overrides);
  if (const char* env_seed = std::getenv("RTPEN_SEED"))
    kv["seed"] = env_seed;
  return train_config_from(kv);
}

SyntheticConfig load_synthetic_config(
    const std::filesystem::path& path,
    const std::vector<std::string>& overrides) {
  auto kv = parse_config_file(path);
  apply_overrides(kv, overrides);
  if (const char* env_seed = std::getenv("RTPEN_SEED"))
    kv["seed"] = env_seed;
  return synthetic_config_from(kv);
}

std::string train_config_text(const TrainConfig& c) {
  std::ostringstream out;
  out << "profile=" << c.profile << "\n";
  out << "train_manifest=" << c.train_manifest.string() << "\n";
  out << "val_manifest=" << c.val_manifest.string() << "\n";
  out << "test_manifest=" << c.test_manifest.string() << "\n";
  out << "embeddings=" << c.embeddings.string() << "\n";
  out << "vocab=" << c.vocab.string() << "\n";
  out << "out_dir=" << c.out_dir.string() << "\n";
  out << "d_v=" << c.d_v << "\nd_q=" << c.d_q << "\nd_h=" << c.d_h
      << "\nn_c=" << c.n_c << "\ngru_hidden=" << c.gru_hidden
      << "\nconv_channels=" << c.conv_channels << "\n";
  out << "T=" << c.proposal_count_T << "\n";
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "erase_rate=%.17g\nlambda_intra=%.17g\nlambda_inter=%.17g\n"
                "lambda_erase=%.17g\nlambda_global=%.17g\nlambda_gap=%.17g\n"
                "margin_intra=%.17g\nmargin_inter=%.17g\nlearning_rate=%.17g\n"
                "weight_decay=%.17g\n",
                c.erase_rate, c.lambdas.intra, c.lambdas.inter,
                c.lambdas.erase, c.lambdas.global, c.lambdas.gap,
                c.margins.intra, c.margins.inter, c.learning_rate,
                c.weight_decay);
  out << buf;
  out << "erasing_enabled=" << (c.erasing_enabled ? "true" : "false") << "\n";
  out << "filter_enabled=" << (c.filter_enabled ? "true" : "false") << "\n";
  out << "share_parameters=" << (c.share_parameters ? "true" : "false")
      << "\n";
  out << "batch_size=" << c.batch_size << "\nepochs=" << c.epochs
      << "\nseed=" << c.seed << "\n";
  out << "negative_sampling=" << c.negative_sampling << "\n";
  out << "threads=" << c.threads << "\n";
  return out.str();
}

EnhancedPath run_enhanced_path(Tape& tape, const TrainView& view,
                               const Model& model,
                               const DatasetProfile& profile,
                               const ForwardOptions& options,
                               Var* suppressed_stream_out) {
  EnhancedPath path;
  const int n_v = static_cast<int>(view.video.features.rows());
  path.grid = build_candidate_grid(n_v, profile);
  const int proposal_count = profile.proposal_count_T;

  Var video = tape.input(view.video.features);
  path.query_leaf = tape.input(view.query.embeddings);

  if (options.filter_enabled) {
    FilterOutput filtered = run_filter(tape, video, path.query_leaf, model);
    path.enhanced_stream = filtered.enhanced;
    if (suppressed_stream_out) *suppressed_stream_out = filtered.suppressed;
  } else {
    path.enhanced_stream = video;
  }

  path.primary = run_branch(tape, path.enhanced_stream, path.query_leaf,
                            model.branch, model, path.grid, proposal_count,
                            ProposalKind::kPositive);
  path.selection = path.primary.proposals;

  if (options.erasing_enabled && options.erase_rate > 0.0) {
    path.has_erase = true;
    const std::vector<double> dominance =
        word_dominance(tape.val(path.primary.attention.raw));
    TokenizedQuery query_for_plan = view.query;
    query_for_plan.unknown_token_embedding =
        model.store.value(model.unknown_token).row(0);
    path.erased = erased_forward(tape, path.enhanced_stream, path.query_leaf,
                                 query_for_plan, dominance,
                                 options.erase_rate, model, path.grid);
    path.fused_scores =
        fuse_proposal_scores(tape, path.primary.cell_scores,
                             path.erased.cell_scores, model.erase, model);
  } else {
    path.fused_scores = path.primary.cell_scores;
  }

  std::vector<int> selected_rows;
  selected_rows.reserve(path.selection.proposals.size());
  for (const auto& p : path.selection.proposals)
    selected_rows.push_back(p.grid_pos);
  path.k_enhanced =
      tape.sum_all(tape.gather_rows(path.fused_scores, selected_rows));
  return path;
}

ForwardResult forward_rtpen(Tape& tape, const TrainView& view,
                            const Model& model, const DatasetProfile& profile,
                            const ForwardOptions& options) {
  ForwardResult result;
  Var suppressed_stream;
  result.enhanced =
      run_enhanced_path(tape, view, model, profile, options, &suppressed_stream);

  if (options.filter_enabled) {
    result.has_suppressed = true;
    result.suppressed = run_branch(
        tape, suppressed_stream, result.enhanced.query_leaf,
        model.suppressed_branch(), model, result.enhanced.grid,
        profile.proposal_count_T, ProposalKind::kNegative);
    std::vector<int> rows;
    rows.reserve(result.suppressed.proposals.proposals.size());
    for (const auto& p : result.suppressed.proposals.proposals)
      rows.push_back(p.grid_pos);
    result.k_suppressed =
        tape.sum_all(tape.gather_rows(result.suppressed.cell_scores, rows));
  }

  result.global_term = global_reg(tape, result.enhanced.fused_scores);
  std::vector<int> selected_rows;
  for (const auto& p : result.enhanced.selection.proposals)
    selected_rows.push_back(p.grid_pos);
  result.gap_term = gap_reg(
      tape, tape.gather_rows(result.enhanced.fused_scores, selected_rows));
  return result;
}

namespace {

struct TrainItem {
  VideoFeatures video;   // pooled
  TokenizedQuery query;
  std::optional<Span> gt;  // never handed to the training path
};

std::vector<TrainItem> load_items(const DatasetManifest& manifest,
                                  const Vocab& vocab, int expected_dim) {
  std::vector<TrainItem> items;
  items.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    TrainItem item;
    item.video = load_video_features(manifest.base_dir / e.feature_path,
                                     expected_dim);
    item.video.video_id = e.video_id;
    item.video.seconds_per_index = manifest.seconds_per_index;
    if (manifest.profile.pooling_stride > 1) {
      item.video.features =
          temporal_pool(item.video.features, manifest.profile.pooling_stride);
      item.video.seconds_per_index *= manifest.profile.pooling_stride;
    }
    item.query = prepare_query(e.query_text, vocab, manifest.profile.max_seq);
    item.query.query_id = e.video_id;
    item.gt = e.gt;
    items.push_back(std::move(item));
  }
  return items;
}

struct SampleLoss {
  LossBundle bundle;
  bool finite = true;
};

// Builds the per-sample training graph, runs backward and accumulates
// parameter gradients into `grads`.
SampleLoss train_sample_pass(const TrainItem& positive,
                             const TrainItem& neg_video_item,
                             const TrainItem& neg_query_item,
                             const Model& model, const DatasetProfile& profile,
                             const TrainConfig& config,
                             std::vector<Mat>& grads) {
  Tape tape;
  ForwardOptions options;
  options.train_mode = true;
  options.erase_rate = config.erase_rate;
  options.erasing_enabled = config.erasing_enabled;
  options.filter_enabled = config.filter_enabled;

  TrainView pos_view{positive.video, positive.query};
  ForwardResult pos = forward_rtpen(tape, pos_view, model, profile, options);

  TrainView neg_v{neg_video_item.video, positive.query};
  TrainView neg_q{positive.video, neg_query_item.query};
  EnhancedPath neg_video_path =
      run_enhanced_path(tape, neg_v, model, profile, options);
  EnhancedPath neg_query_path =
      run_enhanced_path(tape, neg_q, model, profile, options);

  Var intra = pos.has_suppressed
                  ? intra_loss(tape, pos.enhanced.k_enhanced,
                               pos.k_suppressed, config.margins.intra)
                  : tape.input_scalar(0.0);
  Var inter = inter_loss(tape, pos.enhanced.k_enhanced,
                         neg_video_path.k_enhanced, neg_query_path.k_enhanced,
                         config.margins.inter);
  Var erase = pos.enhanced.has_erase ? pos.enhanced.erased.erase_loss
                                     : tape.input_scalar(0.0);
  Var total = total_loss(tape, intra, inter, erase, pos.global_term,
                         pos.gap_term, config.lambdas);

  SampleLoss out;
  out.bundle = make_bundle(tape.scalar(intra), tape.scalar(inter),
                           tape.scalar(erase), tape.scalar(pos.global_term),
                           tape.scalar(pos.gap_term), config.lambdas);
  if (!std::isfinite(out.bundle.total)) {
    out.finite = false;
    return out;
  }
  tape.backward(total);
  tape.collect_param_grads(grads);
  return out;
}

MetricsReport evaluate_items(const std::vector<TrainItem>& items,
                             const Model& model, const DatasetProfile& profile,
                             const TrainConfig& config,
                             std::vector<Prediction>* predictions_out);

double val_r1_iou05(const std::vector<TrainItem>& items, const Model& model,
                    const DatasetProfile& profile, const TrainConfig& config) {
  const MetricsReport report =
      evaluate_items(items, model, profile, config, nullptr);
  for (const auto& [key, value] : report)
    if (key == "R@1,IoU=0.5") return value;
  return 0.0;
}

}  // namespace

TrainResult train(const TrainConfig& config) {
  if (config.train_manifest.empty())
    throw ConfigError("train_manifest is required");
  DatasetManifest manifest = load_manifest(config.train_manifest);
  if (manifest.profile.name != config.profile)
    throw ConfigError("manifest profile '" + manifest.profile.name +
                      "' does not match config profile '" + config.profile +
                      "'");
  DatasetProfile profile = manifest.profile;
  if (config.proposal_count_T > 0)
    profile.proposal_count_T = config.proposal_count_T;

  const Vocab vocab = load_vocab(config.embeddings, config.vocab);
  if (config.d_q != 0 && vocab.embeddings.cols() != config.d_q)
    throw ConfigError("embedding dim does not match config d_q");

  std::vector<TrainItem> items = load_items(manifest, vocab, config.d_v);
  if (items.empty()) throw ConfigError("empty training set");

  std::vector<TrainItem> val_items;
  if (!config.val_manifest.empty()) {
    DatasetManifest val_manifest = load_manifest(config.val_manifest);
    val_items = load_items(val_manifest, vocab, config.d_v);
  }

  ModelDims dims;
  dims.d_v = static_cast<int>(items[0].video.features.cols());
  dims.d_q = static_cast<int>(vocab.embeddings.cols());
  dims.d_h = config.d_h;
  dims.n_c = config.n_c;
  dims.gru_hidden = config.gru_hidden;
  dims.conv_channels = config.conv_channels;
  dims.conv_kernel = profile.conv_kernel;
  Model model = build_model(dims, config.seed, config.share_parameters);

  std::filesystem::create_directories(config.out_dir);
  const std::string config_text = train_config_text(config);
  const auto best_path = config.out_dir / "best.rtpc";
  const auto last_path = config.out_dir / "last.rtpc";
  const auto last_good_path = config.out_dir / "last_good.rtpc";
  save_checkpoint(last_good_path, model, config_text, 0, config.seed);

  Rng rng(config.seed);
  TrainResult result;
  double best_val = -1.0;

  std::ofstream log_file(config.out_dir / "train_log.txt");
  const int n_threads =
      std::max(1, std::min(config.threads, config.batch_size));

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<int> order(items.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);

    double sum_intra = 0, sum_inter = 0, sum_erase = 0, sum_global = 0,
           sum_gap = 0, sum_total = 0;
    int n_samples = 0;

    for (size_t batch_start = 0; batch_start < order.size();
         batch_start += static_cast<size_t>(config.batch_size)) {
      const size_t batch_end = std::min(
          order.size(), batch_start + static_cast<size_t>(config.batch_size));
      const int batch_count = static_cast<int>(batch_end - batch_start);

      // negative draws happen up front, in sample order, on one thread
      std::vector<std::pair<int, int>> negatives(
          static_cast<size_t>(batch_count));
      for (int k = 0; k < batch_count; ++k) {
        const int current = order[batch_start + static_cast<size_t>(k)];
        if (config.negative_sampling == "batch") {
          // restrict candidates to this batch's other entries
          const std::string& cur_id =
              manifest.entries[static_cast<size_t>(current)].video_id;
          std::vector<int> eligible;
          for (size_t j = batch_start; j < batch_end; ++j) {
            const int cand = order[j];
            if (manifest.entries[static_cast<size_t>(cand)].video_id != cur_id)
              eligible.push_back(cand);
          }
          if (eligible.empty())
            throw SamplingError(
                "batch negative sampling found no eligible entry");
          negatives[static_cast<size_t>(k)] = {
              eligible[rng.uniform_index(eligible.size())],
              eligible[rng.uniform_index(eligible.size())]};
        } else {
          negatives[static_cast<size_t>(k)] =
              sample_negative_indices(manifest, current, rng);
        }
      }

      std::vector<std::vector<Mat>> thread_grads(
          static_cast<size_t>(n_threads));
      std::vector<SampleLoss> losses(static_cast<size_t>(batch_count));
      auto worker = [&](int tid) {
        auto& grads = thread_grads[static_cast<size_t>(tid)];
        grads.assign(static_cast<size_t>(model.store.count()), Mat());
        for (int k = tid; k < batch_count; k += n_threads) {
          const int current = order[batch_start + static_cast<size_t>(k)];
          const auto& [nv, nq] = negatives[static_cast<size_t>(k)];
          losses[static_cast<size_t>(k)] = train_sample_pass(
              items[static_cast<size_t>(current)],
              items[static_cast<size_t>(nv)], items[static_cast<size_t>(nq)],
              model, profile, config, grads);
        }
      };
      if (n_threads == 1) {
        worker(0);
      } else {
        std::vector<std::thread> pool;
        for (int tid = 0; tid < n_threads; ++tid)
          pool.emplace_back(worker, tid);
        for (auto& t : pool) t.join();
      }

      for (int k = 0; k < batch_count; ++k) {
        const auto& loss = losses[static_cast<size_t>(k)];
        if (!loss.finite)
          throw DivergenceError(
              "non-finite loss at epoch " + std::to_string(epoch) +
              "; last good checkpoint: " + last_good_path.string());
        sum_intra += loss.bundle.intra;
        sum_inter += loss.bundle.inter;
        sum_erase += loss.bundle.erase;
        sum_global += loss.bundle.global;
        sum_gap += loss.bundle.gap;
        sum_total += loss.bundle.total;
        result.step_losses.push_back(loss.bundle.total);
        ++n_samples;
      }

      // deterministic reduction: thread slices are summed in thread order
      std::vector<Mat> grads(static_cast<size_t>(model.store.count()));
      for (int tid = 0; tid < n_threads; ++tid) {
        const auto& tg = thread_grads[static_cast<size_t>(tid)];
        if (tg.empty()) continue;
        for (size_t p = 0; p < tg.size(); ++p) {
          if (tg[p].size() == 0) continue;
          if (grads[p].size() == 0)
            grads[p] = tg[p];
          else
            grads[p] += tg[p];
        }
      }
      const double inv_batch = 1.0 / static_cast<double>(batch_count);
      for (auto& gm : grads)
        if (gm.size() != 0) gm *= inv_batch;
      model.store.adam_update(grads, config.learning_rate,
                              config.weight_decay);
    }

    EpochLog log;
    log.epoch = epoch;
    log.intra = sum_intra / n_samples;
    log.inter = sum_inter / n_samples;
    log.erase = sum_erase / n_samples;
    log.global = sum_global / n_samples;
    log.gap = sum_gap / n_samples;
    log.total = sum_total / n_samples;
    if (!val_items.empty())
      log.val_r1_iou05 = val_r1_iou05(val_items, model, profile, config);
    result.log.push_back(log);

    char line[512];
    std::snprintf(line, sizeof(line),
                  "epoch=%d intra=%.17g inter=%.17g erase=%.17g global=%.17g "
                  "gap=%.17g total=%.17g val_r1_iou05=%.17g\n",
                  log.epoch, log.intra, log.inter, log.erase, log.global,
                  log.gap, log.total, log.val_r1_iou05);
    log_file << line;
    log_file.flush();

    save_checkpoint(last_path, model, config_text, epoch, config.seed);
    save_checkpoint(last_good_path, model, config_text, epoch, config.seed);
    if (val_items.empty() || log.val_r1_iou05 >= best_val) {
      best_val = log.val_r1_iou05;
      save_checkpoint(best_path, model, config_text, epoch, config.seed);
    }
  }

  result.best_checkpoint = best_path;
  result.last_checkpoint = last_path;
  return result;
}

namespace {

MetricsReport evaluate_items(const std::vector<TrainItem>& items,
                             const Model& model, const DatasetProfile& profile,
                             const TrainConfig& config,
                             std::vector<Prediction>* predictions_out) {
  ForwardOptions options;
  options.train_mode = false;
  options.erase_rate = config.erase_rate;
  options.erasing_enabled = config.erasing_enabled;
  options.filter_enabled = config.filter_enabled;

  std::vector<Prediction> predictions;
  std::map<std::string, Span> gts;
  const bool didemo = profile.sampling_rule.kind == SamplingRule::Kind::kDidemo;
  std::vector<Prediction> full_rankings;  // didemo rank metrics, no NMS

  for (size_t i = 0; i < items.size(); ++i) {
    const TrainItem& item = items[i];
    if (!item.gt)
      throw EvaluationError("sample " + item.video.video_id +
                            " lacks a ground-truth span");
    const std::string sample_id =
        item.video.video_id + "#" + std::to_string(i);
    gts[sample_id] = *item.gt;

    Tape tape;
    TrainView view{item.video, item.query};
    ForwardResult fwd = forward_rtpen(tape, view, model, profile, options);
    const Mat& fused = tape.val(fwd.enhanced.fused_scores);
    const CandidateGrid& grid = fwd.enhanced.grid;

    std::vector<int> rank(grid.valid_cells.size());
    for (size_t r = 0; r < rank.size(); ++r) rank[r] = static_cast<int>(r);
    std::sort(rank.begin(), rank.end(), [&](int x, int y) {
      const double sx = fused(x, 0), sy = fused(y, 0);
      if (sx != sy) return sx > sy;
      return grid.valid_cells[static_cast<size_t>(x)] <
             grid.valid_cells[static_cast<size_t>(y)];
    });

    std::vector<ScoredMoment> moments;
    moments.reserve(rank.size());
    for (const int r : rank) {
      const auto& [a, b] = grid.valid_cells[static_cast<size_t>(r)];
      const Span span = grid_to_seconds({a, b}, item.video.seconds_per_index);
      moments.push_back({span.start_seconds, span.end_seconds, fused(r, 0)});
    }
    if (didemo) {
      Prediction full;
      full.sample_id = sample_id;
      full.ranked_moments = moments;
      full_rankings.push_back(std::move(full));
    }
    Prediction pred;
    pred.sample_id = sample_id;
    std::vector<ScoredMoment> kept = nms(moments, profile.nms_threshold);
    if (kept.size() > 5) kept.resize(5);
    pred.ranked_moments = std::move(kept);
    predictions.push_back(std::move(pred));
  }

  MetricsReport report;
  const double ious[4] = {0.1, 0.3, 0.5, 0.7};
  for (const int n : {1, 5}) {
    for (const double m : ious) {
      char key[64];
      std::snprintf(key, sizeof(key), "R@%d,IoU=%.1f", n, m);
      report.emplace_back(key, recall_at(predictions, gts, n, m));
    }
  }
  report.emplace_back("mIoU", mean_iou(predictions, gts));
  if (didemo) {
    const auto [r1, r5] = rank_metrics(full_rankings, gts);
    report.emplace_back("Rank@1", r1);
    report.emplace_back("Rank@5", r5);
  }
  if (predictions_out) *predictions_out = std::move(predictions);
  return report;
}

}  // namespace

MetricsReport evaluate(const TrainConfig& config, const Model& model,
                       const std::filesystem::path& split_manifest,
                       std::vector<Prediction>* predictions_out) {
  DatasetManifest manifest = load_manifest(split_manifest);
  if (manifest.profile.name != config.profile)
    throw ConfigError("manifest profile '" + manifest.profile.name +
                      "' does not match checkpoint profile '" +
                      config.profile + "'");
  DatasetProfile profile = manifest.profile;
  if (config.proposal_count_T > 0)
    profile.proposal_count_T = config.proposal_count_T;
  if (model.dims.conv_kernel != profile.conv_kernel)
    throw ConfigError("checkpoint conv kernel does not match the profile");
  const Vocab vocab = load_vocab(config.embeddings, config.vocab);
  const std::vector<TrainItem> items = load_items(manifest, vocab, config.d_v);
  return evaluate_items(items, model, profile, config, predictions_out);
}

void export_attention(const TrainConfig& config, const Model& model,
                      const std::filesystem::path& split_manifest,
                      const std::string& sample_id,
                      const std::filesystem::path& out_path) {
  DatasetManifest manifest = load_manifest(split_manifest);
  const Vocab vocab = load_vocab(config.embeddings, config.vocab);

  int entry_index = -1;
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    if (manifest.entries[i].video_id == sample_id ||
        std::to_string(i) == sample_id) {
      entry_index = static_cast<int>(i);
      break;
    }
  }
  if (entry_index < 0)
    throw ConfigError("sample '" + sample_id + "' not found in manifest");

  DatasetManifest single = manifest;
  single.entries = {manifest.entries[static_cast<size_t>(entry_index)]};
  const std::vector<TrainItem> items = load_items(single, vocab, config.d_v);
  const TrainItem& item = items[0];

  ForwardOptions options;
  options.train_mode = false;
  options.erase_rate = config.erase_rate;
  options.erasing_enabled = config.erasing_enabled;
  options.filter_enabled = config.filter_enabled;

  Tape tape;
  TrainView view{item.video, item.query};
  ForwardResult fwd =
      forward_rtpen(tape, view, model, manifest.profile, options);

  std::ofstream out(out_path);
  if (!out) throw FormatError("cannot write " + out_path.string());
  const auto write_grid = [&](const char* title, const Mat& grid) {
    out << title << "\n";
    out << "frame";
    for (const auto& tok : item.query.tokens) out << "," << tok;
    out << "\n";
    for (Eigen::Index r = 0; r < grid.rows(); ++r) {
      out << r;
      for (Eigen::Index c = 0; c < grid.cols(); ++c) {
        char buf[48];
        std::snprintf(buf, sizeof(buf), ",%.9g", grid(r, c));
        out << buf;
      }
      out << "\n";
    }
  };
  write_grid("primary", tape.val(fwd.enhanced.primary.attention.row_soft));
  out << "\n";
  if (fwd.enhanced.has_erase) {
    // erased-pass attention, column-normalized over frames
    Tape local;
    Var raw = local.input(tape.val(fwd.enhanced.erased.raw_attention));
    write_grid("erased", local.val(local.softmax_cols(raw)));
    out << "\nerased_words";
    for (const int idx : fwd.enhanced.erased.plan.erased_indices)
      out << "," << item.query.tokens[static_cast<size_t>(idx)];
    out << "\n";
  }
}

}  // namespace rtpen
