#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "rtpen/errors.hpp"
#include "rtpen/pipeline.hpp"

namespace {

rtpen::TrainConfig config_from_checkpoint(const rtpen::Checkpoint& ck) {
  std::map<std::string, std::string> kv;
  std::istringstream in(ck.config_text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos)
      kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return rtpen::train_config_from(kv);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RTPEN weakly-supervised video moment retrieval"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;

  auto* generate = app.add_subcommand("generate", "generate a synthetic dataset");
  generate->add_option("--config", config_path, "generator config file")
      ->required();
  generate->add_option("--override", overrides, "key=value override");

  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--config", config_path, "training config file")
      ->required();
  train_cmd->add_option("--override", overrides, "key=value override");

  std::string checkpoint_path;
  std::string split = "test";
  std::string predictions_path;
  std::string report_path;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--config", config_path, "training config file")
      ->required();
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required();
  eval_cmd->add_option("--split", split, "split name (train/val/test)");
  eval_cmd->add_option("--predictions", predictions_path,
                       "write top-5 predictions here");
  eval_cmd->add_option("--report", report_path, "write the metrics report here");
  eval_cmd->add_option("--override", overrides, "key=value override");

  std::string sample_id;
  std::string out_path = "attention.csv";
  auto* export_cmd =
      app.add_subcommand("export-attention", "dump attention heat maps");
  export_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required();
  export_cmd->add_option("--sample", sample_id,
                         "video id or entry index in the split manifest")
      ->required();
  export_cmd->add_option("--split", split, "split name (train/val/test)");
  export_cmd->add_option("--out", out_path, "output file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) {
      const auto config = rtpen::load_synthetic_config(config_path, overrides);
      rtpen::generate_dataset(config);
      std::cout << "dataset written to " << config.out_dir.string() << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      const auto config = rtpen::load_train_config(config_path, overrides);
      const auto result = rtpen::train(config);
      for (const auto& log : result.log) {
        std::printf("epoch %d total=%.6f val_R@1,IoU=0.5=%.4f\n", log.epoch,
                    log.total, log.val_r1_iou05);
      }
      std::cout << "best checkpoint: " << result.best_checkpoint.string()
                << "\n";
      return 0;
    }

    auto split_manifest = [&](const rtpen::TrainConfig& config) {
      if (split == "train") return config.train_manifest;
      if (split == "val") return config.val_manifest;
      if (split == "test") return config.test_manifest;
      throw rtpen::ConfigError("unknown split: " + split);
    };

    if (eval_cmd->parsed()) {
      auto config = rtpen::load_train_config(config_path, overrides);
      const auto ck = rtpen::load_checkpoint(checkpoint_path);
      const auto ck_config = config_from_checkpoint(ck);
      if (ck_config.profile != config.profile)
        throw rtpen::ConfigError("checkpoint was trained with profile '" +
                                 ck_config.profile + "'");
      std::vector<rtpen::Prediction> predictions;
      const auto report = rtpen::evaluate(config, ck.model,
                                          split_manifest(config),
                                          &predictions);
      std::cout << rtpen::format_report(report);
      if (!report_path.empty()) rtpen::write_report(report_path, report);
      if (!predictions_path.empty())
        rtpen::write_predictions(predictions_path, predictions);
      return 0;
    }

    if (export_cmd->parsed()) {
      const auto ck = rtpen::load_checkpoint(checkpoint_path);
      const auto config = config_from_checkpoint(ck);
      rtpen::export_attention(config, ck.model, split_manifest(config),
                              sample_id, out_path);
      std::cout << "attention written to " << out_path << "\n";
      return 0;
    }
  } catch (const rtpen::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
