#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "modnet/checkpoint.hpp"
#include "modnet/config.hpp"
#include "modnet/error.hpp"
#include "modnet/eval.hpp"
#include "modnet/training.hpp"
#include "modnet/ucr.hpp"

namespace {

using namespace modnet;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "experiment config (JSON)")->required();
  cmd->add_option("--set", args.overrides,
                  "override a scalar config key, e.g. --set train.seed=3");
}

std::ofstream open_output(const std::string& path, const std::string& config_hash) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot open '" + path + "' for writing");
  os << "# config_hash=" << config_hash << "\n";
  return os;
}

std::string sanitize(const std::string& label) {
  std::string out;
  for (char c : label) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  }
  return out;
}

std::vector<TripletBatch> benchmark_triplets(const ExperimentConfig& cfg, const Dataset& ds) {
  const Split split =
      split_dataset(ds.spec.sample_count, cfg.train.heldout_fraction, cfg.train.eval_seed);
  std::vector<TripletBatch> out;
  for (int t = 0; t < cfg.train.tasks; ++t) {
    Rng rng(substream(cfg.train.eval_seed, 500 + static_cast<uint64_t>(t)));
    out.push_back(
        sample_triplets_from(ds, split.heldout, t, cfg.train.eval_triplets_per_task, rng));
  }
  return out;
}

void write_train_ucr_csv(const std::string& path, const ExperimentConfig& cfg,
                         const TrainResult& res) {
  auto os = open_output(path, cfg.config_hash);
  write_ucr_csv_header(os);
  for (int e = 0; e < static_cast<int>(res.metrics.size()); ++e) {
    const auto ucr = ucr_report(res.ledger, static_cast<long>(e) * res.steps_per_epoch,
                                static_cast<long>(e + 1) * res.steps_per_epoch - 1);
    append_ucr_csv(os, ucr, e + 1);
  }
}

int cmd_generate(const CommonArgs& args) {
  const ExperimentConfig cfg = load_config(args.config_path, args.overrides);
  std::filesystem::create_directories(cfg.output_dir);
  const Dataset ds = generate_dataset(cfg.dataset);
  save_dataset(cfg.dataset_path(), ds);

  std::printf("dataset: %d samples, %d attributes -> %s\n", cfg.dataset.sample_count,
              cfg.dataset.attribute_count, cfg.dataset_path().c_str());
  const auto agree = empirical_agreement(ds);
  for (int i = 0; i < cfg.dataset.attribute_count; ++i) {
    for (int j = i + 1; j < cfg.dataset.attribute_count; ++j) {
      std::printf("  agreement(%d,%d): empirical %.4f, expected %.4f\n", i, j, agree[i][j],
                  expected_agreement(cfg.dataset.correlation[i][j]));
    }
  }
  std::printf("invariants: labels binary, inputs finite, %zu inputs\n", ds.inputs.size());
  return 0;
}

int cmd_train(const CommonArgs& args) {
  const ExperimentConfig cfg = load_config(args.config_path, args.overrides);
  std::filesystem::create_directories(cfg.output_dir);
  if (!std::filesystem::exists(cfg.dataset_path())) {
    throw ConfigError("dataset file '" + cfg.dataset_path() + "' does not exist; run generate");
  }
  const Dataset ds = load_dataset(cfg.dataset_path());
  ExperimentConfig run_cfg = cfg;
  if (run_cfg.train.checkpoint_every > 0) {
    run_cfg.train.checkpoint_prefix = cfg.output_dir + "/checkpoint_";
  }
  const TrainResult res = train(run_cfg.train, ds);

  res.model.save(cfg.output_dir + "/checkpoint.bin");
  {
    auto os = open_output(cfg.output_dir + "/metrics.csv", cfg.config_hash);
    write_metrics_csv(os, cfg.train.label(), res.metrics);
  }
  if (res.ucr_recorded) {
    write_train_ucr_csv(cfg.output_dir + "/ucr.csv", cfg, res);
  }
  const auto& last = res.metrics.back();
  double mean = 0.0;
  for (double a : last.task_accuracy) mean += a;
  mean /= static_cast<double>(last.task_accuracy.size());
  std::printf("trained %s for %d epochs; held-out mean accuracy %.4f\n", cfg.train.label().c_str(),
              cfg.train.epochs, mean);
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& checkpoint) {
  const ExperimentConfig cfg = load_config(args.config_path, args.overrides);
  std::filesystem::create_directories(cfg.output_dir);
  const Dataset ds = load_dataset(cfg.dataset_path());
  VariantModel model = build_variant(cfg.train, cfg.train.seed);
  const std::string ckpt = checkpoint.empty() ? cfg.output_dir + "/checkpoint.bin" : checkpoint;
  model.load(ckpt);

  const auto triplets = benchmark_triplets(cfg, ds);
  auto os = open_output(cfg.output_dir + "/eval.csv", cfg.config_hash);
  os << "variant,task,accuracy,shared_params,task_params\n";
  char buf[64];
  for (int t = 0; t < cfg.train.tasks; ++t) {
    const double acc =
        retrieval_accuracy(model, t, triplets[t], ds, cfg.train.normalize_embeddings);
    std::snprintf(buf, sizeof(buf), "%.17g", acc);
    os << cfg.train.label() << "," << t << "," << buf << "," << model.shared_param_count() << ","
       << model.task_param_count() << "\n";
    std::printf("task %d accuracy %.4f\n", t, acc);
  }
  return 0;
}

int cmd_compare(const CommonArgs& args) {
  const ExperimentConfig cfg = load_config(args.config_path, args.overrides);
  std::filesystem::create_directories(cfg.output_dir);
  const Dataset ds = load_dataset(cfg.dataset_path());

  std::vector<TrainConfig> cfgs;
  for (const auto& name : cfg.compare_variants) {
    TrainConfig c = cfg.train;
    c.variant = parse_variant(name);
    if (c.variant == Variant::Modulated && !cfg.compare_from_blocks.empty()) {
      for (const auto& fb : cfg.compare_from_blocks) {
        TrainConfig cc = c;
        cc.insertion.from_block = fb;
        cfgs.push_back(cc);
      }
    } else {
      cfgs.push_back(c);
    }
  }

  {
    auto os = open_output(cfg.output_dir + "/eval_triplets.csv", cfg.config_hash);
    write_triplets_csv(os, benchmark_triplets(cfg, ds));
  }

  const RetrievalReport report = compare_variants(cfgs, ds, cfg.seeds);
  {
    auto os = open_output(cfg.output_dir + "/report.csv", cfg.config_hash);
    write_report_csv(os, report);
  }
  {
    auto os = open_output(cfg.output_dir + "/summary.txt", cfg.config_hash);
    write_report_summary(os, report);
  }
  for (const auto& run : report.runs) {
    if (run.final_ucr.empty()) continue;
    auto os = open_output(cfg.output_dir + "/ucr_" + sanitize(run.variant) + "_seed" +
                              std::to_string(run.seed) + ".csv",
                          cfg.config_hash);
    write_ucr_csv_header(os);
    append_ucr_csv(os, run.final_ucr, 0);
  }

  std::ifstream summary(cfg.output_dir + "/summary.txt");
  std::cout << summary.rdbuf();
  return 0;
}

int cmd_ucr_report(const CommonArgs& args, const std::string& checkpoint) {
  const ExperimentConfig cfg = load_config(args.config_path, args.overrides);
  std::filesystem::create_directories(cfg.output_dir);
  const Dataset ds = load_dataset(cfg.dataset_path());

  // Measurement pass: gradients are recorded at the loaded parameters, the
  // zero learning rate leaves them untouched.
  ExperimentConfig mcfg = cfg;
  mcfg.train.init_checkpoint =
      checkpoint.empty() ? cfg.output_dir + "/checkpoint.bin" : checkpoint;
  mcfg.train.learning_rate = 0.0;
  mcfg.train.epochs = cfg.ucr_passes;
  mcfg.train.ucr_enabled = true;
  if (mcfg.train.variant == Variant::Independent) {
    throw ConfigError("UCR is undefined for the independent variant (no shared parameters)");
  }
  const TrainResult res = train(mcfg.train, ds);
  write_train_ucr_csv(cfg.output_dir + "/ucr.csv", cfg, res);

  const auto ucr = ucr_report(res.ledger, 0, res.steps_per_epoch * cfg.ucr_passes - 1);
  for (size_t t = 0; t < ucr.size(); ++t) {
    for (size_t u = t + 1; u < ucr.size(); ++u) {
      std::printf("ucr(%zu,%zu) = %.4f\n", t, u, ucr[t][u]);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"task-modulated multi-task embedding experiments"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, compare_args, ucr_args;
  std::string eval_checkpoint, ucr_checkpoint;

  add_common(app.add_subcommand("generate", "generate a synthetic dataset"), gen_args);
  add_common(app.add_subcommand("train", "train one variant"), train_args);
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd, eval_args);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint path");
  add_common(app.add_subcommand("compare", "train and compare variants"), compare_args);
  auto* ucr_cmd = app.add_subcommand("ucr-report", "measure UCR for a checkpoint");
  add_common(ucr_cmd, ucr_args);
  ucr_cmd->add_option("--checkpoint", ucr_checkpoint, "checkpoint path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("generate")) return cmd_generate(gen_args);
    if (app.got_subcommand("train")) return cmd_train(train_args);
    if (app.got_subcommand("eval")) return cmd_eval(eval_args, eval_checkpoint);
    if (app.got_subcommand("compare")) return cmd_compare(compare_args);
    if (app.got_subcommand("ucr-report")) return cmd_ucr_report(ucr_args, ucr_checkpoint);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
