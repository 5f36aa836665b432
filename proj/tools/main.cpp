#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "histloss/codec.hpp"
#include "histloss/config_file.hpp"
#include "histloss/experiment.hpp"
#include "histloss/toy_system.hpp"
#include "histloss/util.hpp"

namespace {

using namespace histloss;

// HISTLOSS_OUT_DIR is the default output root; explicit flags win verbatim.
std::string under_out_root(const std::string& rel) {
  const char* root = std::getenv("HISTLOSS_OUT_DIR");
  if (root == nullptr || *root == '\0' || std::filesystem::path(rel).is_absolute()) {
    return rel;
  }
  return (std::filesystem::path(root) / rel).string();
}

struct GenerateArgs {
  DatasetSpec spec;
  std::string out;
};

// Flag defaults mirror the RunConfig defaults; a flag only overrides the
// config file when it was actually passed.
struct TrainArgs {
  std::string config;
  std::string dataset;
  std::string mode = mode_name(RunConfig{}.mode);
  int bins = RunConfig{}.grid.bins;
  double sigma_mult = RunConfig{}.grid.sigma_mult;
  std::string out_dir = RunConfig{}.out_dir;
};

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::string split = "val";
  std::string out;
};

struct AblateArgs {
  std::string config;
  std::vector<int> bins{128, 256};
  std::vector<double> sigma_mults{0.25, 0.75, 2.0};
  std::string out_dir = "ablation";
  int jobs = 0;
};

struct EncodeArgs {
  double energy = 0.0;
  double lo = -2.0;
  double hi = 2.0;
  int bins = 128;
  double sigma_mult = 0.75;
};

int run_generate(const GenerateArgs& args) {
  const std::vector<Sample> samples = generate_dataset(args.spec);
  write_dataset(args.out, samples);
  std::cout << "samples " << samples.size() << "\n";
  std::cout << "out " << args.out << "\n";
  return 0;
}

int run_train(const TrainArgs& args, const CLI::App* cmd) {
  RunConfig cfg = args.config.empty() ? RunConfig{} : load_run_config(args.config);
  if (cmd->count("--mode") > 0) {
    cfg.mode = parse_mode(args.mode);
  }
  if (cfg.mode == Mode::baseline_mae) {
    if (cmd->count("--bins") > 0) {
      std::cerr << "warning: --bins is ignored in baseline mode\n";
    }
    if (cmd->count("--sigma-mult") > 0) {
      std::cerr << "warning: --sigma-mult is ignored in baseline mode\n";
    }
  }
  if (cmd->count("--bins") > 0) {
    cfg.grid.bins = args.bins;
  }
  if (cmd->count("--sigma-mult") > 0) {
    cfg.grid.sigma_mult = args.sigma_mult;
  }
  if (cmd->count("--dataset") > 0) {
    cfg.dataset_path = args.dataset;
  }
  if (!cfg.dataset_path.empty() && !std::filesystem::exists(cfg.dataset_path)) {
    throw std::invalid_argument("dataset file not found: " + cfg.dataset_path +
                                " (create one with `histloss generate --out " +
                                cfg.dataset_path + "`)");
  }
  cfg.out_dir = cmd->count("--out-dir") > 0 ? args.out_dir : under_out_root(cfg.out_dir);

  const RunResult result = train_run(cfg);
  std::cout << "mode " << mode_name(cfg.mode) << "\n";
  std::cout << "out_dir " << cfg.out_dir << "\n";
  std::cout << "val_energy_mae " << format_g17(result.val_eval.energy_mae) << "\n";
  std::cout << "val_force_mae " << format_g17(result.val_eval.force_mae) << "\n";
  return 0;
}

int run_eval(const EvalArgs& args, const CLI::App* cmd) {
  if (!std::filesystem::exists(args.checkpoint)) {
    throw std::invalid_argument("checkpoint not found: " + args.checkpoint);
  }
  if (!std::filesystem::exists(args.dataset)) {
    throw std::invalid_argument("dataset file not found: " + args.dataset);
  }
  const Checkpoint ckpt = load_checkpoint(args.checkpoint);
  const std::vector<Sample> data = read_dataset(args.dataset);

  std::vector<Sample> split;
  std::vector<std::size_t> original_index;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool in_val = is_validation_index(i);
    if (args.split == "all" || (args.split == "val" && in_val) ||
        (args.split == "train" && !in_val)) {
      split.push_back(data[i]);
      original_index.push_back(i);
    }
  }
  const EvalResult result = evaluate(ckpt, split);

  const std::string out = cmd->count("--out") > 0 ? args.out : under_out_root(args.out);
  std::string csv = "sample,e,e_hat,entropy,abs_error\n";
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const EvalRecord& rec = result.records[i];
    csv += std::to_string(original_index[i]);
    csv += ',' + format_g17(rec.e);
    csv += ',' + format_g17(rec.e_hat);
    csv += ',' + (rec.entropy.has_value() ? format_g17(*rec.entropy) : std::string());
    csv += ',' + format_g17(rec.abs_error);
    csv += '\n';
  }
  write_text_file(out, csv);

  std::cout << "split " << args.split << "\n";
  std::cout << "samples " << split.size() << "\n";
  std::cout << "energy_mae " << format_g17(result.energy_mae) << "\n";
  std::cout << "force_mae " << format_g17(result.force_mae) << "\n";
  std::cout << "out " << out << "\n";
  return 0;
}

int run_ablate(const AblateArgs& args, const CLI::App* cmd) {
  RunConfig base = args.config.empty() ? RunConfig{} : load_run_config(args.config);
  base.out_dir = cmd->count("--out-dir") > 0 ? args.out_dir : under_out_root("ablation");
  const std::vector<AblationRow> rows = ablate(base, args.bins, args.sigma_mults, args.jobs);
  const auto csv_path = std::filesystem::path(base.out_dir) / "ablation.csv";
  write_text_file(csv_path, ablation_csv(rows));

  std::cout << "out " << csv_path.string() << "\n";
  int failed = 0;
  for (const auto& row : rows) {
    if (row.stratum == "failed") {
      ++failed;
      std::cerr << "warning: cell " << row.variant << " failed\n";
    }
  }
  const std::optional<bool> trend = sigma_trend_pass(rows);
  std::cout << "sigma_trend " << (trend.has_value() ? (*trend ? "pass" : "warn") : "n/a")
            << "\n";
  return failed == 0 ? 0 : 3;
}

int run_encode(const EncodeArgs& args) {
  const BinGrid grid = make_grid(args.lo, args.hi, args.bins);
  const EncodeConfig cfg = make_encode_config(grid, args.sigma_mult);
  EncodeInfo info;
  const TargetHistogram target = encode_target(args.energy, cfg, grid, &info);
  if (info.off_grid) {
    std::cerr << "warning: energy " << format_g17(args.energy)
              << " lies effectively outside the grid (in-range mass "
              << format_g17(info.in_range_mass) << ")\n";
  }
  std::cout << "bin,center,prob\n";
  for (int i = 0; i < grid.k; ++i) {
    std::cout << i << ',' << format_g17(grid.centers[i]) << ',' << format_g17(target.probs[i])
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HL-Gauss histogram-loss training harness on a synthetic Lennard-Jones system"};
  app.name("histloss");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Print help for every subcommand");
  app.option_defaults()->always_capture_default();

  GenerateArgs gen;
  CLI::App* generate = app.add_subcommand("generate", "Generate a labeled toy dataset");
  generate->add_option("--seed", gen.spec.seed, "RNG seed for the sample stream");
  generate->add_option("--samples", gen.spec.n_samples, "Number of samples");
  generate->add_option("--atoms-min", gen.spec.atoms_min, "Minimum atoms per cluster");
  generate->add_option("--atoms-max", gen.spec.atoms_max, "Maximum atoms per cluster");
  generate->add_option("--rmin-factor", gen.spec.rmin_factor,
                       "Minimum pair distance as a fraction of sigma_ij");
  generate->add_option("--box-scale", gen.spec.box_scale, "Box side scale factor");
  generate->add_option("--out", gen.out, "Output dataset file")->required();

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train one model and write metrics");
  train_cmd->add_option("--config", train.config, "Run configuration file");
  train_cmd->add_option("--dataset", train.dataset,
                        "Dataset file (overrides the config's dataset path)");
  train_cmd->add_option("--mode", train.mode, "Training objective")
      ->check(CLI::IsMember({"hlgauss", "baseline"}));
  train_cmd->add_option("--bins", train.bins, "Histogram bin count (hlgauss)");
  train_cmd->add_option("--sigma-mult", train.sigma_mult,
                        "Gaussian sigma as a multiple of the bin width (hlgauss)");
  train_cmd->add_option("--out-dir", train.out_dir, "Run output directory");

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--dataset", eval.dataset, "Dataset file")->required();
  eval_cmd->add_option("--split", eval.split, "Evaluation split")
      ->check(CLI::IsMember({"train", "val", "all"}));
  eval_cmd->add_option("--out", eval.out, "Per-sample CSV output path")
      ->default_val(std::string("eval_samples.csv"));

  AblateArgs ablate_args;
  CLI::App* ablate_cmd =
      app.add_subcommand("ablate", "Sweep bin counts and sigma multipliers plus a baseline");
  ablate_cmd->add_option("--config", ablate_args.config, "Base run configuration file");
  ablate_cmd->add_option("--bins", ablate_args.bins, "Bin counts to sweep")->delimiter(',');
  ablate_cmd->add_option("--sigma-mults", ablate_args.sigma_mults, "Sigma multipliers to sweep")
      ->delimiter(',');
  ablate_cmd->add_option("--out-dir", ablate_args.out_dir, "Sweep output directory");
  ablate_cmd->add_option("--jobs", ablate_args.jobs,
                         "Worker pool size (0 = available cores, capped by grid size)");

  EncodeArgs enc;
  CLI::App* encode_cmd =
      app.add_subcommand("encode", "Print the histogram target for one energy");
  encode_cmd->add_option("--energy", enc.energy, "Energy to encode (eV/atom)")->required();
  encode_cmd->add_option("--lo", enc.lo, "Grid lower edge");
  encode_cmd->add_option("--hi", enc.hi, "Grid upper edge");
  encode_cmd->add_option("--bins", enc.bins, "Histogram bin count");
  encode_cmd->add_option("--sigma-mult", enc.sigma_mult,
                         "Gaussian sigma as a multiple of the bin width");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (generate->parsed()) {
      return run_generate(gen);
    }
    if (train_cmd->parsed()) {
      return run_train(train, train_cmd);
    }
    if (eval_cmd->parsed()) {
      return run_eval(eval, eval_cmd);
    }
    if (ablate_cmd->parsed()) {
      return run_ablate(ablate_args, ablate_cmd);
    }
    if (encode_cmd->parsed()) {
      return run_encode(enc);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
