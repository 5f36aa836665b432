#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "histloss/codec.hpp"
#include "histloss/loss.hpp"
#include "histloss/model.hpp"
#include "histloss/toy_system.hpp"

namespace histloss {

enum class Mode { baseline_mae, hl_gauss };

std::string mode_name(Mode mode);
Mode parse_mode(const std::string& name);

struct GridSpec {
  int bins = 128;
  bool auto_range = true;  // span [min - 3 sigma, max + 3 sigma] of training energies
  double lo = 0.0;         // used only when auto_range is false
  double hi = 0.0;
  double sigma_mult = 0.75;
};

// Solves the auto-range fixed point: sigma depends on the bin width, which
// depends on the padded span. Requires bins > 6 * sigma_mult.
BinGrid resolve_grid(const GridSpec& spec, std::span<const double> train_energies);

struct RunConfig {
  Mode mode = Mode::hl_gauss;
  GridSpec grid;
  LossConfig loss;
  OptimizerConfig opt;
  DatasetSpec dataset;
  std::string dataset_path;  // when set, load this file instead of generating
  int width = 128;
  int force_width = 64;
  std::uint64_t init_seed = 2025;
  int eval_interval = 250;
  int eval_batch = 256;
  std::string out_dir = "run";

  void validate() const;
};

struct MetricsRow {
  long step = 0;
  double energy_mae = 0.0;
  double force_mae = 0.0;
  std::optional<double> mean_entropy;  // hl_gauss only
  std::optional<double> pearson_r;     // hl_gauss only; held-out eval batch
  double lr = 0.0;
};

struct RunMetrics {
  std::vector<MetricsRow> rows;
};

// Everything needed to evaluate a trained model standalone.
struct Checkpoint {
  Mode mode = Mode::hl_gauss;
  double temperature = 2.0;
  double sigma_mult = 0.75;
  BinGrid grid;  // empty (k == 0) in baseline mode
  ModelState model;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EvalRecord {
  double e = 0.0;
  double e_hat = 0.0;
  std::optional<double> entropy;  // hl_gauss only
  double abs_error = 0.0;
  double force_mae = 0.0;  // per-sample mean component error
  int dominant_species = 0;
};

struct EvalResult {
  double energy_mae = 0.0;
  double force_mae = 0.0;
  std::vector<EvalRecord> records;
};

struct RunResult {
  RunMetrics metrics;
  Checkpoint checkpoint;
  std::uint64_t dataset_hash = 0;
  // Pearson series on a fixed training-data probe batch, same protocol as
  // the held-out series in metrics.
  std::vector<std::pair<long, std::optional<double>>> train_pearson;
  EvalResult val_eval;  // final-model evaluation over the full validation split
};

// Trains per the config and writes metrics.csv, pearson_train.csv,
// run_config.echo, and checkpoint.txt into out_dir. Aborts (std::runtime_error)
// on non-finite loss/parameters or when more than 1% of training labels fall
// outside the histogram grid.
RunResult train_run(const RunConfig& cfg);

EvalResult evaluate(const Checkpoint& ckpt, std::span<const Sample> split);

// Sample Pearson correlation; nullopt when either vector has zero variance.
std::optional<double> pearson_r(std::span<const double> x, std::span<const double> y);

// One eval step's per-sample uncertainty/error pairs.
struct EvalSnapshot {
  long step = 0;
  std::vector<double> entropies;
  std::vector<double> abs_errors;
};

// Per-step Pearson series between entropy and absolute error; null entries
// are recorded, not dropped.
std::vector<std::pair<long, std::optional<double>>> entropy_error_track(
    std::span<const EvalSnapshot> snapshots);

struct AblationRow {
  std::string variant;
  std::optional<int> bins;
  std::optional<double> sigma_mult;
  std::string stratum;  // species<i>, "overall", or "failed"
  std::optional<double> energy_mae;
  std::optional<double> force_mae;
};

// One train + evaluate per unique (bins, sigma_mult) cell plus a baseline
// row, all on the identical dataset and trunk seed. Cell failures are
// recorded as `failed` rows without aborting the sweep. `jobs` bounds the
// worker pool (0 = hardware concurrency).
std::vector<AblationRow> ablate(const RunConfig& base, std::span<const int> bin_counts,
                                std::span<const double> sigma_mults, int jobs = 0);

// True when the 0.75-sigma cell has the lowest overall energy MAE among the
// sigma cells at `bins` bins; nullopt when the sweep lacks those cells.
std::optional<bool> sigma_trend_pass(std::span<const AblationRow> rows, int bins = 128,
                                     double best_sigma = 0.75);

// metrics.csv: step,energy_mae,force_mae,mean_entropy,pearson_r,lr
// (null rendered as an empty field)
std::string metrics_csv(const RunMetrics& metrics);
// step,pearson_r series as emitted by entropy_error_track
std::string pearson_series_csv(std::span<const std::pair<long, std::optional<double>>> series);
// ablation.csv: variant,bins,sigma_mult,stratum,energy_mae,force_mae
std::string ablation_csv(std::span<const AblationRow> rows);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace histloss
