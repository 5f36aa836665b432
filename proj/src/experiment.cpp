#include "histloss/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "histloss/config_file.hpp"
#include "histloss/rng.hpp"
#include "histloss/util.hpp"

namespace histloss {

namespace {

std::vector<double> flatten_forces(const Sample& sample) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(3) * sample.forces.size());
  for (const auto& f : sample.forces) {
    flat.insert(flat.end(), f.begin(), f.end());
  }
  return flat;
}

struct SamplePrediction {
  double e_hat = 0.0;
  std::optional<double> entropy_nats;
  double force_mae = 0.0;
};

SamplePrediction predict_sample(const ModelState& model, Mode mode, const BinGrid& grid,
                                double temperature, const Descriptor& desc,
                                const Sample& sample) {
  const Prediction out = forward(model, desc);
  SamplePrediction pred;
  if (mode == Mode::hl_gauss) {
    const std::vector<double> probs = softmax_with_temperature(out.energy_out, temperature);
    pred.e_hat = decode_expectation(probs, grid);
    pred.entropy_nats = entropy(probs);
  } else {
    pred.e_hat = out.energy_out[0];
  }
  pred.force_mae = force_mae_loss(flatten_forces(sample), out.forces);
  return pred;
}

std::string csv_field(const std::optional<double>& v) {
  return v.has_value() ? format_g17(*v) : std::string();
}

std::string hex_u64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string mode_name(Mode mode) {
  return mode == Mode::baseline_mae ? "baseline" : "hlgauss";
}

Mode parse_mode(const std::string& name) {
  if (name == "baseline" || name == "baseline_mae") {
    return Mode::baseline_mae;
  }
  if (name == "hlgauss" || name == "hl_gauss") {
    return Mode::hl_gauss;
  }
  throw std::invalid_argument("unknown mode '" + name + "' (expected hlgauss or baseline)");
}

BinGrid resolve_grid(const GridSpec& spec, std::span<const double> train_energies) {
  if (!spec.auto_range) {
    return make_grid(spec.lo, spec.hi, spec.bins);
  }
  if (train_energies.empty()) {
    throw std::invalid_argument("resolve_grid: no training energies for the auto range");
  }
  const auto [mn_it, mx_it] = std::minmax_element(train_energies.begin(), train_energies.end());
  const double span = std::max(*mx_it - *mn_it, 1e-6);
  // Fixed point of sigma = mult * w with a 3-sigma pad on each side:
  // w = span / (k - 6 * mult).
  const double denom = spec.bins - 6.0 * spec.sigma_mult;
  if (denom <= 0.0) {
    throw std::invalid_argument("resolve_grid: bins must exceed 6 * sigma_mult for the auto range");
  }
  const double w = span / denom;
  const double pad = 3.0 * spec.sigma_mult * w;
  return make_grid(*mn_it - pad, *mx_it + pad, spec.bins);
}

void RunConfig::validate() const {
  loss.validate();
  opt.validate();
  dataset.validate();
  if (width < 1 || force_width < 1) {
    throw std::invalid_argument("run config: model widths must be positive");
  }
  if (eval_interval < 1 || eval_batch < 1) {
    throw std::invalid_argument("run config: eval_interval and eval_batch must be >= 1");
  }
  if (mode == Mode::hl_gauss) {
    if (grid.bins < 2) {
      throw std::invalid_argument("run config: hlgauss mode needs at least 2 bins");
    }
    if (!(grid.sigma_mult > 0.0)) {
      throw std::invalid_argument("run config: hlgauss mode needs sigma_mult > 0");
    }
    if (!grid.auto_range && !(grid.hi > grid.lo)) {
      throw std::invalid_argument("run config: explicit grid range needs hi > lo");
    }
  }
}

std::optional<double> pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("pearson_r: length mismatch");
  }
  if (x.size() < 2) {
    throw std::invalid_argument("pearson_r: need at least 2 points");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    return std::nullopt;
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<std::pair<long, std::optional<double>>> entropy_error_track(
    std::span<const EvalSnapshot> snapshots) {
  std::vector<std::pair<long, std::optional<double>>> series;
  series.reserve(snapshots.size());
  for (const auto& snap : snapshots) {
    if (snap.entropies.size() != snap.abs_errors.size()) {
      throw std::invalid_argument("entropy_error_track: snapshot length mismatch");
    }
    std::optional<double> r;
    if (snap.entropies.size() >= 2) {
      r = pearson_r(snap.entropies, snap.abs_errors);
    }
    series.emplace_back(snap.step, r);
  }
  return series;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::string text;
  text += "histloss-checkpoint v1\n";
  text += "mode " + mode_name(ckpt.mode) + "\n";
  text += "temperature " + format_g17(ckpt.temperature) + "\n";
  text += "sigma_mult " + format_g17(ckpt.sigma_mult) + "\n";
  if (ckpt.grid.k >= 2) {
    text += "grid " + format_g17(ckpt.grid.lo) + " " + format_g17(ckpt.grid.hi) + " " +
            std::to_string(ckpt.grid.k) + "\n";
  } else {
    text += "grid none\n";
  }
  const ModelConfig& mc = ckpt.model.cfg;
  text += "max_atoms " + std::to_string(mc.desc.max_atoms) + "\n";
  text += "n_species " + std::to_string(mc.desc.n_species) + "\n";
  text += "width " + std::to_string(mc.width) + "\n";
  text += "force_width " + std::to_string(mc.force_width) + "\n";
  text += "energy_outputs " + std::to_string(mc.energy_outputs) + "\n";
  text += "init_seed " + std::to_string(mc.init_seed) + "\n";
  text += "step " + std::to_string(ckpt.model.step) + "\n";

  auto dump_group = [&text](const char* group, const NetParams& p) {
    p.for_each([&text, group](const char* name, const std::vector<double>& v) {
      text += std::string("tensor ") + group + " " + name + " " + std::to_string(v.size()) + "\n";
      for (double x : v) {
        text += format_g17(x);
        text += '\n';
      }
    });
  };
  dump_group("params", ckpt.model.params);
  dump_group("m", ckpt.model.m);
  dump_group("v", ckpt.model.v);
  write_text_file(path, text);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) {
    throw std::invalid_argument("load_checkpoint: cannot open " + path.string());
  }
  std::string line;
  auto fail = [&path](const std::string& why) -> std::runtime_error {
    return std::runtime_error("load_checkpoint: " + why + " in " + path.string());
  };
  if (!std::getline(file, line) || line != "histloss-checkpoint v1") {
    throw fail("bad header");
  }

  Checkpoint ckpt;
  ModelConfig mc;
  long step = 0;
  double grid_lo = 0.0, grid_hi = 0.0;
  int grid_k = 0;
  for (;;) {
    if (!std::getline(file, line)) {
      throw fail("truncated metadata");
    }
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "mode") {
      std::string v;
      ss >> v;
      ckpt.mode = parse_mode(v);
    } else if (key == "temperature") {
      ss >> ckpt.temperature;
    } else if (key == "sigma_mult") {
      ss >> ckpt.sigma_mult;
    } else if (key == "grid") {
      std::string first;
      ss >> first;
      if (first != "none") {
        grid_lo = std::stod(first);
        ss >> grid_hi >> grid_k;
      }
    } else if (key == "max_atoms") {
      ss >> mc.desc.max_atoms;
    } else if (key == "n_species") {
      ss >> mc.desc.n_species;
    } else if (key == "width") {
      ss >> mc.width;
    } else if (key == "force_width") {
      ss >> mc.force_width;
    } else if (key == "energy_outputs") {
      ss >> mc.energy_outputs;
    } else if (key == "init_seed") {
      ss >> mc.init_seed;
    } else if (key == "step") {
      ss >> step;
      break;  // last metadata line
    } else {
      throw fail("unknown metadata key '" + key + "'");
    }
    if (!ss) {
      throw fail("malformed metadata line '" + line + "'");
    }
  }
  if (grid_k >= 2) {
    ckpt.grid = make_grid(grid_lo, grid_hi, grid_k);
  }

  ckpt.model = init_model(mc);
  ckpt.model.step = step;
  auto load_group = [&](NetParams& p) {
    p.for_each([&](const char* name, std::vector<double>& v) {
      if (!std::getline(file, line)) {
        throw fail("truncated tensor header");
      }
      std::istringstream hs(line);
      std::string tag, group_name, tensor_name;
      std::size_t count = 0;
      hs >> tag >> group_name >> tensor_name >> count;
      if (!hs || tag != "tensor" || tensor_name != name || count != v.size()) {
        throw fail("tensor header mismatch at '" + line + "', expected " + name);
      }
      for (std::size_t i = 0; i < count; ++i) {
        if (!std::getline(file, line)) {
          throw fail("truncated tensor data");
        }
        v[i] = std::stod(line);
      }
    });
  };
  load_group(ckpt.model.params);
  load_group(ckpt.model.m);
  load_group(ckpt.model.v);
  return ckpt;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalResult evaluate(const Checkpoint& ckpt, std::span<const Sample> split) {
  if (split.empty()) {
    throw std::invalid_argument("evaluate: empty split");
  }
  EvalResult result;
  result.records.reserve(split.size());
  double energy_sum = 0.0;
  double force_sum = 0.0;
  for (const Sample& sample : split) {
    const Descriptor desc = featurize(sample.config, ckpt.model.cfg.desc);
    const SamplePrediction pred =
        predict_sample(ckpt.model, ckpt.mode, ckpt.grid, ckpt.temperature, desc, sample);
    EvalRecord rec;
    rec.e = sample.per_atom_energy;
    rec.e_hat = pred.e_hat;
    rec.entropy = pred.entropy_nats;
    rec.abs_error = std::abs(rec.e - rec.e_hat);
    rec.force_mae = pred.force_mae;
    rec.dominant_species = dominant_species(sample.config, ckpt.model.cfg.desc.n_species);
    energy_sum += rec.abs_error;
    force_sum += pred.force_mae;
    result.records.push_back(rec);
  }
  result.energy_mae = energy_sum / static_cast<double>(split.size());
  result.force_mae = force_sum / static_cast<double>(split.size());
  return result;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct BatchSampler {
  explicit BatchSampler(std::size_t n, std::uint64_t seed) : order(n), rng(seed) {
    for (std::size_t i = 0; i < n; ++i) {
      order[i] = i;
    }
    cursor = n;  // force a shuffle on first use
  }

  std::size_t next() {
    if (cursor >= order.size()) {
      // Fisher-Yates reshuffle at each epoch boundary.
      for (std::size_t i = order.size() - 1; i > 0; --i) {
        std::swap(order[i], order[rng.below(i + 1)]);
      }
      cursor = 0;
    }
    return order[cursor++];
  }

  std::vector<std::size_t> order;
  std::size_t cursor = 0;
  Rng rng;
};

struct BatchStats {
  double energy_mae = 0.0;
  double force_mae = 0.0;
  std::optional<double> mean_entropy;
  std::vector<double> entropies;
  std::vector<double> abs_errors;
};

BatchStats batch_metrics(const ModelState& model, Mode mode, const BinGrid& grid,
                         double temperature, const std::vector<Descriptor>& descs,
                         const std::vector<Sample>& data,
                         std::span<const std::size_t> indices) {
  BatchStats stats;
  stats.entropies.reserve(indices.size());
  stats.abs_errors.reserve(indices.size());
  double entropy_sum = 0.0;
  for (std::size_t idx : indices) {
    const SamplePrediction pred =
        predict_sample(model, mode, grid, temperature, descs[idx], data[idx]);
    const double abs_err = std::abs(data[idx].per_atom_energy - pred.e_hat);
    stats.energy_mae += abs_err;
    stats.force_mae += pred.force_mae;
    stats.abs_errors.push_back(abs_err);
    if (pred.entropy_nats.has_value()) {
      entropy_sum += *pred.entropy_nats;
      stats.entropies.push_back(*pred.entropy_nats);
    }
  }
  const double n = static_cast<double>(indices.size());
  stats.energy_mae /= n;
  stats.force_mae /= n;
  if (mode == Mode::hl_gauss) {
    stats.mean_entropy = entropy_sum / n;
  }
  return stats;
}

}  // namespace

RunResult train_run(const RunConfig& cfg) {
  cfg.validate();

  std::vector<Sample> data =
      cfg.dataset_path.empty() ? generate_dataset(cfg.dataset) : read_dataset(cfg.dataset_path);
  if (data.size() < 2) {
    throw std::runtime_error("train_run: dataset needs at least 2 samples");
  }
  const std::uint64_t data_hash = [&data] {
    const std::string text = dataset_text(data);
    return fnv1a(text.data(), text.size());
  }();

  std::vector<std::size_t> train_idx, val_idx;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (is_validation_index(i) ? val_idx : train_idx).push_back(i);
  }
  if (train_idx.empty() || val_idx.empty()) {
    throw std::runtime_error("train_run: dataset too small for the 90/10 split");
  }

  DescriptorSpec desc_spec;
  desc_spec.n_species = default_species_table().count();
  int observed_max = 0;
  for (const auto& s : data) {
    observed_max = std::max(observed_max, s.config.n_atoms());
  }
  desc_spec.max_atoms = cfg.dataset_path.empty() ? std::max(cfg.dataset.atoms_max, observed_max)
                                                 : observed_max;

  // Grid + encoded targets (classification mode only).
  BinGrid grid;
  EncodeConfig enc;
  std::vector<TargetHistogram> targets(data.size());
  std::size_t off_grid_labels = 0;
  std::size_t low_mass_flags = 0;
  if (cfg.mode == Mode::hl_gauss) {
    std::vector<double> train_energies;
    train_energies.reserve(train_idx.size());
    for (std::size_t idx : train_idx) {
      train_energies.push_back(data[idx].per_atom_energy);
    }
    grid = resolve_grid(cfg.grid, train_energies);
    enc = make_encode_config(grid, cfg.grid.sigma_mult);
    for (std::size_t idx : train_idx) {
      const double e = data[idx].per_atom_energy;
      EncodeInfo info;
      targets[idx] = encode_target(e, enc, grid, &info);
      if (e < grid.lo || e > grid.hi) {
        ++off_grid_labels;
      }
      if (info.off_grid) {
        ++low_mass_flags;
      }
    }
    if (static_cast<double>(off_grid_labels) > 0.01 * static_cast<double>(train_idx.size())) {
      throw std::runtime_error(
          "train_run: " + std::to_string(off_grid_labels) + " of " +
          std::to_string(train_idx.size()) +
          " training labels fall outside the histogram grid (> 1%); widen the grid range");
    }
  }

  std::vector<Descriptor> descs(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    descs[i] = featurize(data[i].config, desc_spec);
  }

  ModelConfig mc;
  mc.desc = desc_spec;
  mc.width = cfg.width;
  mc.force_width = cfg.force_width;
  mc.energy_outputs = cfg.mode == Mode::hl_gauss ? cfg.grid.bins : 1;
  mc.init_seed = cfg.init_seed;
  ModelState model = init_model(mc);

  const std::size_t eval_n = std::min<std::size_t>(cfg.eval_batch, val_idx.size());
  const std::size_t probe_n = std::min<std::size_t>(cfg.eval_batch, train_idx.size());
  const std::span<const std::size_t> eval_batch(val_idx.data(), eval_n);
  const std::span<const std::size_t> probe_batch(train_idx.data(), probe_n);

  RunMetrics metrics;
  std::vector<EvalSnapshot> val_snaps, train_snaps;
  auto record_eval = [&](long step) {
    const BatchStats val_stats = batch_metrics(model, cfg.mode, grid, cfg.loss.temperature,
                                               descs, data, eval_batch);
    const BatchStats probe_stats = batch_metrics(model, cfg.mode, grid, cfg.loss.temperature,
                                                 descs, data, probe_batch);
    if (cfg.mode == Mode::hl_gauss) {
      val_snaps.push_back({step, val_stats.entropies, val_stats.abs_errors});
      train_snaps.push_back({step, probe_stats.entropies, probe_stats.abs_errors});
    }
    MetricsRow row;
    row.step = step;
    row.energy_mae = val_stats.energy_mae;
    row.force_mae = val_stats.force_mae;
    row.mean_entropy = val_stats.mean_entropy;
    row.lr = lr_at(cfg.opt, step);
    metrics.rows.push_back(std::move(row));
  };

  const std::size_t batch_size = std::min<std::size_t>(cfg.opt.batch_size, train_idx.size());
  BatchSampler sampler(train_idx.size(), cfg.init_seed ^ 0x9e3779b97f4a7c15ULL);
  NetParams grads = zeros_like(model.params);
  ForwardTrace trace;
  std::vector<std::size_t> batch(batch_size);

  for (long step = 0; step < cfg.opt.total_steps; ++step) {
    if (step % cfg.eval_interval == 0) {
      record_eval(step);
    }
    for (std::size_t& slot : batch) {
      slot = train_idx[sampler.next()];
    }

    zero(grads);
    double energy_term = 0.0;
    double force_term = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch_size);
    for (std::size_t idx : batch) {
      forward_trace(model, descs[idx], trace);
      std::vector<double> d_energy;
      if (cfg.mode == Mode::hl_gauss) {
        energy_term +=
            cross_entropy(targets[idx].probs,
                          softmax_with_temperature(trace.out.energy_out, cfg.loss.temperature)) *
            inv_b;
        d_energy = cross_entropy_grad_logits(targets[idx].probs, trace.out.energy_out,
                                             cfg.loss.temperature);
      } else {
        const double e = data[idx].per_atom_energy;
        energy_term += mae_loss(e, trace.out.energy_out[0]) * inv_b;
        d_energy.assign(1, mae_grad(e, trace.out.energy_out[0]));
      }
      for (double& g : d_energy) {
        g *= cfg.loss.energy_weight * inv_b;
      }

      const std::vector<double> f_true = flatten_forces(data[idx]);
      force_term += force_mae_loss(f_true, trace.out.forces) * inv_b;
      std::vector<double> d_forces = force_mae_grad(f_true, trace.out.forces);
      for (double& g : d_forces) {
        g *= cfg.loss.force_weight * inv_b;
      }
      backward(model, descs[idx], trace, d_energy, d_forces, grads);
    }

    const double total = combined_loss(energy_term, force_term, cfg.loss);
    if (!std::isfinite(total)) {
      throw std::runtime_error("train_run: non-finite loss at step " + std::to_string(step));
    }
    optimizer_step(model, grads, cfg.opt);
  }
  record_eval(cfg.opt.total_steps);

  RunResult result;
  result.metrics = std::move(metrics);
  std::vector<std::pair<long, std::optional<double>>> val_series;
  if (cfg.mode == Mode::hl_gauss) {
    // Attach the held-out Pearson series to the metrics rows.
    val_series = entropy_error_track(val_snaps);
    for (std::size_t i = 0; i < val_series.size(); ++i) {
      result.metrics.rows[i].pearson_r = val_series[i].second;
    }
    result.train_pearson = entropy_error_track(train_snaps);
  }
  result.dataset_hash = data_hash;
  result.checkpoint.mode = cfg.mode;
  result.checkpoint.temperature = cfg.loss.temperature;
  result.checkpoint.sigma_mult = cfg.grid.sigma_mult;
  result.checkpoint.grid = grid;
  result.checkpoint.model = std::move(model);

  std::vector<Sample> val_samples;
  val_samples.reserve(val_idx.size());
  for (std::size_t idx : val_idx) {
    val_samples.push_back(data[idx]);
  }
  result.val_eval = evaluate(result.checkpoint, val_samples);

  // Outputs.
  const std::filesystem::path out_dir(cfg.out_dir);
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "metrics.csv", metrics_csv(result.metrics));
  if (cfg.mode == Mode::hl_gauss) {
    write_text_file(out_dir / "pearson_val.csv", pearson_series_csv(val_series));
    write_text_file(out_dir / "pearson_train.csv", pearson_series_csv(result.train_pearson));
  }
  save_checkpoint(out_dir / "checkpoint.txt", result.checkpoint);

  std::string echo = run_config_text(cfg);
  echo += "\n# resolved\n";
  echo += "# dataset_hash = " + hex_u64(result.dataset_hash) + "\n";
  echo += "# trunk_hash = " + hex_u64(trunk_hash(result.checkpoint.model)) + "\n";
  echo += "# max_atoms = " + std::to_string(desc_spec.max_atoms) + "\n";
  if (cfg.mode == Mode::hl_gauss) {
    echo += "# grid_lo = " + format_g17(grid.lo) + "\n";
    echo += "# grid_hi = " + format_g17(grid.hi) + "\n";
    echo += "# grid_width = " + format_g17(grid.width) + "\n";
    echo += "# sigma = " + format_g17(enc.sigma) + "\n";
    echo += "# train_labels_off_grid = " + std::to_string(off_grid_labels) + "\n";
    echo += "# train_targets_low_mass = " + std::to_string(low_mass_flags) + "\n";
  }
  echo += "# val_energy_mae = " + format_g17(result.val_eval.energy_mae) + "\n";
  echo += "# val_force_mae = " + format_g17(result.val_eval.force_mae) + "\n";
  write_text_file(out_dir / "run_config.echo", echo);

  return result;
}

// ---------------------------------------------------------------------------
// Ablation sweep

std::vector<AblationRow> ablate(const RunConfig& base, std::span<const int> bin_counts,
                                std::span<const double> sigma_mults, int jobs) {
  struct Cell {
    std::string variant;
    std::optional<int> bins;
    std::optional<double> sigma;
  };
  std::vector<Cell> cells;
  cells.push_back({"baseline", std::nullopt, std::nullopt});
  for (int bins : bin_counts) {
    for (double sigma : sigma_mults) {
      const bool seen = std::any_of(cells.begin(), cells.end(), [&](const Cell& c) {
        return c.bins == bins && c.sigma == sigma;
      });
      if (seen) {
        continue;
      }
      char label[64];
      std::snprintf(label, sizeof(label), "hl_k%d_s%g", bins, sigma);
      cells.push_back({label, bins, sigma});
    }
  }

  struct CellOutcome {
    bool ok = false;
    std::string error;
    EvalResult eval;
    std::uint64_t dataset_hash = 0;
  };
  std::vector<CellOutcome> outcomes(cells.size());

  auto run_cell = [&](std::size_t i) {
    const Cell& cell = cells[i];
    RunConfig cfg = base;
    cfg.mode = cell.bins.has_value() ? Mode::hl_gauss : Mode::baseline_mae;
    if (cell.bins.has_value()) {
      cfg.grid.bins = *cell.bins;
      cfg.grid.sigma_mult = *cell.sigma;
    }
    cfg.out_dir = (std::filesystem::path(base.out_dir) / "cells" / cell.variant).string();
    try {
      RunResult result = train_run(cfg);
      outcomes[i] = {true, {}, std::move(result.val_eval), result.dataset_hash};
    } catch (const std::exception& e) {
      outcomes[i] = {false, e.what(), {}, 0};
    }
  };

  std::size_t worker_count = jobs > 0 ? static_cast<std::size_t>(jobs)
                                      : std::max(1u, std::thread::hardware_concurrency());
  worker_count = std::min(worker_count, cells.size());
  if (worker_count <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      run_cell(i);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(worker_count);
    for (std::size_t w = 0; w < worker_count; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
          run_cell(i);
        }
      });
    }
    for (auto& t : workers) {
      t.join();
    }
  }

  // All cells must have trained on byte-identical data.
  std::optional<std::uint64_t> shared_hash;
  for (const auto& outcome : outcomes) {
    if (!outcome.ok) {
      continue;
    }
    if (shared_hash.has_value() && *shared_hash != outcome.dataset_hash) {
      throw std::runtime_error("ablate: dataset hash mismatch across cells");
    }
    shared_hash = outcome.dataset_hash;
  }

  const int n_species = default_species_table().count();
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const Cell& cell = cells[i];
    const CellOutcome& outcome = outcomes[i];
    if (!outcome.ok) {
      rows.push_back({cell.variant, cell.bins, cell.sigma, "failed", std::nullopt, std::nullopt});
      continue;
    }
    for (int s = 0; s < n_species; ++s) {
      double esum = 0.0, fsum = 0.0;
      std::size_t count = 0;
      for (const EvalRecord& rec : outcome.eval.records) {
        if (rec.dominant_species != s) {
          continue;
        }
        esum += rec.abs_error;
        fsum += rec.force_mae;
        ++count;
      }
      AblationRow row{cell.variant, cell.bins, cell.sigma, "species" + std::to_string(s),
                      std::nullopt, std::nullopt};
      if (count > 0) {
        row.energy_mae = esum / static_cast<double>(count);
        row.force_mae = fsum / static_cast<double>(count);
      }
      rows.push_back(row);
    }
    rows.push_back({cell.variant, cell.bins, cell.sigma, "overall", outcome.eval.energy_mae,
                    outcome.eval.force_mae});
  }
  return rows;
}

std::optional<bool> sigma_trend_pass(std::span<const AblationRow> rows, int bins,
                                     double best_sigma) {
  std::optional<double> best_mae;
  double lowest = std::numeric_limits<double>::infinity();
  int sigma_cells = 0;
  for (const auto& row : rows) {
    if (row.stratum != "overall" || !row.bins.has_value() || *row.bins != bins ||
        !row.energy_mae.has_value()) {
      continue;
    }
    ++sigma_cells;
    lowest = std::min(lowest, *row.energy_mae);
    if (row.sigma_mult.has_value() && *row.sigma_mult == best_sigma) {
      best_mae = *row.energy_mae;
    }
  }
  if (!best_mae.has_value() || sigma_cells < 2) {
    return std::nullopt;
  }
  return *best_mae <= lowest;
}

// ---------------------------------------------------------------------------
// CSV emission

std::string metrics_csv(const RunMetrics& metrics) {
  std::string out = "step,energy_mae,force_mae,mean_entropy,pearson_r,lr\n";
  for (const auto& row : metrics.rows) {
    out += std::to_string(row.step);
    out += ',' + format_g17(row.energy_mae);
    out += ',' + format_g17(row.force_mae);
    out += ',' + csv_field(row.mean_entropy);
    out += ',' + csv_field(row.pearson_r);
    out += ',' + format_g17(row.lr);
    out += '\n';
  }
  return out;
}

std::string pearson_series_csv(
    std::span<const std::pair<long, std::optional<double>>> series) {
  std::string out = "step,pearson_r\n";
  for (const auto& [step, r] : series) {
    out += std::to_string(step);
    out += ',' + csv_field(r);
    out += '\n';
  }
  return out;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::string out = "variant,bins,sigma_mult,stratum,energy_mae,force_mae\n";
  for (const auto& row : rows) {
    out += row.variant;
    out += ',' + (row.bins.has_value() ? std::to_string(*row.bins) : std::string());
    out += ',' + (row.sigma_mult.has_value() ? format_g17(*row.sigma_mult) : std::string());
    out += ',' + row.stratum;
    out += ',' + csv_field(row.energy_mae);
    out += ',' + csv_field(row.force_mae);
    out += '\n';
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  file << text;
  if (!file) {
    throw std::runtime_error("write failed for " + path.string());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) {
    throw std::invalid_argument("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << file.rdbuf();
  return ss.str();
}

}  // namespace histloss
