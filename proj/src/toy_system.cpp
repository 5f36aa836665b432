#include "histloss/toy_system.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "histloss/rng.hpp"
#include "histloss/util.hpp"

namespace histloss {

namespace {
constexpr double kDistanceFloor = 1e-3;  // Angstrom

double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

void check_species(const Configuration& config, const LJTable& table) {
  if (config.species.size() != config.positions.size()) {
    throw std::invalid_argument("configuration: species/position count mismatch");
  }
  for (int s : config.species) {
    if (s < 0 || s >= table.count()) {
      throw std::invalid_argument("configuration: species index " + std::to_string(s) +
                                  " outside table of size " + std::to_string(table.count()));
    }
  }
}
}  // namespace

double LJTable::epsilon(int a, int b) const {
  return std::sqrt(species[a].epsilon * species[b].epsilon);
}

double LJTable::sigma(int a, int b) const {
  return 0.5 * (species[a].sigma + species[b].sigma);
}

const LJTable& default_species_table() {
  static const LJTable table{{{0.20, 2.5}, {0.35, 3.0}, {0.50, 3.4}}};
  return table;
}

double lj_energy(const Configuration& config, const LJTable& table) {
  check_species(config, table);
  const int n = config.n_atoms();
  double energy = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double r2 = squared_distance(config.positions[i], config.positions[j]);
      if (r2 < kDistanceFloor * kDistanceFloor) {
        throw std::invalid_argument("lj_energy: pair distance below the 1e-3 Angstrom floor");
      }
      const double s2 = table.sigma(config.species[i], config.species[j]);
      const double sr2 = s2 * s2 / r2;
      const double sr6 = sr2 * sr2 * sr2;
      energy += 4.0 * table.epsilon(config.species[i], config.species[j]) * (sr6 * sr6 - sr6);
    }
  }
  return energy;
}

std::vector<Vec3> lj_forces(const Configuration& config, const LJTable& table) {
  check_species(config, table);
  const int n = config.n_atoms();
  std::vector<Vec3> forces(n, Vec3{0.0, 0.0, 0.0});
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double r2 = squared_distance(config.positions[i], config.positions[j]);
      if (r2 < kDistanceFloor * kDistanceFloor) {
        throw std::invalid_argument("lj_forces: pair distance below the 1e-3 Angstrom floor");
      }
      const double s = table.sigma(config.species[i], config.species[j]);
      const double eps = table.epsilon(config.species[i], config.species[j]);
      const double sr2 = s * s / r2;
      const double sr6 = sr2 * sr2 * sr2;
      // F_i = -dE/dx_i = 24 eps (2 (s/r)^12 - (s/r)^6) / r^2 * (x_i - x_j)
      const double scale = 24.0 * eps * (2.0 * sr6 * sr6 - sr6) / r2;
      for (int d = 0; d < 3; ++d) {
        const double fd = scale * (config.positions[i][d] - config.positions[j][d]);
        forces[i][d] += fd;
        forces[j][d] -= fd;
      }
    }
  }
  return forces;
}

void DatasetSpec::validate() const {
  if (n_samples < 1) {
    throw std::invalid_argument("dataset: n_samples must be >= 1");
  }
  if (atoms_min < 2 || atoms_max < atoms_min) {
    throw std::invalid_argument("dataset: need 2 <= atoms_min <= atoms_max, got [" +
                                std::to_string(atoms_min) + ", " + std::to_string(atoms_max) +
                                "]");
  }
  if (!(rmin_factor > 0.0) || !(box_scale > 0.0)) {
    throw std::invalid_argument("dataset: rmin_factor and box_scale must be positive");
  }
}

std::vector<Sample> generate_dataset(const DatasetSpec& spec, const LJTable& table) {
  spec.validate();
  Rng rng(spec.seed);
  double mean_sigma = 0.0;
  for (const auto& s : table.species) {
    mean_sigma += s.sigma;
  }
  mean_sigma /= table.count();

  constexpr int kMaxAtomAttempts = 1000;
  constexpr int kMaxConfigAttempts = 100;

  std::vector<Sample> samples;
  samples.reserve(spec.n_samples);
  for (int idx = 0; idx < spec.n_samples; ++idx) {
    const int n = spec.atoms_min +
                  static_cast<int>(rng.below(spec.atoms_max - spec.atoms_min + 1));
    const double side = spec.box_scale * mean_sigma * std::cbrt(static_cast<double>(n));

    Configuration config;
    config.species.resize(n);
    for (int i = 0; i < n; ++i) {
      config.species[i] = static_cast<int>(rng.below(table.count()));
    }

    bool placed = false;
    for (int attempt = 0; attempt < kMaxConfigAttempts && !placed; ++attempt) {
      config.positions.clear();
      placed = true;
      for (int i = 0; i < n && placed; ++i) {
        bool accepted = false;
        for (int t = 0; t < kMaxAtomAttempts && !accepted; ++t) {
          const Vec3 cand{rng.uniform(0.0, side), rng.uniform(0.0, side),
                          rng.uniform(0.0, side)};
          accepted = true;
          for (int j = 0; j < i; ++j) {
            const double rmin =
                spec.rmin_factor * table.sigma(config.species[i], config.species[j]);
            if (squared_distance(cand, config.positions[j]) < rmin * rmin) {
              accepted = false;
              break;
            }
          }
          if (accepted) {
            config.positions.push_back(cand);
          }
        }
        placed = accepted;
      }
    }
    if (!placed) {
      throw std::runtime_error(
          "generate_dataset: placement budget exhausted; density settings are infeasible "
          "(sample " +
          std::to_string(idx) + ")");
    }

    Sample sample;
    sample.per_atom_energy = lj_energy(config, table) / n;
    sample.forces = lj_forces(config, table);
    sample.config = std::move(config);
    samples.push_back(std::move(sample));
  }
  return samples;
}

std::string dataset_text(const std::vector<Sample>& samples) {
  std::string out;
  for (const auto& sample : samples) {
    const int n = sample.config.n_atoms();
    out += std::to_string(n);
    out += '\n';
    for (int i = 0; i < n; ++i) {
      out += std::to_string(sample.config.species[i]);
      for (int d = 0; d < 3; ++d) {
        out += ' ';
        out += format_g17(sample.config.positions[i][d]);
      }
      for (int d = 0; d < 3; ++d) {
        out += ' ';
        out += format_g17(sample.forces[i][d]);
      }
      out += '\n';
    }
    out += format_g17(sample.per_atom_energy);
    out += '\n';
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  std::ofstream file(path, std::ios::binary);
  if (!file) {
    throw std::runtime_error("write_dataset: cannot open " + path.string());
  }
  file << dataset_text(samples);
  if (!file) {
    throw std::runtime_error("write_dataset: write failed for " + path.string());
  }
}

std::vector<Sample> read_dataset(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) {
    throw std::invalid_argument("read_dataset: cannot open " + path.string());
  }
  std::vector<Sample> samples;
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&](const char* what) {
    if (!std::getline(file, line)) {
      throw std::runtime_error("read_dataset: unexpected end of file, expected " +
                               std::string(what) + " near line " + std::to_string(line_no));
    }
    ++line_no;
  };

  while (true) {
    if (!std::getline(file, line)) {
      break;  // clean end of file
    }
    ++line_no;
    if (line.empty()) {
      continue;
    }
    Sample sample;
    const int n = std::stoi(line);
    if (n < 2) {
      throw std::runtime_error("read_dataset: bad atom count at line " + std::to_string(line_no));
    }
    sample.config.positions.resize(n);
    sample.config.species.resize(n);
    sample.forces.resize(n);
    for (int i = 0; i < n; ++i) {
      next_line("atom record");
      std::istringstream ss(line);
      ss >> sample.config.species[i];
      for (int d = 0; d < 3; ++d) ss >> sample.config.positions[i][d];
      for (int d = 0; d < 3; ++d) ss >> sample.forces[i][d];
      if (!ss) {
        throw std::runtime_error("read_dataset: malformed atom record at line " +
                                 std::to_string(line_no));
      }
    }
    next_line("per-atom energy");
    sample.per_atom_energy = std::stod(line);
    samples.push_back(std::move(sample));
  }
  return samples;
}

bool is_validation_index(std::size_t i) { return i % 10 == 9; }

int dominant_species(const Configuration& config, int n_species) {
  std::vector<int> counts(n_species, 0);
  for (int s : config.species) {
    if (s >= 0 && s < n_species) {
      ++counts[s];
    }
  }
  int best = 0;
  for (int s = 1; s < n_species; ++s) {
    if (counts[s] > counts[best]) {
      best = s;
    }
  }
  return best;
}

}  // namespace histloss
