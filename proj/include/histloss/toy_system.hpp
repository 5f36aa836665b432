#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace histloss {

using Vec3 = std::array<double, 3>;

struct LJSpecies {
  double epsilon;  // eV
  double sigma;    // Angstrom
};

// Pair parameters via Lorentz-Berthelot mixing.
struct LJTable {
  std::vector<LJSpecies> species;

  int count() const { return static_cast<int>(species.size()); }
  double epsilon(int a, int b) const;
  double sigma(int a, int b) const;
};

// Three species with distinct well depths and radii.
const LJTable& default_species_table();

struct Configuration {
  std::vector<Vec3> positions;  // Angstrom
  std::vector<int> species;     // indices into the LJ table

  int n_atoms() const { return static_cast<int>(positions.size()); }
};

struct Sample {
  Configuration config;
  double per_atom_energy = 0.0;  // total LJ energy / n_atoms, eV
  std::vector<Vec3> forces;      // -dE/dx, eV/Angstrom
};

// Total energy sum_{i<j} 4 eps [(sig/r)^12 - (sig/r)^6]. Throws if any pair
// distance is below the 1e-3 Angstrom hard floor.
double lj_energy(const Configuration& config, const LJTable& table = default_species_table());
std::vector<Vec3> lj_forces(const Configuration& config,
                            const LJTable& table = default_species_table());

struct DatasetSpec {
  std::uint64_t seed = 1;
  int n_samples = 5000;
  int atoms_min = 2;
  int atoms_max = 8;
  double rmin_factor = 0.8;  // min pair distance as a fraction of sigma_ij
  double box_scale = 1.7;    // box side = box_scale * mean(sigma) * cbrt(n)

  void validate() const;
};

// Deterministic rejection-sampled clusters; bit-identical streams per seed.
// Throws std::runtime_error when the placement budget is exhausted.
std::vector<Sample> generate_dataset(const DatasetSpec& spec,
                                     const LJTable& table = default_species_table());

// Line-oriented text format, one sample per record:
//   n_atoms
//   species x y z fx fy fz     (n_atoms lines)
//   per_atom_energy
// All floats printed with 17 significant digits for exact round trips.
std::string dataset_text(const std::vector<Sample>& samples);
void write_dataset(const std::filesystem::path& path, const std::vector<Sample>& samples);
std::vector<Sample> read_dataset(const std::filesystem::path& path);

// Fixed 90/10 split: sample index i is validation iff i % 10 == 9.
bool is_validation_index(std::size_t i);

// Species with the highest atom count, lowest index on ties. Used to
// stratify evaluation reports.
int dominant_species(const Configuration& config, int n_species);

}  // namespace histloss
