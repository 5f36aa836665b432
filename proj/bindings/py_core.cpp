#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "histloss/codec.hpp"
#include "histloss/config_file.hpp"
#include "histloss/experiment.hpp"
#include "histloss/loss.hpp"
#include "histloss/model.hpp"
#include "histloss/toy_system.hpp"

namespace py = pybind11;
using namespace histloss;

namespace {

Configuration make_configuration(const std::vector<Vec3>& positions,
                                 const std::vector<int>& species) {
  Configuration c;
  c.positions = positions;
  c.species = species;
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "HL-Gauss histogram codec, losses, and toy training harness";

  py::class_<BinGrid>(m, "BinGrid")
      .def_readonly("k", &BinGrid::k)
      .def_readonly("lo", &BinGrid::lo)
      .def_readonly("hi", &BinGrid::hi)
      .def_readonly("width", &BinGrid::width)
      .def_readonly("centers", &BinGrid::centers)
      .def("left_edge", &BinGrid::left_edge, py::arg("i"))
      .def("__repr__", [](const BinGrid& g) {
        return "BinGrid(lo=" + std::to_string(g.lo) + ", hi=" + std::to_string(g.hi) +
               ", k=" + std::to_string(g.k) + ")";
      });

  m.def("make_grid", &make_grid, py::arg("lo"), py::arg("hi"), py::arg("k"),
        "Uniform energy grid with k bins over [lo, hi]");
  m.def("normal_cdf", &normal_cdf, py::arg("x"), "Standard normal CDF");
  m.def(
      "encode_target",
      [](double e, const BinGrid& grid, double sigma_mult) {
        return encode_target(e, make_encode_config(grid, sigma_mult), grid).probs;
      },
      py::arg("e"), py::arg("grid"), py::arg("sigma_mult") = 0.75,
      "Discretize a Gaussian around e into renormalized per-bin masses");
  m.def(
      "decode_expectation",
      [](const std::vector<double>& probs, const BinGrid& grid) {
        return decode_expectation(probs, grid);
      },
      py::arg("probs"), py::arg("grid"), "Expectation over bin centers");
  m.def(
      "entropy", [](const std::vector<double>& probs) { return entropy(probs); },
      py::arg("probs"), "Shannon entropy in nats");

  m.def(
      "softmax_with_temperature",
      [](const std::vector<double>& z, double temperature) {
        return softmax_with_temperature(z, temperature);
      },
      py::arg("logits"), py::arg("temperature"));
  m.def(
      "cross_entropy",
      [](const std::vector<double>& target, const std::vector<double>& predicted) {
        return cross_entropy(target, predicted);
      },
      py::arg("target"), py::arg("predicted"));
  m.def(
      "cross_entropy_grad_logits",
      [](const std::vector<double>& target, const std::vector<double>& logits,
         double temperature) { return cross_entropy_grad_logits(target, logits, temperature); },
      py::arg("target"), py::arg("logits"), py::arg("temperature"));
  m.def("mae_loss", &mae_loss, py::arg("e"), py::arg("e_hat"));
  m.def(
      "force_mae_loss",
      [](const std::vector<double>& f, const std::vector<double>& f_hat) {
        return force_mae_loss(f, f_hat);
      },
      py::arg("f"), py::arg("f_hat"));
  m.def(
      "combined_loss",
      [](double energy_loss, double force_loss, double energy_weight, double force_weight) {
        LossConfig cfg;
        cfg.energy_weight = energy_weight;
        cfg.force_weight = force_weight;
        return combined_loss(energy_loss, force_loss, cfg);
      },
      py::arg("energy_loss"), py::arg("force_loss"), py::arg("energy_weight") = 0.7,
      py::arg("force_weight") = 0.3);

  py::class_<Sample>(m, "Sample")
      .def_property_readonly("positions",
                             [](const Sample& s) { return s.config.positions; })
      .def_property_readonly("species", [](const Sample& s) { return s.config.species; })
      .def_readonly("per_atom_energy", &Sample::per_atom_energy)
      .def_readonly("forces", &Sample::forces)
      .def_property_readonly("n_atoms", [](const Sample& s) { return s.config.n_atoms(); });

  m.def(
      "lj_energy",
      [](const std::vector<Vec3>& positions, const std::vector<int>& species) {
        return lj_energy(make_configuration(positions, species));
      },
      py::arg("positions"), py::arg("species"),
      "Total Lennard-Jones energy (eV) with the built-in species table");
  m.def(
      "lj_forces",
      [](const std::vector<Vec3>& positions, const std::vector<int>& species) {
        return lj_forces(make_configuration(positions, species));
      },
      py::arg("positions"), py::arg("species"));
  m.def(
      "generate_dataset",
      [](std::uint64_t seed, int n_samples, int atoms_min, int atoms_max) {
        DatasetSpec spec;
        spec.seed = seed;
        spec.n_samples = n_samples;
        spec.atoms_min = atoms_min;
        spec.atoms_max = atoms_max;
        return generate_dataset(spec);
      },
      py::arg("seed") = 1, py::arg("n_samples") = 5000, py::arg("atoms_min") = 2,
      py::arg("atoms_max") = 8);
  m.def("write_dataset", &write_dataset, py::arg("path"), py::arg("samples"));
  m.def("read_dataset", &read_dataset, py::arg("path"));

  m.def(
      "pearson_r",
      [](const std::vector<double>& x, const std::vector<double>& y) { return pearson_r(x, y); },
      py::arg("x"), py::arg("y"), "Sample Pearson correlation, None on zero variance");

  py::enum_<Mode>(m, "Mode")
      .value("baseline", Mode::baseline_mae)
      .value("hlgauss", Mode::hl_gauss);

  py::class_<DatasetSpec>(m, "DatasetSpec")
      .def(py::init<>())
      .def_readwrite("seed", &DatasetSpec::seed)
      .def_readwrite("n_samples", &DatasetSpec::n_samples)
      .def_readwrite("atoms_min", &DatasetSpec::atoms_min)
      .def_readwrite("atoms_max", &DatasetSpec::atoms_max)
      .def_readwrite("rmin_factor", &DatasetSpec::rmin_factor)
      .def_readwrite("box_scale", &DatasetSpec::box_scale);

  py::class_<GridSpec>(m, "GridSpec")
      .def(py::init<>())
      .def_readwrite("bins", &GridSpec::bins)
      .def_readwrite("auto_range", &GridSpec::auto_range)
      .def_readwrite("lo", &GridSpec::lo)
      .def_readwrite("hi", &GridSpec::hi)
      .def_readwrite("sigma_mult", &GridSpec::sigma_mult);

  py::class_<LossConfig>(m, "LossConfig")
      .def(py::init<>())
      .def_readwrite("temperature", &LossConfig::temperature)
      .def_readwrite("energy_weight", &LossConfig::energy_weight)
      .def_readwrite("force_weight", &LossConfig::force_weight);

  py::class_<OptimizerConfig>(m, "OptimizerConfig")
      .def(py::init<>())
      .def_readwrite("lr", &OptimizerConfig::lr)
      .def_readwrite("weight_decay", &OptimizerConfig::weight_decay)
      .def_readwrite("warmup_steps", &OptimizerConfig::warmup_steps)
      .def_readwrite("total_steps", &OptimizerConfig::total_steps)
      .def_readwrite("lr_floor_frac", &OptimizerConfig::lr_floor_frac)
      .def_readwrite("batch_size", &OptimizerConfig::batch_size)
      .def_readwrite("clip_norm", &OptimizerConfig::clip_norm);

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_readwrite("mode", &RunConfig::mode)
      .def_readwrite("grid", &RunConfig::grid)
      .def_readwrite("loss", &RunConfig::loss)
      .def_readwrite("opt", &RunConfig::opt)
      .def_readwrite("dataset", &RunConfig::dataset)
      .def_readwrite("dataset_path", &RunConfig::dataset_path)
      .def_readwrite("width", &RunConfig::width)
      .def_readwrite("force_width", &RunConfig::force_width)
      .def_readwrite("init_seed", &RunConfig::init_seed)
      .def_readwrite("eval_interval", &RunConfig::eval_interval)
      .def_readwrite("eval_batch", &RunConfig::eval_batch)
      .def_readwrite("out_dir", &RunConfig::out_dir);

  m.def(
      "train_run",
      [](const RunConfig& cfg) {
        const RunResult result = train_run(cfg);
        py::dict out;
        out["val_energy_mae"] = result.val_eval.energy_mae;
        out["val_force_mae"] = result.val_eval.force_mae;
        out["out_dir"] = cfg.out_dir;
        py::list steps, energy_mae, pearson;
        for (const auto& row : result.metrics.rows) {
          steps.append(row.step);
          energy_mae.append(row.energy_mae);
          if (row.pearson_r.has_value()) {
            pearson.append(*row.pearson_r);
          } else {
            pearson.append(py::none());
          }
        }
        out["steps"] = steps;
        out["energy_mae"] = energy_mae;
        out["pearson_r"] = pearson;
        return out;
      },
      py::arg("config"),
      "Train per the config; writes metrics.csv, checkpoint.txt, and the config echo "
      "into config.out_dir and returns summary metrics");
  m.def("load_run_config", &load_run_config, py::arg("path"));
  m.def("run_config_text", &run_config_text, py::arg("config"));
}
