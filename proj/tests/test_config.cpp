#include "doctest.h"
#include "histloss/config_file.hpp"

using namespace histloss;

TEST_CASE("empty config text yields defaults") {
  const RunConfig cfg = parse_run_config("");
  CHECK(cfg.mode == Mode::hl_gauss);
  CHECK(cfg.grid.bins == 128);
  CHECK(cfg.grid.sigma_mult == 0.75);
  CHECK(cfg.loss.temperature == 2.0);
  CHECK(cfg.loss.energy_weight == 0.7);
  CHECK(cfg.loss.force_weight == 0.3);
  CHECK(cfg.opt.lr == 1e-3);
  CHECK(cfg.opt.total_steps == 5000);
  CHECK(cfg.dataset.seed == 1);
  CHECK(cfg.dataset.n_samples == 5000);
}

TEST_CASE("sections, comments, and overrides parse") {
  const std::string text =
      "# a comment\n"
      "[grid]\n"
      "bins = 256\n"
      "sigma_mult = 0.25\n"
      "\n"
      "[run]\n"
      "mode = baseline\n"
      "out_dir = /tmp/somewhere\n";
  const RunConfig cfg = parse_run_config(text);
  CHECK(cfg.grid.bins == 256);
  CHECK(cfg.grid.sigma_mult == 0.25);
  CHECK(cfg.mode == Mode::baseline_mae);
  CHECK(cfg.out_dir == "/tmp/somewhere");
  CHECK(cfg.opt.lr == 1e-3);  // untouched defaults remain
}

TEST_CASE("unknown keys are hard errors") {
  CHECK_THROWS_AS(parse_run_config("[grid]\nbinz = 128\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[gridz]\nbins = 128\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("bins = 128\n"), ConfigError);  // key before any section
  CHECK_THROWS_AS(parse_run_config("[grid]\nbins\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[grid]\nbins = twelve\n"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[grid]\nrange = sideways\n"), ConfigError);
}

TEST_CASE("mode aliases parse") {
  CHECK(parse_run_config("[run]\nmode = hl_gauss\n").mode == Mode::hl_gauss);
  CHECK(parse_run_config("[run]\nmode = baseline_mae\n").mode == Mode::baseline_mae);
  CHECK_THROWS(parse_run_config("[run]\nmode = linear\n"));
}
