#include "histloss/config_file.hpp"

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstdlib>
#include <functional>
#include <map>

#include "histloss/util.hpp"

namespace histloss {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) {
    return {};
  }
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size() || value.empty() || errno == ERANGE) {
    throw ConfigError("config: bad numeric value for " + key + ": '" + value + "'");
  }
  return x;
}

long long parse_int(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(value.c_str(), &end, 10);
  if (end != value.c_str() + value.size() || value.empty() || errno == ERANGE) {
    throw ConfigError("config: bad integer value for " + key + ": '" + value + "'");
  }
  return x;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(value.c_str(), &end, 10);
  if (end != value.c_str() + value.size() || value.empty() || errno == ERANGE) {
    throw ConfigError("config: bad unsigned value for " + key + ": '" + value + "'");
  }
  return x;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;

  using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"dataset.seed", [](RunConfig& c, auto& k, auto& v) { c.dataset.seed = parse_u64(k, v); }},
      {"dataset.samples",
       [](RunConfig& c, auto& k, auto& v) { c.dataset.n_samples = static_cast<int>(parse_int(k, v)); }},
      {"dataset.atoms_min",
       [](RunConfig& c, auto& k, auto& v) { c.dataset.atoms_min = static_cast<int>(parse_int(k, v)); }},
      {"dataset.atoms_max",
       [](RunConfig& c, auto& k, auto& v) { c.dataset.atoms_max = static_cast<int>(parse_int(k, v)); }},
      {"dataset.rmin_factor",
       [](RunConfig& c, auto& k, auto& v) { c.dataset.rmin_factor = parse_double(k, v); }},
      {"dataset.box_scale",
       [](RunConfig& c, auto& k, auto& v) { c.dataset.box_scale = parse_double(k, v); }},
      {"dataset.path", [](RunConfig& c, auto&, auto& v) { c.dataset_path = v; }},
      {"grid.bins",
       [](RunConfig& c, auto& k, auto& v) { c.grid.bins = static_cast<int>(parse_int(k, v)); }},
      {"grid.range",
       [](RunConfig& c, auto& k, auto& v) {
         if (v == "auto") {
           c.grid.auto_range = true;
         } else if (v == "explicit") {
           c.grid.auto_range = false;
         } else {
           throw ConfigError("config: " + k + " must be 'auto' or 'explicit', got '" + v + "'");
         }
       }},
      {"grid.lo", [](RunConfig& c, auto& k, auto& v) { c.grid.lo = parse_double(k, v); }},
      {"grid.hi", [](RunConfig& c, auto& k, auto& v) { c.grid.hi = parse_double(k, v); }},
      {"grid.sigma_mult",
       [](RunConfig& c, auto& k, auto& v) { c.grid.sigma_mult = parse_double(k, v); }},
      {"loss.temperature",
       [](RunConfig& c, auto& k, auto& v) { c.loss.temperature = parse_double(k, v); }},
      {"loss.energy_weight",
       [](RunConfig& c, auto& k, auto& v) { c.loss.energy_weight = parse_double(k, v); }},
      {"loss.force_weight",
       [](RunConfig& c, auto& k, auto& v) { c.loss.force_weight = parse_double(k, v); }},
      {"optimizer.lr", [](RunConfig& c, auto& k, auto& v) { c.opt.lr = parse_double(k, v); }},
      {"optimizer.weight_decay",
       [](RunConfig& c, auto& k, auto& v) { c.opt.weight_decay = parse_double(k, v); }},
      {"optimizer.warmup_steps",
       [](RunConfig& c, auto& k, auto& v) { c.opt.warmup_steps = static_cast<int>(parse_int(k, v)); }},
      {"optimizer.total_steps",
       [](RunConfig& c, auto& k, auto& v) { c.opt.total_steps = static_cast<int>(parse_int(k, v)); }},
      {"optimizer.lr_floor_frac",
       [](RunConfig& c, auto& k, auto& v) { c.opt.lr_floor_frac = parse_double(k, v); }},
      {"optimizer.batch_size",
       [](RunConfig& c, auto& k, auto& v) { c.opt.batch_size = static_cast<int>(parse_int(k, v)); }},
      {"optimizer.clip_norm",
       [](RunConfig& c, auto& k, auto& v) { c.opt.clip_norm = parse_double(k, v); }},
      {"model.width",
       [](RunConfig& c, auto& k, auto& v) { c.width = static_cast<int>(parse_int(k, v)); }},
      {"model.force_width",
       [](RunConfig& c, auto& k, auto& v) { c.force_width = static_cast<int>(parse_int(k, v)); }},
      {"model.init_seed",
       [](RunConfig& c, auto& k, auto& v) { c.init_seed = parse_u64(k, v); }},
      {"run.mode", [](RunConfig& c, auto&, auto& v) { c.mode = parse_mode(v); }},
      {"run.eval_interval",
       [](RunConfig& c, auto& k, auto& v) { c.eval_interval = static_cast<int>(parse_int(k, v)); }},
      {"run.eval_batch",
       [](RunConfig& c, auto& k, auto& v) { c.eval_batch = static_cast<int>(parse_int(k, v)); }},
      {"run.out_dir", [](RunConfig& c, auto&, auto& v) { c.out_dir = v; }},
  };
  static const std::array<std::string, 6> known_sections = {"dataset", "grid",  "loss",
                                                            "optimizer", "model", "run"};

  std::string section;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    std::string line = text.substr(start, nl == std::string::npos ? std::string::npos
                                                                  : nl - start);
    start = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    line = trim(line);
    if (line.empty() || line[0] == '#') {
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config: malformed section header at line " + std::to_string(line_no));
      }
      section = trim(line.substr(1, line.size() - 2));
      if (std::find(known_sections.begin(), known_sections.end(), section) ==
          known_sections.end()) {
        throw ConfigError("config: unknown section [" + section + "] at line " +
                          std::to_string(line_no));
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: expected 'key = value' at line " + std::to_string(line_no) +
                        ": '" + line + "'");
    }
    if (section.empty()) {
      throw ConfigError("config: key outside any section at line " + std::to_string(line_no));
    }
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw ConfigError("config: unknown key '" + key + "' at line " + std::to_string(line_no));
    }
    it->second(cfg, key, value);
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_text_file(path));
}

std::string run_config_text(const RunConfig& cfg) {
  std::string out;
  out += "[dataset]\n";
  out += "seed = " + std::to_string(cfg.dataset.seed) + "\n";
  out += "samples = " + std::to_string(cfg.dataset.n_samples) + "\n";
  out += "atoms_min = " + std::to_string(cfg.dataset.atoms_min) + "\n";
  out += "atoms_max = " + std::to_string(cfg.dataset.atoms_max) + "\n";
  out += "rmin_factor = " + format_g17(cfg.dataset.rmin_factor) + "\n";
  out += "box_scale = " + format_g17(cfg.dataset.box_scale) + "\n";
  out += "path = " + cfg.dataset_path + "\n";
  out += "\n[grid]\n";
  out += "bins = " + std::to_string(cfg.grid.bins) + "\n";
  out += std::string("range = ") + (cfg.grid.auto_range ? "auto" : "explicit") + "\n";
  out += "lo = " + format_g17(cfg.grid.lo) + "\n";
  out += "hi = " + format_g17(cfg.grid.hi) + "\n";
  out += "sigma_mult = " + format_g17(cfg.grid.sigma_mult) + "\n";
  out += "\n[loss]\n";
  out += "temperature = " + format_g17(cfg.loss.temperature) + "\n";
  out += "energy_weight = " + format_g17(cfg.loss.energy_weight) + "\n";
  out += "force_weight = " + format_g17(cfg.loss.force_weight) + "\n";
  out += "\n[optimizer]\n";
  out += "lr = " + format_g17(cfg.opt.lr) + "\n";
  out += "weight_decay = " + format_g17(cfg.opt.weight_decay) + "\n";
  out += "warmup_steps = " + std::to_string(cfg.opt.warmup_steps) + "\n";
  out += "total_steps = " + std::to_string(cfg.opt.total_steps) + "\n";
  out += "lr_floor_frac = " + format_g17(cfg.opt.lr_floor_frac) + "\n";
  out += "batch_size = " + std::to_string(cfg.opt.batch_size) + "\n";
  out += "clip_norm = " + format_g17(cfg.opt.clip_norm) + "\n";
  out += "\n[model]\n";
  out += "width = " + std::to_string(cfg.width) + "\n";
  out += "force_width = " + std::to_string(cfg.force_width) + "\n";
  out += "init_seed = " + std::to_string(cfg.init_seed) + "\n";
  out += "\n[run]\n";
  out += "mode = " + mode_name(cfg.mode) + "\n";
  out += "eval_interval = " + std::to_string(cfg.eval_interval) + "\n";
  out += "eval_batch = " + std::to_string(cfg.eval_batch) + "\n";
  out += "out_dir = " + cfg.out_dir + "\n";
  return out;
}

}  // namespace histloss
