#ifndef MFVI_CONFIG_HPP
#define MFVI_CONFIG_HPP

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfvi {

struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Full run specification. Defaults reproduce the 2D toy setup.
struct ExperimentConfig {
  // problem
  std::vector<double> gamma_list = {3.0, 2.0, 1.0, 0.0};
  double gamma = 3.0;  // single-run commands
  double sigma = 0.4;
  std::size_t n_pretrain_pairs = 5000;
  bool x_true_explicit = false;
  double x_true_1 = 0.0, x_true_2 = 0.0;  // used when x_true_explicit

  // flow architecture
  std::size_t blocks_per_lane = 8;
  std::size_t hidden_width = 64;
  double scale_clamp = 5.0;

  // pretraining (conditional MLE)
  int pretrain_epochs = 25;
  std::size_t pretrain_batch = 64;
  double pretrain_lr = 1e-3;
  double pretrain_decay = 0.9;

  // variational fine-tuning / from-scratch baseline
  std::size_t n_latent = 1000;
  int finetune_epochs = 5;
  int scratch_epochs = 25;
  std::size_t vi_batch = 64;
  double vi_lr = 1e-3;
  double vi_decay = 0.9;

  // SGLD reference sampler (calibration choices; the schedule is
  // eps_t = step_a * (step_b + t)^(-step_gamma))
  std::size_t sgld_steps = 2'200'000;
  double sgld_step_a = 4.0;
  double sgld_step_b = 1e6;
  double sgld_step_gamma = 0.55;
  std::size_t sgld_burn_in = 100'000;
  std::size_t sgld_stride = 21;

  // evaluation
  std::size_t n_eval = 10'000;
  std::size_t n_samples = 1000;
  double grid_half_width = 8.0;
  std::size_t grid_points = 400;

  // seeds (explicit; no wall-clock seeding)
  std::uint64_t seed_data = 101;
  std::uint64_t seed_init = 202;
  std::uint64_t seed_train = 303;
  std::uint64_t seed_eval = 404;

  std::string out_dir = "out";
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string dump_config(const ExperimentConfig& c) {
  using detail::fmt_double;
  std::ostringstream os;
  os << "[problem]\n";
  os << "gamma_list = ";
  for (std::size_t i = 0; i < c.gamma_list.size(); ++i)
    os << (i ? "," : "") << fmt_double(c.gamma_list[i]);
  os << "\n";
  os << "gamma = " << fmt_double(c.gamma) << "\n";
  os << "sigma = " << fmt_double(c.sigma) << "\n";
  os << "n_pretrain_pairs = " << c.n_pretrain_pairs << "\n";
  if (c.x_true_explicit)
    os << "x_true = " << fmt_double(c.x_true_1) << ","
       << fmt_double(c.x_true_2) << "\n";
  os << "\n[flow]\n";
  os << "blocks_per_lane = " << c.blocks_per_lane << "\n";
  os << "hidden_width = " << c.hidden_width << "\n";
  os << "scale_clamp = " << fmt_double(c.scale_clamp) << "\n";
  os << "\n[pretrain]\n";
  os << "epochs = " << c.pretrain_epochs << "\n";
  os << "batch_size = " << c.pretrain_batch << "\n";
  os << "lr = " << fmt_double(c.pretrain_lr) << "\n";
  os << "decay = " << fmt_double(c.pretrain_decay) << "\n";
  os << "\n[vi]\n";
  os << "n_latent = " << c.n_latent << "\n";
  os << "finetune_epochs = " << c.finetune_epochs << "\n";
  os << "scratch_epochs = " << c.scratch_epochs << "\n";
  os << "batch_size = " << c.vi_batch << "\n";
  os << "lr = " << fmt_double(c.vi_lr) << "\n";
  os << "decay = " << fmt_double(c.vi_decay) << "\n";
  os << "\n[sgld]\n";
  os << "n_steps = " << c.sgld_steps << "\n";
  os << "step_a = " << fmt_double(c.sgld_step_a) << "\n";
  os << "step_b = " << fmt_double(c.sgld_step_b) << "\n";
  os << "step_gamma = " << fmt_double(c.sgld_step_gamma) << "\n";
  os << "burn_in = " << c.sgld_burn_in << "\n";
  os << "stride = " << c.sgld_stride << "\n";
  os << "\n[eval]\n";
  os << "n_eval = " << c.n_eval << "\n";
  os << "n_samples = " << c.n_samples << "\n";
  os << "grid_half_width = " << fmt_double(c.grid_half_width) << "\n";
  os << "grid_points = " << c.grid_points << "\n";
  os << "\n[seeds]\n";
  os << "data = " << c.seed_data << "\n";
  os << "init = " << c.seed_init << "\n";
  os << "train = " << c.seed_train << "\n";
  os << "eval = " << c.seed_eval << "\n";
  os << "\n[output]\n";
  os << "dir = " << c.out_dir << "\n";
  return os.str();
}

namespace detail {

inline void apply_config_entry(ExperimentConfig& c, const std::string& section,
                               const std::string& key,
                               const std::string& value) {
  auto as_double = [&] {
    try {
      return std::stod(value);
    } catch (const std::exception&) {
      throw config_error("bad numeric value for " + section + "." + key);
    }
  };
  auto as_size = [&] {
    try {
      return static_cast<std::size_t>(std::stoull(value));
    } catch (const std::exception&) {
      throw config_error("bad integer value for " + section + "." + key);
    }
  };
  auto as_int = [&] { return static_cast<int>(as_size()); };
  auto as_u64 = [&] {
    try {
      return static_cast<std::uint64_t>(std::stoull(value));
    } catch (const std::exception&) {
      throw config_error("bad seed value for " + section + "." + key);
    }
  };
  const std::string id = section + "." + key;
  if (id == "problem.gamma_list") {
    c.gamma_list.clear();
    std::istringstream is(value);
    std::string tok;
    while (std::getline(is, tok, ','))
      c.gamma_list.push_back(std::stod(trim(tok)));
    if (c.gamma_list.empty()) throw config_error("gamma_list is empty");
  } else if (id == "problem.gamma") {
    c.gamma = as_double();
  } else if (id == "problem.sigma") {
    c.sigma = as_double();
  } else if (id == "problem.n_pretrain_pairs") {
    c.n_pretrain_pairs = as_size();
  } else if (id == "problem.x_true") {
    std::istringstream is(value);
    std::string a, b;
    if (!std::getline(is, a, ',') || !std::getline(is, b, ','))
      throw config_error("x_true needs two comma-separated values");
    c.x_true_explicit = true;
    c.x_true_1 = std::stod(trim(a));
    c.x_true_2 = std::stod(trim(b));
  } else if (id == "flow.blocks_per_lane") {
    c.blocks_per_lane = as_size();
  } else if (id == "flow.hidden_width") {
    c.hidden_width = as_size();
  } else if (id == "flow.scale_clamp") {
    c.scale_clamp = as_double();
  } else if (id == "pretrain.epochs") {
    c.pretrain_epochs = as_int();
  } else if (id == "pretrain.batch_size") {
    c.pretrain_batch = as_size();
  } else if (id == "pretrain.lr") {
    c.pretrain_lr = as_double();
  } else if (id == "pretrain.decay") {
    c.pretrain_decay = as_double();
  } else if (id == "vi.n_latent") {
    c.n_latent = as_size();
  } else if (id == "vi.finetune_epochs") {
    c.finetune_epochs = as_int();
  } else if (id == "vi.scratch_epochs") {
    c.scratch_epochs = as_int();
  } else if (id == "vi.batch_size") {
    c.vi_batch = as_size();
  } else if (id == "vi.lr") {
    c.vi_lr = as_double();
  } else if (id == "vi.decay") {
    c.vi_decay = as_double();
  } else if (id == "sgld.n_steps") {
    c.sgld_steps = as_size();
  } else if (id == "sgld.step_a") {
    c.sgld_step_a = as_double();
  } else if (id == "sgld.step_b") {
    c.sgld_step_b = as_double();
  } else if (id == "sgld.step_gamma") {
    c.sgld_step_gamma = as_double();
  } else if (id == "sgld.burn_in") {
    c.sgld_burn_in = as_size();
  } else if (id == "sgld.stride") {
    c.sgld_stride = as_size();
  } else if (id == "eval.n_eval") {
    c.n_eval = as_size();
  } else if (id == "eval.n_samples") {
    c.n_samples = as_size();
  } else if (id == "eval.grid_half_width") {
    c.grid_half_width = as_double();
  } else if (id == "eval.grid_points") {
    c.grid_points = as_size();
  } else if (id == "seeds.data") {
    c.seed_data = as_u64();
  } else if (id == "seeds.init") {
    c.seed_init = as_u64();
  } else if (id == "seeds.train") {
    c.seed_train = as_u64();
  } else if (id == "seeds.eval") {
    c.seed_eval = as_u64();
  } else if (id == "output.dir") {
    c.out_dir = value;
  } else {
    throw config_error("unknown config key: " + id);
  }
}

}  // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig c;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("line " + std::to_string(lineno) +
                         ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    detail::apply_config_entry(c, section, key, value);
  }
  if (c.n_pretrain_pairs == 0 || c.n_latent == 0 || c.blocks_per_lane == 0 ||
      c.hidden_width == 0 || c.grid_points < 2)
    throw config_error("all counts must be positive");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw config_error("cannot open config file " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return parse_config_text(os.str());
}

/// FNV-1a over the canonical dump; embedded in output headers as provenance.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  const std::string s = dump_config(c);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace mfvi

#endif  // MFVI_CONFIG_HPP
