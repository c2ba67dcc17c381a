// Experiment driver: pretrain -> fine-tune pipeline, from-scratch baseline,
// gamma sweep, sampling and SGLD cross-check, all emitting CSV artifacts.

#include <cstdio>
#include <exception>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfvi/experiment.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::vector<double> gamma;
  bool has_seed = false;
  std::uint64_t seed = 0;
  bool print_config = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "Config file path");
  cmd->add_option("--out", f.out_dir, "Output directory");
  cmd->add_option("--gamma", f.gamma, "Gamma value(s); overrides the config");
  cmd->add_option("--seed", f.seed, "Master seed; derives all seed streams")
      ->each([&f](const std::string&) { f.has_seed = true; });
  cmd->add_flag("--print-config", f.print_config,
                "Dump the effective config and exit");
}

mfvi::ExperimentConfig effective_config(const CommonFlags& f) {
  mfvi::ExperimentConfig c;
  if (!f.config_path.empty()) c = mfvi::load_config(f.config_path);
  if (!f.out_dir.empty()) c.out_dir = f.out_dir;
  if (!f.gamma.empty()) {
    c.gamma_list = f.gamma;
    c.gamma = f.gamma.front();
  }
  if (f.has_seed) {
    c.seed_data = mfvi::derive_seed(f.seed, 1);
    c.seed_init = mfvi::derive_seed(f.seed, 2);
    c.seed_train = mfvi::derive_seed(f.seed, 3);
    c.seed_eval = mfvi::derive_seed(f.seed, 4);
  }
  return c;
}

// 0 success, 1 usage/config error, 2 numerical failure, 3 I/O failure.
int run_guarded(const CommonFlags& flags,
                const std::function<void(const mfvi::ExperimentConfig&)>& body) {
  try {
    mfvi::ExperimentConfig c = effective_config(flags);
    if (flags.print_config) {
      std::cout << mfvi::dump_config(c);
      return 0;
    }
    body(c);
    return 0;
  } catch (const mfvi::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const mfvi::io_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const mfvi::numeric_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-fidelity preconditioned conditional normalizing flows "
               "for a 2D Bayesian inverse problem"};
  app.require_subcommand(1);

  CommonFlags f_pre, f_fin, f_scr, f_swp, f_smp, f_mc;
  std::string ckpt_fin, ckpt_smp;
  std::size_t n_samples = 1000;

  auto* pre = app.add_subcommand("pretrain",
                                 "Train the conditional flow on low-fidelity pairs");
  add_common(pre, f_pre);

  auto* fin = app.add_subcommand("finetune",
                                 "Variational fine-tuning of a pretrained flow");
  add_common(fin, f_fin);
  fin->add_option("--checkpoint", ckpt_fin, "Pretrained checkpoint")->required();

  auto* scr = app.add_subcommand("scratch", "From-scratch variational baseline");
  add_common(scr, f_scr);

  auto* swp = app.add_subcommand("sweep", "Gamma sweep emitting the KL table");
  add_common(swp, f_swp);

  auto* smp = app.add_subcommand("sample", "Draw posterior samples from a checkpoint");
  add_common(smp, f_smp);
  smp->add_option("--checkpoint", ckpt_smp, "Flow checkpoint")->required();
  smp->add_option("--n", n_samples, "Number of samples");

  auto* mc = app.add_subcommand("mcmc", "SGLD reference chain for the posterior");
  add_common(mc, f_mc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  if (pre->parsed())
    return run_guarded(f_pre, [](const auto& c) { mfvi::cmd_pretrain(c); });
  if (fin->parsed())
    return run_guarded(
        f_fin, [&](const auto& c) { mfvi::cmd_finetune(c, ckpt_fin); });
  if (scr->parsed())
    return run_guarded(f_scr, [](const auto& c) { mfvi::cmd_scratch(c); });
  if (swp->parsed())
    return run_guarded(f_swp, [](const auto& c) {
      auto rows = mfvi::cmd_sweep(c);
      for (const auto& r : rows)
        std::printf("gamma=%g kl_low=%.4g kl_scratch=%.4g kl_precond=%.4g\n",
                    r.gamma, r.kl_low_fidelity, r.kl_scratch,
                    r.kl_preconditioned);
    });
  if (smp->parsed())
    return run_guarded(f_smp, [&](const auto& c) {
      mfvi::cmd_sample(c, ckpt_smp, n_samples);
    });
  if (mc->parsed())
    return run_guarded(f_mc, [](const auto& c) { mfvi::cmd_mcmc(c); });
  return 1;
}
