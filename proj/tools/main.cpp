#include <iostream>

#include <CLI11.hpp>

#include "stovar/cli.hpp"

namespace cli = stovar::cli;

namespace {

void add_model_out(CLI::App* sub, std::string& model, std::string& out) {
  sub->add_option("--model", model, "system description file")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--out", out, "output directory");
}

void add_mc_flags(CLI::App* sub, cli::McOptions& opt, bool& seed_seen) {
  sub->add_option("--sigma-scale", opt.sigma_scale, "multiply every noise sigma");
  sub->add_option("--n", opt.n, "number of realizations")->check(CLI::PositiveNumber);
  sub->add_option("--tf", opt.tf, "integration horizon [s] (default: heuristic)");
  sub->add_option("--dt", opt.dt, "step size [s]")->check(CLI::PositiveNumber);
  sub->add_option("--seed", opt.seed, "override the model file's seed")
      ->trigger_on_parse()
      ->each([&seed_seen](const std::string&) { seed_seen = true; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stationary variance of stochastic power system models"};
  app.require_subcommand(1);

  cli::PfOptions pf;
  CLI::App* pf_cmd = app.add_subcommand("pf", "solve the power flow");
  add_model_out(pf_cmd, pf.model_path, pf.out_dir);

  cli::LemOptions lem;
  CLI::App* lem_cmd =
      app.add_subcommand("lem", "analytic stationary sigmas (Lyapunov route)");
  add_model_out(lem_cmd, lem.model_path, lem.out_dir);
  lem_cmd->add_option("--sigma-scale", lem.sigma_scale, "multiply every noise sigma");
  lem_cmd->add_flag("--dump-cov", lem.dump_cov, "also write C.csv and K.csv");

  cli::McOptions mc;
  CLI::App* mc_cmd =
      app.add_subcommand("mc", "Monte Carlo stationary sigmas (ensemble route)");
  add_model_out(mc_cmd, mc.model_path, mc.out_dir);
  add_mc_flags(mc_cmd, mc, mc.seed_set);

  cli::McOptions conv;
  CLI::App* conv_cmd =
      app.add_subcommand("convergence", "ensemble convergence diagnostics");
  add_model_out(conv_cmd, conv.model_path, conv.out_dir);
  add_mc_flags(conv_cmd, conv, conv.seed_set);

  cli::CompareOptions cmp;
  CLI::App* cmp_cmd =
      app.add_subcommand("compare", "join the analytic and Monte Carlo routes");
  cmp_cmd->add_option("--lem", cmp.lem_dir, "directory with the analytic sigmas")
      ->required();
  cmp_cmd->add_option("--mc", cmp.mc_dir, "directory with the Monte Carlo sigmas")
      ->required();
  cmp_cmd->add_option("--out", cmp.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kInputError;
  }

  if (pf_cmd->parsed()) return cli::cmd_pf(pf, std::cerr);
  if (lem_cmd->parsed()) return cli::cmd_lem(lem, std::cerr);
  if (mc_cmd->parsed()) return cli::cmd_mc(mc, std::cerr);
  if (conv_cmd->parsed()) return cli::cmd_convergence(conv, std::cerr);
  if (cmp_cmd->parsed()) return cli::cmd_compare(cmp, std::cerr);
  return cli::kInputError;
}
