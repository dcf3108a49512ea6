#include <CLI11.hpp>

#include "ppko/cli_commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Polynomial parametric Koopman SMPC toolkit"};
  app.require_subcommand(1);

  ppko::CliOptions opt;
  std::string config;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out, dataset, model;
  int quad_nodes = 0;
  int horizon = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "config file (TOML)")->required();
    cmd->add_option("--seed", seed, "override [run] seed");
    cmd->add_option("--threads", threads, "worker threads (1 = fully deterministic)");
    cmd->add_option("--out", out, "override output directory");
    cmd->add_option("--quad-nodes", quad_nodes, "override quadrature nodes per dimension");
    cmd->add_option("--horizon", horizon, "override SMPC horizon");
    cmd->add_option("--dataset", dataset, "dataset file path");
    cmd->add_option("--model", model, "model file path");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "simulate the training protocol");
  CLI::App* train = app.add_subcommand("train", "fit the lifted model from a dataset");
  CLI::App* validate = app.add_subcommand("validate", "open-loop envelopes vs Monte Carlo");
  CLI::App* smpc = app.add_subcommand("smpc", "closed-loop receding-horizon runs");
  CLI::App* bench = app.add_subcommand("bench", "dimension-independence benchmark");
  for (CLI::App* cmd : {gen, train, validate, smpc, bench}) add_common(cmd);

  CLI11_PARSE(app, argc, argv);

  opt.config_path = config;
  if (gen->count("--seed") || train->count("--seed") || validate->count("--seed") ||
      smpc->count("--seed") || bench->count("--seed"))
    opt.seed = seed;
  if (threads > 0) opt.threads = threads;
  if (!out.empty()) opt.out_dir = out;
  if (quad_nodes > 0) opt.quad_nodes = quad_nodes;
  if (horizon > 0) opt.horizon = horizon;
  if (!dataset.empty()) opt.dataset_path = dataset;
  if (!model.empty()) opt.model_path = model;

  if (gen->parsed()) return ppko::cmd_gen_data(opt);
  if (train->parsed()) return ppko::cmd_train(opt);
  if (validate->parsed()) return ppko::cmd_validate(opt);
  if (smpc->parsed()) return ppko::cmd_smpc(opt);
  if (bench->parsed()) return ppko::cmd_bench(opt);
  return 1;
}
