#include <exception>
#include <iostream>

#include "CLI11.hpp"
#include "anodev2/cli.hpp"

int main(int argc, char** argv) {
  using namespace anodev2::cli;

  CLI::App app{"ANODEV2 coupled ODE networks: simulation, gradient checks, "
               "training, and parameter accounting"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "Evolve a field under the RDA operator and dump frames");
  simulate->add_option("--grid", sim.grid, "Grid size N (N x N field)");
  simulate->add_option("--d", sim.d, "Diffusion coefficient");
  simulate->add_option("--vx", sim.vx, "Advection velocity x");
  simulate->add_option("--vy", sim.vy, "Advection velocity y");
  simulate->add_option("--rho", sim.rho, "Reaction rate");
  simulate->add_option("--steps", sim.steps, "Number of steps");
  simulate->add_option("--dt", sim.dt, "Step size");
  simulate->add_option("--sigma", sim.sigma, "identity or tanh");
  simulate->add_option("--init", sim.init,
                       "gaussian:<width> or a path to grid*grid values");
  simulate->add_option("--out", sim.out_dir, "Output directory")->required();

  GradCheckArgs gc;
  CLI::App* grad = app.add_subcommand(
      "grad-check", "Compare DTO gradients against oracles");
  grad->add_option("--model", gc.model, "tiny-resnet4 or scalar-system");
  grad->add_option("--config", gc.config, "ODE coupling configuration (1|2)");
  grad->add_option("--nt", gc.nt, "Activation steps (0 = model default)");
  grad->add_option("--ntheta", gc.ntheta,
                   "Adjoint grid for scalar-system (0 = match --nt)");
  grad->add_option("--eps", gc.eps, "Finite-difference half step");
  grad->add_option("--out", gc.out_csv, "Also write the CSV report here");

  TrainArgs tr;
  CLI::App* train = app.add_subcommand("train", "Train a model");
  train->add_option("--arch", tr.arch, "alexnet | resnet4 | resnet10");
  train->add_option("--variant", tr.variant,
                    "baseline | anodev2_c1 | anodev2_c2");
  train->add_option("--data", tr.data, "CIFAR-10 dir or 'synthetic'");
  train->add_option("--subset", tr.subset_n, "Cap training samples (0 = all)");
  train->add_option("--test-subset", tr.test_subset_n,
                    "Cap test samples (0 = all)");
  train->add_option("--epochs", tr.epochs, "Training epochs");
  train->add_option("--batch", tr.batch_size, "Batch size");
  train->add_option("--lr0", tr.lr0, "Initial learning rate");
  train->add_option("--decay", tr.decay_epochs, "Decay epochs")
      ->delimiter(',');
  train->add_option("--seed", tr.seed, "RNG seed");
  train->add_flag("--no-augment", tr.no_augment, "Disable augmentation");
  train->add_option("--out", tr.out_dir, "Output directory")->required();

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a model");
  eval_cmd->add_option("--arch", ev.arch, "alexnet | resnet4 | resnet10");
  eval_cmd->add_option("--variant", ev.variant,
                       "baseline | anodev2_c1 | anodev2_c2");
  eval_cmd->add_option("--checkpoint", ev.checkpoint,
                       "Checkpoint to load (default: seeded init)");
  eval_cmd->add_option("--data", ev.data, "CIFAR-10 dir or 'synthetic'");
  eval_cmd->add_option("--subset", ev.subset_n, "Cap test samples (0 = all)");
  eval_cmd->add_option("--seed", ev.seed, "RNG seed");

  CountParamsArgs cp;
  CLI::App* count = app.add_subcommand(
      "count-params", "Print the per-layer parameter report");
  count->add_option("--arch", cp.arch, "alexnet | resnet4 | resnet10");
  count->add_option("--variant", cp.variant,
                    "baseline | anodev2_c1 | anodev2_c2");
  count->add_option("--out", cp.out_csv, "Also write the CSV report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(sim);
    if (grad->parsed()) return cmd_grad_check(gc);
    if (train->parsed()) return cmd_train(tr);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (count->parsed()) return cmd_count_params(cp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
