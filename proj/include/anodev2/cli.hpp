#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace anodev2::cli {

// Commands return process exit codes: 0 pass, 1 check failed, 2 usage/IO.
// Usage and IO problems are thrown as std::runtime_error and mapped to 2
// by the binary's main().

struct SimulateArgs {
  int64_t grid = 64;
  double d = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  double rho = 0.0;
  int64_t steps = 10;
  double dt = 0.01;
  std::string sigma = "identity";  // identity | tanh
  std::string init = "gaussian:0.08";  // gaussian:<sigma0> | <path>
  std::string out_dir;
};
int cmd_simulate(const SimulateArgs& a);

struct GradCheckArgs {
  std::string model = "tiny-resnet4";  // tiny-resnet4 | scalar-system
  int config = 1;                      // tiny-resnet4 only
  int64_t nt = 0;     // activation steps; 0 picks the model default
  int64_t ntheta = 0; // scalar-system adjoint grid; 0 matches nt
  double eps = 1e-6;  // finite-difference half step
  std::string out_csv;  // also written here when non-empty
};
int cmd_grad_check(const GradCheckArgs& a);

struct TrainArgs {
  std::string arch = "resnet4";
  std::string variant = "baseline";
  std::string data = "synthetic";  // CIFAR-10 dir | "synthetic"
  int64_t subset_n = 0;            // 0 = all training samples
  int64_t test_subset_n = 1000;    // 0 = all test samples
  int64_t epochs = 1;
  int64_t batch_size = 256;
  double lr0 = 0.1;
  std::vector<int64_t> decay_epochs;
  uint64_t seed = 1;
  bool no_augment = false;
  std::string out_dir;
};
int cmd_train(const TrainArgs& a);

struct EvalArgs {
  std::string arch = "resnet4";
  std::string variant = "baseline";
  std::string checkpoint;  // empty evaluates the seeded init
  std::string data = "synthetic";
  int64_t subset_n = 0;
  uint64_t seed = 1;
};
int cmd_eval(const EvalArgs& a);

struct CountParamsArgs {
  std::string arch = "alexnet";
  std::string variant = "baseline";
  std::string out_csv;
};
int cmd_count_params(const CountParamsArgs& a);

}  // namespace anodev2::cli
