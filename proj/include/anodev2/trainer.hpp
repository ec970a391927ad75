#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "anodev2/data.hpp"
#include "anodev2/models.hpp"

namespace anodev2 {

struct TrainConfig {
  int64_t epochs = 1;
  int64_t batch_size = 256;
  double lr0 = 0.1;
  std::vector<int64_t> decay_epochs;  // strictly increasing, < epochs
  double momentum = 0.9;
  double weight_decay = 5e-4;
  uint64_t seed = 1;
  bool augment = true;
  TapeMode mode = TapeMode::checkpoint;
  std::string checkpoint_path;  // best-accuracy snapshot; empty disables
};

// lr0 scaled down tenfold at each decay epoch reached so far.
double lr_at(const TrainConfig& cfg, int64_t epoch);

// Momentum buffers keyed by parameter name, created lazily at zero.
struct SgdState {
  std::map<std::string, std::vector<real_t>> velocity;
};

// v <- momentum*v + grad + wd*param; param -= lr*v. Weight decay skips RDA
// coefficients and BN affine params; the diffusion coefficient is clamped
// at zero afterwards.
void sgd_step(const std::vector<ParamView>& params, SgdState& state, double lr,
              double momentum, double weight_decay);

struct EpochStats {
  int64_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double test_acc = 0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  double best_acc = 0.0;
  std::string history_csv() const;  // header: epoch,lr,train_loss,test_acc
};

double evaluate(Model& m, const LabeledBatch& data, int64_t batch_size = 256);

TrainResult train(Model& m, const LabeledBatch& train_data,
                  const LabeledBatch& test_data, const TrainConfig& cfg);

// Binary format: "ANV2", version u32, then per array: name length u32, name
// bytes, dtype tag u8 (1 = f64), rank u8, dims u32 each, raw values.
void save_checkpoint(Model& m, const std::string& path);
void load_checkpoint(Model& m, const std::string& path);

}  // namespace anodev2
