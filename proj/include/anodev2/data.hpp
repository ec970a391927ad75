#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anodev2/rng.hpp"
#include "anodev2/tensor.hpp"

namespace anodev2 {

// Channel statistics used to normalize CIFAR-10 pixels.
inline constexpr double kCifarMean[3] = {0.4914, 0.4822, 0.4465};
inline constexpr double kCifarStd[3] = {0.2470, 0.2435, 0.2616};

struct LabeledBatch {
  Tensor4 images;  // (n, 3, 32, 32), normalized
  std::vector<int> labels;

  int64_t size() const { return images.n; }
};

// One CIFAR-10 binary file (records of 1 label byte + 3072 pixel bytes).
LabeledBatch load_cifar10(const std::string& path);

// data_batch_1..5.bin concatenated (train) or test_batch.bin (test).
LabeledBatch load_cifar10_dir(const std::string& dir, bool train);

// Inverse of load_cifar10 up to the 1/255 quantization.
void save_cifar10(const LabeledBatch& batch, const std::string& path);

// Reflect-pad 4, random 32x32 crop, coin-flip horizontal mirror. Draw order
// per image: crop row, crop col, flip.
LabeledBatch augment(const LabeledBatch& batch, uint64_t seed,
                     bool enabled = true);

// Ten Gaussian-bump class prototypes plus pixel noise; labels cycle 0..9.
LabeledBatch synthetic_blobs(int64_t n, uint64_t seed);

LabeledBatch subset(const LabeledBatch& batch, int64_t start, int64_t count);
LabeledBatch gather(const LabeledBatch& batch,
                    const std::vector<int64_t>& indices);

}  // namespace anodev2
