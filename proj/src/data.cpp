#include "anodev2/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace anodev2 {
namespace {

constexpr int64_t kRecordBytes = 3073;  // 1 label byte + 3*32*32 pixels
constexpr int64_t kHW = 32;
constexpr int64_t kPad = 4;

std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cifar load: cannot open " + path);
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<int64_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<unsigned char> buf(static_cast<size_t>(bytes));
  if (bytes > 0) in.read(reinterpret_cast<char*>(buf.data()), bytes);
  check(in.good(), "cifar load: short read from " + path);
  return buf;
}

// Mirror an out-of-range coordinate back into [0, n) without repeating the
// edge sample, matching reflect padding.
int64_t reflect(int64_t j, int64_t n) {
  if (j < 0) j = -j;
  if (j >= n) j = 2 * (n - 1) - j;
  return j;
}

}  // namespace

LabeledBatch load_cifar10(const std::string& path) {
  const auto buf = read_all(path);
  const auto bytes = static_cast<int64_t>(buf.size());
  check(bytes % kRecordBytes == 0,
        "cifar load: " + path + ": size " + std::to_string(bytes) +
            " is not a multiple of 3073");
  const int64_t n = bytes / kRecordBytes;

  LabeledBatch out;
  out.images = Tensor4(n, 3, kHW, kHW);
  out.labels.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const unsigned char* rec = buf.data() + i * kRecordBytes;
    const int label = static_cast<int>(rec[0]);
    check(label <= 9, "cifar load: " + path + ": label byte " +
                          std::to_string(label) + " out of range at record " +
                          std::to_string(i));
    out.labels[static_cast<size_t>(i)] = label;
    for (int64_t c = 0; c < 3; ++c) {
      const unsigned char* plane = rec + 1 + c * kHW * kHW;
      for (int64_t y = 0; y < kHW; ++y) {
        for (int64_t x = 0; x < kHW; ++x) {
          const double v =
              static_cast<double>(plane[y * kHW + x]) / 255.0;
          out.images.at(i, c, y, x) =
              static_cast<real_t>((v - kCifarMean[c]) / kCifarStd[c]);
        }
      }
    }
  }
  return out;
}

LabeledBatch load_cifar10_dir(const std::string& dir, bool train) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  if (train) {
    for (int b = 1; b <= 5; ++b) {
      files.push_back((fs::path(dir) / ("data_batch_" + std::to_string(b) +
                                        ".bin")).string());
    }
  } else {
    files.push_back((fs::path(dir) / "test_batch.bin").string());
  }

  LabeledBatch all;
  for (const auto& f : files) {
    LabeledBatch part = load_cifar10(f);
    if (all.size() == 0) {
      all = std::move(part);
      continue;
    }
    Tensor4 merged(all.size() + part.size(), 3, kHW, kHW);
    std::copy(all.images.v.begin(), all.images.v.end(), merged.v.begin());
    std::copy(part.images.v.begin(), part.images.v.end(),
              merged.v.begin() + all.images.size());
    all.images = std::move(merged);
    all.labels.insert(all.labels.end(), part.labels.begin(),
                      part.labels.end());
  }
  return all;
}

void save_cifar10(const LabeledBatch& batch, const std::string& path) {
  check(batch.images.c == 3 && batch.images.h == kHW && batch.images.w == kHW,
        "cifar save: expected (n,3,32,32), got " + batch.images.shape_str());
  check(batch.images.n == static_cast<int64_t>(batch.labels.size()),
        "cifar save: image/label count mismatch");
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cifar save: cannot open " + path);

  std::vector<unsigned char> rec(static_cast<size_t>(kRecordBytes));
  for (int64_t i = 0; i < batch.images.n; ++i) {
    const int label = batch.labels[static_cast<size_t>(i)];
    check(label >= 0 && label <= 9, "cifar save: label out of range");
    rec[0] = static_cast<unsigned char>(label);
    for (int64_t c = 0; c < 3; ++c) {
      for (int64_t y = 0; y < kHW; ++y) {
        for (int64_t x = 0; x < kHW; ++x) {
          double v = static_cast<double>(batch.images.at(i, c, y, x));
          v = v * kCifarStd[c] + kCifarMean[c];
          v = std::clamp(v * 255.0, 0.0, 255.0);
          rec[static_cast<size_t>(1 + c * kHW * kHW + y * kHW + x)] =
              static_cast<unsigned char>(std::lround(v));
        }
      }
    }
    out.write(reinterpret_cast<const char*>(rec.data()), kRecordBytes);
  }
  check(out.good(), "cifar save: short write to " + path);
}

LabeledBatch augment(const LabeledBatch& batch, uint64_t seed, bool enabled) {
  LabeledBatch out;
  out.images = batch.images;
  out.labels = batch.labels;
  if (!enabled) return out;

  check(batch.images.h == kHW && batch.images.w == kHW,
        "augment: expected 32x32 images, got " + batch.images.shape_str());
  Rng rng(seed);
  for (int64_t i = 0; i < batch.images.n; ++i) {
    const int64_t oy = static_cast<int64_t>(rng.below(2 * kPad + 1));
    const int64_t ox = static_cast<int64_t>(rng.below(2 * kPad + 1));
    const bool flip = rng.coin();
    for (int64_t c = 0; c < batch.images.c; ++c) {
      for (int64_t y = 0; y < kHW; ++y) {
        const int64_t sy = reflect(y + oy - kPad, kHW);
        for (int64_t x = 0; x < kHW; ++x) {
          const int64_t xx = flip ? kHW - 1 - x : x;
          const int64_t sx = reflect(xx + ox - kPad, kHW);
          out.images.at(i, c, y, x) = batch.images.at(i, c, sy, sx);
        }
      }
    }
  }
  return out;
}

LabeledBatch synthetic_blobs(int64_t n, uint64_t seed) {
  check(n >= 0, "synthetic_blobs: negative count");
  Rng rng(seed);

  // Class prototypes: one smooth bump per class on a 2x5 grid of centers,
  // with random per-channel amplitudes so same-center pairs stay separable.
  std::vector<Tensor4> proto;
  proto.reserve(10);
  const double sigma = 5.0;
  for (int cls = 0; cls < 10; ++cls) {
    const double cy = 8.0 + 16.0 * (cls / 5);
    const double cx = 3.2 + 6.4 * (cls % 5);
    double amp[3];
    for (double& a : amp) a = 1.5 * rng.normal();
    Tensor4 p(1, 3, kHW, kHW);
    for (int64_t c = 0; c < 3; ++c) {
      for (int64_t y = 0; y < kHW; ++y) {
        for (int64_t x = 0; x < kHW; ++x) {
          const double dy = (static_cast<double>(y) - cy) / sigma;
          const double dx = (static_cast<double>(x) - cx) / sigma;
          p.at(0, c, y, x) =
              static_cast<real_t>(amp[c] * std::exp(-0.5 * (dy * dy + dx * dx)));
        }
      }
    }
    proto.push_back(std::move(p));
  }

  LabeledBatch out;
  out.images = Tensor4(n, 3, kHW, kHW);
  out.labels.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % 10);
    out.labels[static_cast<size_t>(i)] = cls;
    const Tensor4& p = proto[static_cast<size_t>(cls)];
    for (int64_t e = 0; e < p.size(); ++e) {
      out.images.v[static_cast<size_t>(i * p.size() + e)] =
          p.v[static_cast<size_t>(e)] +
          static_cast<real_t>(0.35 * rng.normal());
    }
  }
  return out;
}

LabeledBatch subset(const LabeledBatch& batch, int64_t start, int64_t count) {
  check(start >= 0 && count >= 0 && start + count <= batch.size(),
        "subset: range [" + std::to_string(start) + ", " +
            std::to_string(start + count) + ") out of bounds for " +
            std::to_string(batch.size()) + " samples");
  std::vector<int64_t> idx(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) idx[static_cast<size_t>(i)] = start + i;
  return gather(batch, idx);
}

LabeledBatch gather(const LabeledBatch& batch,
                    const std::vector<int64_t>& indices) {
  const int64_t m = static_cast<int64_t>(indices.size());
  LabeledBatch out;
  out.images = Tensor4(m, batch.images.c, batch.images.h, batch.images.w);
  out.labels.resize(static_cast<size_t>(m));
  const int64_t stride = batch.images.c * batch.images.h * batch.images.w;
  for (int64_t i = 0; i < m; ++i) {
    const int64_t src = indices[static_cast<size_t>(i)];
    check(src >= 0 && src < batch.size(),
          "gather: index " + std::to_string(src) + " out of bounds");
    std::copy(batch.images.v.begin() + src * stride,
              batch.images.v.begin() + (src + 1) * stride,
              out.images.v.begin() + i * stride);
    out.labels[static_cast<size_t>(i)] = batch.labels[static_cast<size_t>(src)];
  }
  return out;
}

}  // namespace anodev2
