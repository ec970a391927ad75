#include "anodev2/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "anodev2/layers.hpp"

namespace anodev2 {
namespace {

void validate_schedule(const TrainConfig& cfg) {
  check(cfg.epochs >= 0, "train config: negative epoch count");
  check(cfg.batch_size > 0, "train config: batch size must be positive");
  for (size_t i = 0; i < cfg.decay_epochs.size(); ++i) {
    check(cfg.decay_epochs[i] < cfg.epochs,
          "train config: decay epoch " + std::to_string(cfg.decay_epochs[i]) +
              " not below epoch count " + std::to_string(cfg.epochs));
    if (i > 0)
      check(cfg.decay_epochs[i - 1] < cfg.decay_epochs[i],
            "train config: decay epochs must be strictly increasing");
  }
}

int64_t argmax_class(const Tensor4& logits, int64_t row) {
  int64_t best = 0;
  for (int64_t c = 1; c < logits.c; ++c)
    if (logits.at(row, c, 0, 0) > logits.at(row, best, 0, 0)) best = c;
  return best;
}

}  // namespace

double lr_at(const TrainConfig& cfg, int64_t epoch) {
  validate_schedule(cfg);
  check(epoch >= 0 && epoch < cfg.epochs, "lr_at: epoch out of range");
  int64_t drops = 0;
  for (const int64_t d : cfg.decay_epochs)
    if (epoch >= d) ++drops;
  return cfg.lr0 * std::pow(10.0, -static_cast<double>(drops));
}

void sgd_step(const std::vector<ParamView>& params, SgdState& state, double lr,
              double momentum, double weight_decay) {
  for (const ParamView& p : params) {
    check(p.data != nullptr && p.grad != nullptr,
          "sgd: parameter " + p.name + " has no gradient");
    const int64_t n = p.count();
    auto& v = state.velocity[p.name];
    if (v.empty()) v.assign(static_cast<size_t>(n), real_t(0));
    check(static_cast<int64_t>(v.size()) == n,
          "sgd: velocity size mismatch for " + p.name);

    const bool decay =
        p.kind != ParamKind::rda_coeff && p.kind != ParamKind::bn_affine;
    const double wd = decay ? weight_decay : 0.0;
    for (int64_t e = 0; e < n; ++e) {
      const double g = static_cast<double>(p.grad[e]);
      check(std::isfinite(g), "sgd: non-finite gradient in " + p.name);
      const double vel =
          momentum * static_cast<double>(v[static_cast<size_t>(e)]) + g +
          wd * static_cast<double>(p.data[e]);
      v[static_cast<size_t>(e)] = static_cast<real_t>(vel);
      p.data[e] = static_cast<real_t>(static_cast<double>(p.data[e]) - lr * vel);
    }
    if (p.kind == ParamKind::rda_coeff && p.data[0] < real_t(0))
      p.data[0] = real_t(0);  // diffusion must not turn anti-diffusive
  }
}

namespace {

// Shortest representation that round-trips the double exactly.
std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string TrainResult::history_csv() const {
  std::string out = "epoch,lr,train_loss,test_acc\n";
  for (const EpochStats& e : history) {
    out += std::to_string(e.epoch) + "," + fmt_double(e.lr) + "," +
           fmt_double(e.train_loss) + "," + fmt_double(e.test_acc) + "\n";
  }
  return out;
}

double evaluate(Model& m, const LabeledBatch& data, int64_t batch_size) {
  check(batch_size > 0, "evaluate: batch size must be positive");
  if (data.size() == 0) return 0.0;
  int64_t correct = 0;
  for (int64_t start = 0; start < data.size(); start += batch_size) {
    const int64_t count = std::min(batch_size, data.size() - start);
    const LabeledBatch b = subset(data, start, count);
    ModelTape tape;
    const Tensor4 logits =
        model_forward(m, b.images, false, false, TapeMode::checkpoint, tape);
    for (int64_t i = 0; i < count; ++i)
      if (argmax_class(logits, i) == b.labels[static_cast<size_t>(i)])
        ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(Model& m, const LabeledBatch& train_data,
                  const LabeledBatch& test_data, const TrainConfig& cfg) {
  validate_schedule(cfg);
  check(train_data.size() > 0, "train: empty dataset");

  Rng order_rng(cfg.seed);
  Rng aug_rng(cfg.seed ^ 0xDA7A5EEDull);
  SgdState state;
  TrainResult result;

  const int64_t n = train_data.size();
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(cfg, epoch);
    for (int64_t i = n - 1; i > 0; --i) {
      const auto j = static_cast<int64_t>(
          order_rng.below(static_cast<uint64_t>(i + 1)));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }

    double loss_sum = 0.0;
    for (int64_t start = 0; start < n; start += cfg.batch_size) {
      const int64_t count = std::min(cfg.batch_size, n - start);
      const std::vector<int64_t> idx(
          order.begin() + start, order.begin() + start + count);
      LabeledBatch batch = gather(train_data, idx);
      batch = augment(batch, aug_rng.next_u64(), cfg.augment);

      m.zero_grad();
      ModelTape tape;
      const Tensor4 logits =
          model_forward(m, batch.images, true, true, cfg.mode, tape);
      const LossAndGrad lg = softmax_cross_entropy(logits, batch.labels);
      check(std::isfinite(static_cast<double>(lg.loss)),
            "train: non-finite loss");
      loss_sum += static_cast<double>(lg.loss) * static_cast<double>(count);
      model_backward(m, tape, lg.grad);
      sgd_step(m.params(), state, lr, cfg.momentum, cfg.weight_decay);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = loss_sum / static_cast<double>(n);
    stats.test_acc = evaluate(m, test_data, cfg.batch_size);
    result.history.push_back(stats);

    if (stats.test_acc >= result.best_acc) {
      result.best_acc = stats.test_acc;
      if (!cfg.checkpoint_path.empty()) save_checkpoint(m, cfg.checkpoint_path);
    }
  }
  return result;
}

namespace {

constexpr char kMagic[4] = {'A', 'N', 'V', '2'};
constexpr uint32_t kVersion = 1;
constexpr uint8_t kTagF64 = 1;

static_assert(sizeof(real_t) == 8, "checkpoint format stores f64 values");

// This format is little-endian on disk; raw writes assume a little-endian
// host, which covers every target this project builds on.
template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::vector<unsigned char>& buf, size_t& off) {
  check(off + sizeof(T) <= buf.size(),
        "checkpoint: truncated file at offset " + std::to_string(off));
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), "checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, 4);
  put(out, kVersion);
  for (const ParamView& p : m.state_views()) {
    put(out, static_cast<uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put(out, kTagF64);
    put(out, static_cast<uint8_t>(p.dims.size()));
    for (const int64_t d : p.dims) put(out, static_cast<uint32_t>(d));
    out.write(reinterpret_cast<const char*>(p.data),
              static_cast<std::streamsize>(p.count() * sizeof(real_t)));
  }
  check(out.good(), "checkpoint: short write to " + path);
}

void load_checkpoint(Model& m, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "checkpoint: cannot open " + path);
  std::vector<unsigned char> buf(
      (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  size_t off = 0;
  check(buf.size() >= 4 && std::memcmp(buf.data(), kMagic, 4) == 0,
        "checkpoint: bad magic at offset 0");
  off = 4;
  const auto version = take<uint32_t>(buf, off);
  check(version == kVersion, "checkpoint: unsupported version " +
                                 std::to_string(version) + " at offset 4");

  struct Record {
    uint8_t tag = 0;
    std::vector<int64_t> dims;
    size_t value_off = 0;
    bool used = false;
  };
  std::map<std::string, Record> records;
  while (off < buf.size()) {
    const size_t rec_off = off;
    const auto name_len = take<uint32_t>(buf, off);
    check(off + name_len <= buf.size(),
          "checkpoint: truncated name at offset " + std::to_string(off));
    std::string name(reinterpret_cast<const char*>(buf.data() + off), name_len);
    off += name_len;
    Record r;
    r.tag = take<uint8_t>(buf, off);
    const auto rank = take<uint8_t>(buf, off);
    int64_t count = 1;
    for (uint8_t d = 0; d < rank; ++d) {
      r.dims.push_back(static_cast<int64_t>(take<uint32_t>(buf, off)));
      count *= r.dims.back();
    }
    r.value_off = off;
    const size_t bytes = static_cast<size_t>(count) * sizeof(real_t);
    check(off + bytes <= buf.size(),
          "checkpoint: truncated values for " + name + " at offset " +
              std::to_string(off));
    off += bytes;
    check(records.emplace(name, std::move(r)).second,
          "checkpoint: duplicate record " + name + " at offset " +
              std::to_string(rec_off));
  }

  for (const ParamView& p : m.state_views()) {
    const auto it = records.find(p.name);
    check(it != records.end(), "checkpoint: missing record " + p.name);
    Record& r = it->second;
    check(r.tag == kTagF64, "checkpoint: bad dtype tag for " + p.name);
    check(r.dims == p.dims, "checkpoint: shape mismatch for " + p.name);
    std::memcpy(p.data, buf.data() + r.value_off,
                static_cast<size_t>(p.count()) * sizeof(real_t));
    r.used = true;
  }
  for (const auto& [name, r] : records)
    check(r.used, "checkpoint: unexpected record " + name);
}

}  // namespace anodev2
