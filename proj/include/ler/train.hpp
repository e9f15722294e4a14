#pragma once

// Losses, AdamW, warmup+cosine schedule and the two-stage training loop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "ler/metrics.hpp"
#include "ler/model.hpp"
#include "ler/rng.hpp"
#include "ler/synth.hpp"

namespace ler {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Losses. Each takes the denominator explicitly so that per-sample terms of a
// batch add up to the batch mean.

/// sum_i CE(C_i, Y) over the localization stages.
template <typename T>
BasicTensor<T> loss_loc(const std::vector<BasicTensor<T>>& stage_logits, std::span<const int> labels,
                        double denominator) {
  if (stage_logits.empty()) throw DimensionError("loss_loc: no stage logits");
  BasicTensor<T> total = cross_entropy(stage_logits[0], labels, {}, denominator);
  for (std::size_t i = 1; i < stage_logits.size(); ++i) {
    total = add(total, cross_entropy(stage_logits[i], labels, {}, denominator));
  }
  return total;
}

template <typename T>
BasicTensor<T> loss_char(const BasicTensor<T>& logits, std::span<const int> labels, double denominator) {
  return cross_entropy(logits, labels, {}, denominator);
}

/// Radical-sequence loss for one line. Rows of character slots at or after
/// `true_length` are masked; within a real character every slot counts,
/// including trailing padding symbols.
template <typename T>
BasicTensor<T> loss_ids(const BasicTensor<T>& logits, std::span<const int> ids_labels, std::size_t true_length,
                        double denominator) {
  if (logits.rank() != 3) throw DimensionError("loss_ids: expected [L, L_ids, n_ids], got " + to_string(logits.shape()));
  const std::size_t l = logits.dim(0), lid = logits.dim(1);
  if (ids_labels.size() != l * lid) {
    throw DimensionError("loss_ids: " + std::to_string(ids_labels.size()) + " labels for logits " +
                         to_string(logits.shape()));
  }
  std::vector<std::uint8_t> mask(l * lid, 0);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(std::min(true_length, l) * lid), 1);
  return cross_entropy(reshape(logits, {l * lid, logits.dim(2)}), ids_labels, mask, denominator);
}

struct LossReport {
  double loc = 0.0;
  double chr = 0.0;
  double ids = 0.0;
  double total = 0.0;

  LossReport& operator+=(const LossReport& o) {
    loc += o.loc, chr += o.chr, ids += o.ids, total += o.total;
    return *this;
  }
};

// ---------------------------------------------------------------------------
// Optimizer

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// Decoupled weight decay: p -= lr * wd * p (for decaying parameters), then
/// the bias-corrected Adam step. Only the tensors handed to the constructor
/// are ever touched.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Parameter<T>*> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }

  /// Missing gradients count as zero.
  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      auto w = p.value.mutable_data();
      const bool has = p.value.has_grad();
      auto g = p.value.grad();
      if (has && g.size() != w.size()) throw DimensionError("AdamW: gradient/parameter size mismatch for " + p.name);
      const double shrink = p.decay ? lr * cfg_.weight_decay : 0.0;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = has ? static_cast<double>(g[i]) : 0.0;
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        double x = static_cast<double>(w[i]);
        x -= shrink * x;
        x -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
        w[i] = static_cast<T>(x);
      }
    }
  }

  std::size_t steps() const { return t_; }
  const std::vector<Parameter<T>*>& params() const { return params_; }

 private:
  std::vector<Parameter<T>*> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// Linear warmup from 0 to `base` over `warmup` steps, then cosine decay to 0
/// at `total`.
inline double lr_at(std::size_t step, double base, std::size_t warmup, std::size_t total) {
  if (total == 0) return 0.0;
  if (step < warmup) return base * static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= total) return 0.0;
  const double span = static_cast<double>(total - warmup);
  const double progress = span > 0.0 ? static_cast<double>(step - warmup) / span : 1.0;
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
  std::size_t stage1_epochs = 200;
  std::size_t stage2_epochs = 100;
  std::size_t warmup_epochs = 5;
  double lr = 1e-3;
  double weight_decay = 0.05;
  std::size_t batch_size = 2;
  std::uint64_t seed = 0;
  bool ids_loss = true;
  std::size_t eval_every = 0;  // epochs between evaluations; 0 = only at stage ends
};

struct EpochRecord {
  int stage = 1;
  std::size_t epoch = 0;  // 1-based within the stage
  std::size_t step = 0;   // optimizer steps so far in this stage
  double lr = 0.0;        // learning rate of the epoch's last step
  LossReport loss;        // mean over the epoch's batches
  double eval_lacc = std::nan("");
  double eval_ned = std::nan("");
};

/// Image tensor [H, W, 1] for a corpus sample.
inline Tensor sample_image(const TextLineSample& s) {
  return Tensor::from({static_cast<std::size_t>(s.height), static_cast<std::size_t>(s.width), 1}, s.image);
}

/// Class ids up to the first padding prediction.
inline std::vector<int> decode_prediction(const Tensor& logits) {
  const std::size_t l = logits.dim(0), c = logits.dim(1);
  std::vector<int> out;
  for (std::size_t j = 0; j < l; ++j) {
    const auto row = logits.data().subspan(j * c, c);
    const int cls = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (cls == 0) break;
    out.push_back(cls);
  }
  return out;
}

/// Inference-mode prediction. With `full` false only the localization
/// branch runs and its last stage's logits are decoded.
inline std::vector<int> predict(const LerModel& model, const Tensor& image, bool full = true) {
  NoGradGuard guard;
  auto trace = model.forward(image, Mode::Infer, full ? Scope::Full : Scope::Localization);
  return decode_prediction(full ? trace.char_logits : trace.loc_logits.back());
}

inline EvalResult evaluate_model(const LerModel& model, const std::vector<TextLineSample>& samples, bool full = true) {
  std::vector<std::vector<int>> preds, labels;
  for (const auto& s : samples) {
    preds.push_back(predict(model, sample_image(s), full));
    labels.push_back(strip_pad(s.labels));
  }
  return evaluate(preds, labels);
}

inline std::vector<Parameter<float>*> stage_parameters(LerModel& model, int stage, bool ids_loss) {
  std::vector<Parameter<float>*> out;
  for (auto& p : model.params().all()) {
    const bool loc = p.group == ParamGroup::Encoder || p.group == ParamGroup::Localization;
    if (stage == 1 ? loc : (p.group != ParamGroup::Ids || ids_loss)) out.push_back(&p);
  }
  return out;
}

class Trainer {
 public:
  using EpochCallback = std::function<void(const EpochRecord&)>;
  using StageCallback = std::function<void(int stage)>;

  Trainer(LerModel& model, TrainConfig cfg) : model_(model), cfg_(cfg) {
    if (cfg_.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  }

  /// Forward + backward for one batch; gradients accumulate on the stage's
  /// parameters. Returns the batch losses (each already a batch mean).
  LossReport accumulate_batch(const std::vector<const TextLineSample*>& batch, int stage) {
    const auto& mc = model_.config();
    const double rows = static_cast<double>(batch.size() * mc.max_len);
    double ids_rows = 0.0;
    for (const auto* s : batch) ids_rows += static_cast<double>(std::min<std::size_t>(s->true_length, mc.max_len) * mc.ids_len);
    LossReport report;
    for (const auto* s : batch) {
      if (s->labels.size() != mc.max_len) throw DimensionError("sample has " + std::to_string(s->labels.size()) + " labels, model L=" + std::to_string(mc.max_len));
      const Tensor image = sample_image(*s);
      auto trace = model_.forward(image, stage == 1 ? Mode::Infer : Mode::Train,
                                  stage == 1 ? Scope::Localization : Scope::Full);
      Tensor loc = loss_loc(trace.loc_logits, s->labels, rows);
      Tensor total = loc;
      float chr = 0.0f, ids = 0.0f;
      if (stage == 2) {
        Tensor c = loss_char(trace.char_logits, s->labels, rows);
        total = add(total, c);
        chr = c.item();
        if (cfg_.ids_loss) {
          Tensor i = loss_ids(trace.ids_logits, s->ids_labels, static_cast<std::size_t>(s->true_length), ids_rows);
          total = add(total, i);
          ids = i.item();
        }
      }
      if (!std::isfinite(total.item())) {
        throw TrainingError("non-finite loss at stage " + std::to_string(stage) + " step " + std::to_string(step_ + 1));
      }
      total.backward();
      report.loc += loc.item();
      report.chr += chr;
      report.ids += ids;
      report.total += total.item();
    }
    return report;
  }

  /// Runs both stages. `eval` may be empty.
  std::vector<EpochRecord> run(const std::vector<TextLineSample>& train, const std::vector<TextLineSample>& eval = {},
                               const EpochCallback& on_epoch = {}, const StageCallback& on_stage_end = {}) {
    if (train.empty()) throw ConfigError("training corpus is empty");
    std::vector<EpochRecord> log;
    for (int stage = 1; stage <= 2; ++stage) {
      const std::size_t epochs = stage == 1 ? cfg_.stage1_epochs : cfg_.stage2_epochs;
      if (epochs > 0) run_stage(stage, epochs, train, eval, log, on_epoch);
      if (on_stage_end) on_stage_end(stage);
    }
    return log;
  }

  std::size_t steps() const { return step_; }

 private:
  void run_stage(int stage, std::size_t epochs, const std::vector<TextLineSample>& train,
                 const std::vector<TextLineSample>& eval, std::vector<EpochRecord>& log, const EpochCallback& on_epoch) {
    auto params = stage_parameters(model_, stage, cfg_.ids_loss);
    AdamW<float> opt(params, {0.9, 0.999, 1e-8, cfg_.weight_decay});
    const std::size_t per_epoch = (train.size() + cfg_.batch_size - 1) / cfg_.batch_size;
    const std::size_t total = per_epoch * epochs;
    const std::size_t warmup = std::min(per_epoch * cfg_.warmup_epochs, total / 2);
    std::vector<std::size_t> order(train.size());
    step_ = 0;
    for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      CounterRng rng = CounterRng(cfg_.seed, 0x7A1 + static_cast<std::uint64_t>(stage)).fork(epoch);
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      EpochRecord rec;
      rec.stage = stage;
      rec.epoch = epoch;
      for (std::size_t b = 0; b < per_epoch; ++b) {
        std::vector<const TextLineSample*> batch;
        for (std::size_t k = b * cfg_.batch_size; k < std::min(train.size(), (b + 1) * cfg_.batch_size); ++k) {
          batch.push_back(&train[order[k]]);
        }
        model_.params().zero_grad();
        rec.loss += accumulate_batch(batch, stage);
        rec.lr = lr_at(step_ + 1, cfg_.lr, warmup, total + 1);
        opt.step(rec.lr);
        ++step_;
      }
      rec.step = step_;
      rec.loss.loc /= static_cast<double>(per_epoch);
      rec.loss.chr /= static_cast<double>(per_epoch);
      rec.loss.ids /= static_cast<double>(per_epoch);
      rec.loss.total /= static_cast<double>(per_epoch);
      const bool last = epoch == epochs;
      if (!eval.empty() && (last || (cfg_.eval_every && epoch % cfg_.eval_every == 0))) {
        const auto r = evaluate_model(model_, eval, stage == 2);
        rec.eval_lacc = r.lacc;
        rec.eval_ned = r.ned;
      }
      log.push_back(rec);
      if (on_epoch) on_epoch(rec);
    }
    model_.params().zero_grad();
  }

  LerModel& model_;
  TrainConfig cfg_;
  std::size_t step_ = 0;
};

}  // namespace ler
