#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "routelab/optimizer.hpp"
#include "routelab/seqmodel.hpp"
#include "routelab/taskgen.hpp"

namespace routelab {

/// One supervised example: prompt ids and the full reasoning target
/// <think> c </think> <answer> a </answer> <eos>.
struct CoTExample {
  std::vector<int> x;
  std::vector<int> target;
};

struct SFTConfig {
  double lr = 1e-3;
  int batch_size = 32;
  int epochs = 20;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  uint64_t seed = 1;
  int checkpoint_every = 0;  // steps; 0 disables periodic checkpoints

  void validate() const {
    if (lr < 0) throw ConfigError("sft learning rate must be >= 0");
    if (clip_norm <= 0) throw ConfigError("sft clip norm must be > 0");
    if (batch_size < 1) throw ConfigError("sft batch size must be >= 1");
    if (epochs < 1) throw ConfigError("sft epochs must be >= 1");
  }
};

/// Builds the reasoning target for an item whose cot has been attached:
/// the thinking span is the opposite-polarity description, the answer span
/// is the option letter (MCQ) or the canonical description (RouteDesc).
inline CoTExample make_cot_example(const QAItem& item) {
  if (!item.cot)
    throw DataError("item " + item.id +
                    " has no cot; run attach_cot on the dataset first");
  const Vocab& v = default_vocab();
  CoTExample ex;
  ex.x = v.encode(item.prompt);
  ex.target.push_back(v.id("<think>"));
  for (int id : v.encode(*item.cot)) ex.target.push_back(id);
  ex.target.push_back(v.id("</think>"));
  ex.target.push_back(v.id("<answer>"));
  for (int id : v.encode(item.answer)) ex.target.push_back(id);
  ex.target.push_back(v.id("</answer>"));
  ex.target.push_back(v.eos());
  return ex;
}

inline std::vector<CoTExample> build_cot_examples(const Dataset& ds) {
  std::vector<CoTExample> out;
  out.reserve(ds.items.size());
  for (const QAItem& it : ds.items) out.push_back(make_cot_example(it));
  return out;
}

/// Plain-SFT variant without the thinking span: <answer> a </answer> <eos>.
/// Used as the ablation baseline when comparing GRPO initializations.
inline std::vector<CoTExample> build_plain_examples(const Dataset& ds) {
  const Vocab& v = default_vocab();
  std::vector<CoTExample> out;
  out.reserve(ds.items.size());
  for (const QAItem& it : ds.items) {
    CoTExample ex;
    ex.x = v.encode(it.prompt);
    ex.target.push_back(v.id("<answer>"));
    for (int id : v.encode(it.answer)) ex.target.push_back(id);
    ex.target.push_back(v.id("</answer>"));
    ex.target.push_back(v.eos());
    out.push_back(std::move(ex));
  }
  return out;
}

/// Mean over the batch of -logprob(x, target) / |target|. Loss is taken over
/// target tokens only; prompt positions contribute nothing by construction.
inline double sft_loss(const PolicyParams& p,
                       const std::vector<CoTExample>& batch) {
  if (batch.empty()) throw ConfigError("sft_loss: empty batch");
  double total = 0.0;
  for (const CoTExample& ex : batch) {
    if (ex.target.empty()) throw DataError("sft example with empty target");
    total += -logprob(p, ex.x, ex.target) /
             static_cast<double>(ex.target.size());
  }
  return total / static_cast<double>(batch.size());
}

/// Loss plus its exact minimization gradient in one pass.
inline double sft_loss_and_grad(const PolicyParams& p,
                                const std::vector<CoTExample>& batch,
                                PolicyParams& grad) {
  if (batch.empty()) throw ConfigError("sft_loss: empty batch");
  double total = 0.0;
  for (const CoTExample& ex : batch) {
    if (ex.target.empty()) throw DataError("sft example with empty target");
    const double w =
        -1.0 / (static_cast<double>(ex.target.size()) *
                static_cast<double>(batch.size()));
    total += -logprob(p, ex.x, ex.target) /
             static_cast<double>(ex.target.size());
    grad_weighted_loglik_into(p, ex.x, {{ex.target, w}}, grad);
  }
  return total / static_cast<double>(batch.size());
}

struct SftCurvePoint {
  int step;
  int epoch;
  double loss;
};

struct SftResult {
  PolicyParams params;
  std::vector<SftCurvePoint> curve;
};

/// Adam with global-norm clipping, per-epoch shuffling from the seed, one
/// curve point per step. Deterministic for a fixed (examples, config).
inline SftResult train_sft(
    const PolicyParams& init, const std::vector<CoTExample>& examples,
    const SFTConfig& cfg,
    const std::function<void(int, const PolicyParams&)>& on_checkpoint = {}) {
  cfg.validate();
  if (examples.empty()) throw DataError("train_sft: no examples");
  SftResult res;
  res.params = init;
  Adam opt(init, cfg.beta1, cfg.beta2);
  Rng master(cfg.seed);

  std::vector<size_t> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = master.split(static_cast<uint64_t>(epoch));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[shuffle_rng.next_int(0, static_cast<int>(i) - 1)]);
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(cfg.batch_size)) {
      std::vector<CoTExample> batch;
      for (size_t i = start;
           i < std::min(order.size(),
                        start + static_cast<size_t>(cfg.batch_size));
           ++i)
        batch.push_back(examples[order[i]]);
      PolicyParams grad = zeros_like(res.params);
      const double loss = sft_loss_and_grad(res.params, batch, grad);
      if (!std::isfinite(loss))
        throw NumericError("non-finite SFT loss at step " +
                           std::to_string(step));
      clip_global_norm(grad, cfg.clip_norm);
      opt.step(res.params, grad, cfg.lr);
      res.curve.push_back({step, epoch, loss});
      ++step;
      if (on_checkpoint && cfg.checkpoint_every > 0 &&
          step % cfg.checkpoint_every == 0)
        on_checkpoint(step, res.params);
    }
  }
  if (on_checkpoint) on_checkpoint(step, res.params);
  return res;
}

inline void write_sft_curve_csv(const std::string& path,
                                const std::vector<SftCurvePoint>& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "step,epoch,loss\n";
  char buf[64];
  for (const SftCurvePoint& pt : curve) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.10g\n", pt.step, pt.epoch,
                  pt.loss);
    out << buf;
  }
}

}  // namespace routelab
