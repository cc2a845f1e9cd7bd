#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "routelab/errors.hpp"
#include "routelab/rng.hpp"
#include "routelab/vocab.hpp"

namespace routelab {

struct ModelConfig {
  int d_model = 32;
  int hidden = 64;
};

/// All differentiable parameters of the policy: token embeddings, one gated
/// recurrent cell (update gate + candidate), and the output projection.
/// 64-bit reals throughout so finite-difference checks stay tight.
struct PolicyParams {
  ModelConfig config;
  int vocab_size = 0;
  Eigen::MatrixXd embedding;               // vocab x d
  Eigen::MatrixXd w_update, u_update;      // h x d, h x h
  Eigen::VectorXd b_update;                // h
  Eigen::MatrixXd w_cand, u_cand;          // h x d, h x h
  Eigen::VectorXd b_cand;                  // h
  Eigen::MatrixXd w_out;                   // vocab x h
  Eigen::VectorXd b_out;                   // vocab
};

struct TensorView {
  double* data;
  size_t n;
};

/// Flat views over every parameter tensor, in checkpoint declaration order.
inline std::vector<TensorView> tensor_views(PolicyParams& p) {
  return {
      {p.embedding.data(), static_cast<size_t>(p.embedding.size())},
      {p.w_update.data(), static_cast<size_t>(p.w_update.size())},
      {p.u_update.data(), static_cast<size_t>(p.u_update.size())},
      {p.b_update.data(), static_cast<size_t>(p.b_update.size())},
      {p.w_cand.data(), static_cast<size_t>(p.w_cand.size())},
      {p.u_cand.data(), static_cast<size_t>(p.u_cand.size())},
      {p.b_cand.data(), static_cast<size_t>(p.b_cand.size())},
      {p.w_out.data(), static_cast<size_t>(p.w_out.size())},
      {p.b_out.data(), static_cast<size_t>(p.b_out.size())},
  };
}

inline std::vector<TensorView> tensor_views(const PolicyParams& p) {
  return tensor_views(const_cast<PolicyParams&>(p));
}

inline PolicyParams zeros_like(const PolicyParams& p) {
  PolicyParams z;
  z.config = p.config;
  z.vocab_size = p.vocab_size;
  z.embedding = Eigen::MatrixXd::Zero(p.embedding.rows(), p.embedding.cols());
  z.w_update = Eigen::MatrixXd::Zero(p.w_update.rows(), p.w_update.cols());
  z.u_update = Eigen::MatrixXd::Zero(p.u_update.rows(), p.u_update.cols());
  z.b_update = Eigen::VectorXd::Zero(p.b_update.size());
  z.w_cand = Eigen::MatrixXd::Zero(p.w_cand.rows(), p.w_cand.cols());
  z.u_cand = Eigen::MatrixXd::Zero(p.u_cand.rows(), p.u_cand.cols());
  z.b_cand = Eigen::VectorXd::Zero(p.b_cand.size());
  z.w_out = Eigen::MatrixXd::Zero(p.w_out.rows(), p.w_out.cols());
  z.b_out = Eigen::VectorXd::Zero(p.b_out.size());
  return z;
}

/// uniform(-0.08, 0.08) in declaration/storage order from the given stream.
inline PolicyParams init_params(int vocab_size, ModelConfig cfg, Rng& rng) {
  if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  if (cfg.d_model < 1 || cfg.hidden < 1)
    throw ConfigError("model dimensions must be positive");
  PolicyParams p;
  p.config = cfg;
  p.vocab_size = vocab_size;
  p.embedding.resize(vocab_size, cfg.d_model);
  p.w_update.resize(cfg.hidden, cfg.d_model);
  p.u_update.resize(cfg.hidden, cfg.hidden);
  p.b_update.resize(cfg.hidden);
  p.w_cand.resize(cfg.hidden, cfg.d_model);
  p.u_cand.resize(cfg.hidden, cfg.hidden);
  p.b_cand.resize(cfg.hidden);
  p.w_out.resize(vocab_size, cfg.hidden);
  p.b_out.resize(vocab_size);
  for (const TensorView& v : tensor_views(p))
    for (size_t i = 0; i < v.n; ++i)
      v.data[i] = rng.next_double() * 0.16 - 0.08;
  return p;
}

namespace detail {

inline Eigen::VectorXd stable_softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd out = (logits.array() - logits.maxCoeff()).exp();
  return out / out.sum();
}

inline double log_sum_exp(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum());
}

/// Cached forward pass of the recurrent cell over an input token stream.
/// h[k] is the hidden state after consuming inputs[0..k-1]; h[0] = 0.
struct SeqTrace {
  std::vector<int> inputs;
  std::vector<Eigen::VectorXd> h, z, c;
};

struct CellStep {
  Eigen::VectorXd z, c, h_out;
};

inline CellStep cell_step(const PolicyParams& p, const Eigen::VectorXd& h_in,
                          int token) {
  const auto e = p.embedding.row(token).transpose();
  Eigen::VectorXd az = p.w_update * e + p.u_update * h_in + p.b_update;
  CellStep out;
  out.z.resize(az.size());
  for (int i = 0; i < az.size(); ++i)
    out.z[i] = 1.0 / (1.0 + std::exp(-az[i]));
  out.c = (p.w_cand * e + p.u_cand * h_in + p.b_cand).array().tanh().matrix();
  out.h_out = ((1.0 - out.z.array()) * h_in.array() +
               out.z.array() * out.c.array())
                  .matrix();
  return out;
}

inline SeqTrace run_cell(const PolicyParams& p, const std::vector<int>& inputs,
                         size_t steps) {
  SeqTrace t;
  t.inputs = inputs;
  t.h.reserve(steps + 1);
  t.z.reserve(steps);
  t.c.reserve(steps);
  t.h.push_back(Eigen::VectorXd::Zero(p.config.hidden));
  for (size_t s = 0; s < steps; ++s) {
    CellStep step = cell_step(p, t.h.back(), inputs[s]);
    t.z.push_back(std::move(step.z));
    t.c.push_back(std::move(step.c));
    t.h.push_back(std::move(step.h_out));
  }
  return t;
}

inline std::vector<int> model_inputs(const Vocab& v, const std::vector<int>& x,
                                     const std::vector<int>& y) {
  std::vector<int> inputs;
  inputs.reserve(1 + x.size() + y.size());
  inputs.push_back(v.bos());
  inputs.insert(inputs.end(), x.begin(), x.end());
  inputs.insert(inputs.end(), y.begin(), y.end());
  return inputs;
}

inline Eigen::VectorXd logits_at(const PolicyParams& p, const SeqTrace& t,
                                 size_t h_index) {
  return p.w_out * t.h[h_index] + p.b_out;
}

/// Reverse pass through the cached trace. dlogits[k] (possibly empty) is the
/// objective gradient w.r.t. the output logits computed from h[k]; parameter
/// gradients accumulate into grad.
inline void backprop(const PolicyParams& p, const SeqTrace& t,
                     const std::vector<Eigen::VectorXd>& dlogits,
                     PolicyParams& grad) {
  const size_t steps = t.z.size();
  Eigen::VectorXd gh = Eigen::VectorXd::Zero(p.config.hidden);
  for (size_t s = steps; s-- > 0;) {
    const size_t h_idx = s + 1;
    if (h_idx < dlogits.size() && dlogits[h_idx].size() > 0) {
      const Eigen::VectorXd& dl = dlogits[h_idx];
      grad.w_out.noalias() += dl * t.h[h_idx].transpose();
      grad.b_out += dl;
      gh.noalias() += p.w_out.transpose() * dl;
    }
    const Eigen::VectorXd& h_in = t.h[s];
    const Eigen::VectorXd& z = t.z[s];
    const Eigen::VectorXd& c = t.c[s];
    const auto e = p.embedding.row(t.inputs[s]).transpose();

    Eigen::VectorXd dz = (gh.array() * (c - h_in).array()).matrix();
    Eigen::VectorXd dc = (gh.array() * z.array()).matrix();
    Eigen::VectorXd dh_in = (gh.array() * (1.0 - z.array())).matrix();
    Eigen::VectorXd dac = (dc.array() * (1.0 - c.array().square())).matrix();
    Eigen::VectorXd daz =
        (dz.array() * z.array() * (1.0 - z.array())).matrix();

    grad.w_cand.noalias() += dac * e.transpose();
    grad.u_cand.noalias() += dac * h_in.transpose();
    grad.b_cand += dac;
    grad.w_update.noalias() += daz * e.transpose();
    grad.u_update.noalias() += daz * h_in.transpose();
    grad.b_update += daz;
    grad.embedding.row(t.inputs[s]) +=
        (p.w_cand.transpose() * dac + p.w_update.transpose() * daz)
            .transpose();
    gh = dh_in;
    gh.noalias() += p.u_cand.transpose() * dac;
    gh.noalias() += p.u_update.transpose() * daz;
  }
}

}  // namespace detail

/// Sum over target positions of log softmax(logits)[y_t], conditioning on
/// BOS + x and teacher-forcing y. Prompt positions contribute nothing.
inline double logprob(const PolicyParams& p, const std::vector<int>& x,
                      const std::vector<int>& y) {
  if (y.empty()) return 0.0;
  const Vocab& v = default_vocab();
  std::vector<int> inputs = detail::model_inputs(v, x, y);
  detail::SeqTrace t = detail::run_cell(p, inputs, inputs.size() - 1);
  const size_t first_target = 1 + x.size();
  double total = 0.0;
  for (size_t k = 0; k < y.size(); ++k) {
    Eigen::VectorXd logits = detail::logits_at(p, t, first_target + k);
    total += logits[y[k]] - detail::log_sum_exp(logits);
  }
  return total;
}

/// Per-position next-token distributions along a teacher-forced pass; one
/// probability vector per target token.
inline std::vector<Eigen::VectorXd> next_token_distributions(
    const PolicyParams& p, const std::vector<int>& x,
    const std::vector<int>& y) {
  const Vocab& v = default_vocab();
  std::vector<int> inputs = detail::model_inputs(v, x, y);
  detail::SeqTrace t = detail::run_cell(p, inputs, inputs.size() - 1);
  const size_t first_target = 1 + x.size();
  std::vector<Eigen::VectorXd> out;
  out.reserve(y.size());
  for (size_t k = 0; k < y.size(); ++k)
    out.push_back(
        detail::stable_softmax(detail::logits_at(p, t, first_target + k)));
  return out;
}

struct SampledSeq {
  std::vector<int> ids;
  double logprob = 0.0;  // under the temperature-1 model
  std::vector<Eigen::VectorXd> distributions;  // only when requested
};

/// Ancestral sampling from softmax(logits / temperature); stops at EOS or
/// max_len tokens. The reported log-probability is always the temperature-1
/// policy's, since that is the model being optimized.
inline SampledSeq sample(const PolicyParams& p, const std::vector<int>& x,
                         double temperature, int max_len, Rng& rng,
                         bool keep_distributions = false) {
  if (temperature <= 0) throw ConfigError("temperature must be > 0");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  const Vocab& v = default_vocab();
  Eigen::VectorXd h = Eigen::VectorXd::Zero(p.config.hidden);
  h = detail::cell_step(p, h, v.bos()).h_out;
  for (int id : x) h = detail::cell_step(p, h, id).h_out;

  SampledSeq out;
  for (int step = 0; step < max_len; ++step) {
    Eigen::VectorXd logits = p.w_out * h + p.b_out;
    Eigen::VectorXd probs = detail::stable_softmax(logits / temperature);
    double u = rng.next_double();
    int chosen = static_cast<int>(probs.size()) - 1;
    double acc = 0.0;
    for (int i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) {
        chosen = i;
        break;
      }
    }
    out.logprob += logits[chosen] - detail::log_sum_exp(logits);
    if (keep_distributions)
      out.distributions.push_back(detail::stable_softmax(logits));
    out.ids.push_back(chosen);
    if (chosen == v.eos()) break;
    h = detail::cell_step(p, h, chosen).h_out;
  }
  return out;
}

inline std::vector<int> greedy_decode(const PolicyParams& p,
                                      const std::vector<int>& x, int max_len) {
  const Vocab& v = default_vocab();
  Eigen::VectorXd h = Eigen::VectorXd::Zero(p.config.hidden);
  h = detail::cell_step(p, h, v.bos()).h_out;
  for (int id : x) h = detail::cell_step(p, h, id).h_out;
  std::vector<int> out;
  for (int step = 0; step < max_len; ++step) {
    Eigen::VectorXd logits = p.w_out * h + p.b_out;
    int chosen = 0;
    logits.maxCoeff(&chosen);
    out.push_back(chosen);
    if (chosen == v.eos()) break;
    h = detail::cell_step(p, h, chosen).h_out;
  }
  return out;
}

/// Accumulating form of grad_weighted_loglik; adds into an existing gradient.
inline void grad_weighted_loglik_into(
    const PolicyParams& p, const std::vector<int>& x,
    const std::vector<std::pair<std::vector<int>, double>>& pairs,
    PolicyParams& grad) {
  const Vocab& v = default_vocab();
  for (const auto& [y, w] : pairs) {
    if (!std::isfinite(w)) throw NumericError("non-finite completion weight");
    if (y.empty() || w == 0.0) continue;
    std::vector<int> inputs = detail::model_inputs(v, x, y);
    detail::SeqTrace t = detail::run_cell(p, inputs, inputs.size() - 1);
    const size_t first_target = 1 + x.size();
    std::vector<Eigen::VectorXd> dlogits(t.h.size());
    for (size_t k = 0; k < y.size(); ++k) {
      Eigen::VectorXd probs =
          detail::stable_softmax(detail::logits_at(p, t, first_target + k));
      probs = -w * probs;
      probs[y[k]] += w;
      dlogits[first_target + k] = std::move(probs);
    }
    detail::backprop(p, t, dlogits, grad);
  }
}

/// Exact gradient of sum_k w_k * logprob(p, x, y_k) via backpropagation
/// through time. This is the ascent direction for the weighted likelihood.
inline PolicyParams grad_weighted_loglik(
    const PolicyParams& p, const std::vector<int>& x,
    const std::vector<std::pair<std::vector<int>, double>>& pairs) {
  PolicyParams grad = zeros_like(p);
  grad_weighted_loglik_into(p, x, pairs, grad);
  return grad;
}

// -------- checkpoints --------
// Layout: "STR1" magic, u32 version, u32 d_model, u32 hidden, u32 vocab_size,
// u64 vocab hash, then each tensor as raw 64-bit little-endian reals in
// declaration order (Eigen column-major buffers).

inline void write_checkpoint(const std::string& path, const PolicyParams& p,
                             uint64_t vocab_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write("STR1", 4);
  auto put_u32 = [&](uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  };
  put_u32(1);
  put_u32(static_cast<uint32_t>(p.config.d_model));
  put_u32(static_cast<uint32_t>(p.config.hidden));
  put_u32(static_cast<uint32_t>(p.vocab_size));
  out.write(reinterpret_cast<const char*>(&vocab_hash), sizeof(vocab_hash));
  for (const TensorView& v : tensor_views(p))
    out.write(reinterpret_cast<const char*>(v.data),
              static_cast<std::streamsize>(v.n * sizeof(double)));
  if (!out) throw DataError("short write to checkpoint: " + path);
}

inline PolicyParams read_checkpoint(const std::string& path,
                                    uint64_t expected_vocab_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "STR1")
    throw DataError("not a checkpoint file (bad magic): " + path);
  auto get_u32 = [&]() {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  };
  const uint32_t version = get_u32();
  if (version != 1)
    throw DataError("unsupported checkpoint version " +
                    std::to_string(version));
  ModelConfig cfg;
  cfg.d_model = static_cast<int>(get_u32());
  cfg.hidden = static_cast<int>(get_u32());
  const int vocab_size = static_cast<int>(get_u32());
  uint64_t vocab_hash = 0;
  in.read(reinterpret_cast<char*>(&vocab_hash), sizeof(vocab_hash));
  if (vocab_hash != expected_vocab_hash)
    throw DataError("checkpoint vocabulary hash mismatch: " + path);
  Rng dummy(0);
  PolicyParams p = init_params(vocab_size, cfg, dummy);
  for (const TensorView& v : tensor_views(p)) {
    in.read(reinterpret_cast<char*>(v.data),
            static_cast<std::streamsize>(v.n * sizeof(double)));
  }
  if (!in) throw DataError("truncated checkpoint: " + path);
  return p;
}

}  // namespace routelab
