#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "routelab/evalsuite.hpp"
#include "routelab/optimizer.hpp"
#include "routelab/seqmodel.hpp"
#include "routelab/taskgen.hpp"

namespace routelab {

struct GRPOConfig {
  int group_size = 8;                // K
  double weight_temperature = 1.0;   // tau
  double kl_coeff = 0.01;            // beta
  double eps_std = 1e-6;             // normalization floor
  double sampling_temperature = 1.0;
  int max_len = 128;
  double lr = 5e-4;
  int steps = 400;
  double wrong_reward = 0.0;         // 0 or -1
  double format_bonus = 0.0;
  uint64_t seed = 1;
  int batch_size = 4;
  double clip_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  // Standard clipped-ratio variant for comparison runs. Off by default: the
  // default objective is the softmax-weighted group likelihood as written.
  bool clipped_ratio_variant = false;
  // Rewards RouteDesc items with their rubric percentage instead of
  // excluding them; requires a route table at training time.
  bool rubric_reward_for_desc = false;
  int checkpoint_every = 0;

  void validate() const {
    if (group_size < 2) throw ConfigError("grpo group_size must be >= 2");
    if (weight_temperature <= 0)
      throw ConfigError("grpo weight temperature must be > 0");
    if (kl_coeff < 0) throw ConfigError("grpo kl coefficient must be >= 0");
    if (eps_std <= 0) throw ConfigError("grpo eps_std must be > 0");
    if (sampling_temperature <= 0)
      throw ConfigError("grpo sampling temperature must be > 0");
    if (max_len < 1) throw ConfigError("grpo max_len must be >= 1");
    if (lr < 0) throw ConfigError("grpo learning rate must be >= 0");
    if (steps < 1) throw ConfigError("grpo steps must be >= 1");
    if (batch_size < 1) throw ConfigError("grpo batch_size must be >= 1");
    if (wrong_reward != 0.0 && wrong_reward != -1.0)
      throw ConfigError("wrong_reward must be 0 or -1");
    if (format_bonus < 0) throw ConfigError("format_bonus must be >= 0");
    if (clip_norm <= 0) throw ConfigError("grpo clip norm must be > 0");
  }
};

/// One sampled group for a single query: K completions with their raw,
/// normalized, and softmax-weighted rewards.
struct GroupSample {
  std::string query_id;
  std::vector<int> x;
  std::vector<std::vector<int>> completions;
  std::vector<double> rewards;
  std::vector<double> normalized;
  std::vector<double> weights;
};

struct StepStats {
  double mean_reward = 0.0;
  double reward_std = 0.0;
  double kl = 0.0;
  double objective = 0.0;
  double weight_entropy = 0.0;
  double wall_time_s = 0.0;
};

/// Exact-match MCQ reward: 1 for the correct option letter inside a
/// well-formed <answer>...</answer> region, wrong_reward otherwise.
/// Malformed output is a reward case, never an error; format_bonus is added
/// whenever the delimiters are well-formed, regardless of correctness.
inline double reward_mcq(const QAItem& item, const std::string& completion,
                         const GRPOConfig& cfg) {
  if (item.kind == TaskKind::RouteDesc)
    throw ConfigError("reward_mcq called on a RouteDesc item");
  auto region = extract_answer_region(completion);
  if (!region) return cfg.wrong_reward;
  const bool correct = first_word(*region) == item.answer;
  return (correct ? 1.0 : cfg.wrong_reward) + cfg.format_bonus;
}

/// Rubric-percentage reward for open-ended descriptions (opt-in).
inline double reward_route_desc(const QAItem& item,
                                const std::string& completion,
                                const Route& route, const GRPOConfig& cfg) {
  auto region = extract_answer_region(completion);
  if (!region) return cfg.wrong_reward;
  return rubric_score(*region, route, item.polarity).percent / 100.0 +
         cfg.format_bonus;
}

/// r~ = (r - mean) / (population std + eps_std). A constant group maps to
/// all zeros (and thence to uniform weights).
inline std::vector<double> normalize_rewards(const std::vector<double>& r,
                                             double eps_std) {
  if (r.size() < 2) throw ConfigError("reward group needs >= 2 members");
  const double k = static_cast<double>(r.size());
  const double mean = std::accumulate(r.begin(), r.end(), 0.0) / k;
  double var = 0.0;
  for (double v : r) var += (v - mean) * (v - mean);
  const double denom = std::sqrt(var / k) + eps_std;
  std::vector<double> out(r.size());
  for (size_t i = 0; i < r.size(); ++i)
    out[i] = denom == 0.0 ? 0.0 : (r[i] - mean) / denom;
  return out;
}

/// w_k = exp(r~_k / tau) / sum_j exp(r~_j / tau), max-subtracted.
inline std::vector<double> grpo_weights(const std::vector<double>& rtilde,
                                        double tau) {
  if (tau <= 0) throw ConfigError("weight temperature must be > 0");
  if (rtilde.empty()) throw ConfigError("empty weight group");
  double maxv = rtilde[0];
  for (double v : rtilde) maxv = std::max(maxv, v);
  std::vector<double> out(rtilde.size());
  double total = 0.0;
  for (size_t i = 0; i < rtilde.size(); ++i) {
    out[i] = std::exp((rtilde[i] - maxv) / tau);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

namespace detail {

inline void check_same_shape(const PolicyParams& a, const PolicyParams& b) {
  if (a.vocab_size != b.vocab_size || a.config.d_model != b.config.d_model ||
      a.config.hidden != b.config.hidden)
    throw ConfigError("policy/reference parameter shape mismatch");
}

}  // namespace detail

/// Monte-Carlo KL estimate along the group's completions: for each sampled
/// y_k, the mean over positions of the exact categorical
/// KL(pi_theta(.|prefix) || pi_ref(.|prefix)), then the mean over the group.
/// Clamped at zero against roundoff.
inline double kl_term(const PolicyParams& params, const PolicyParams& ref,
                      const GroupSample& group) {
  detail::check_same_shape(params, ref);
  if (group.completions.empty()) return 0.0;
  double total = 0.0;
  int counted = 0;
  for (const auto& y : group.completions) {
    if (y.empty()) continue;
    auto dp = next_token_distributions(params, group.x, y);
    auto dq = next_token_distributions(ref, group.x, y);
    double per = 0.0;
    for (size_t t = 0; t < y.size(); ++t) {
      double kl = 0.0;
      for (int v = 0; v < dp[t].size(); ++v)
        kl += dp[t][v] * (std::log(dp[t][v]) - std::log(dq[t][v]));
      per += kl;
    }
    total += per / static_cast<double>(y.size());
    ++counted;
  }
  if (counted == 0) return 0.0;
  return std::max(0.0, total / counted);
}

struct GroupGradStats {
  double weighted_loglik = 0.0;
  double kl = 0.0;
  double objective = 0.0;
};

/// Ascent gradient of the group objective
///   J = sum_k weights_k * log pi_theta(y_k | x) - beta * kl_term(...)
/// for fixed completions and weights, accumulated into grad with an overall
/// scale factor (the 1/batch averaging). One trace per completion; the KL
/// contribution is exact per position along the sampled prefixes.
inline GroupGradStats group_objective_grad_into(
    const PolicyParams& p, const PolicyParams& ref, const GroupSample& g,
    double beta, double scale, PolicyParams& grad) {
  detail::check_same_shape(p, ref);
  if (g.completions.size() != g.weights.size())
    throw ConfigError("group weights/completions size mismatch");
  const Vocab& v = default_vocab();
  const double k_count = static_cast<double>(g.completions.size());
  GroupGradStats stats;
  int kl_counted = 0;
  for (size_t k = 0; k < g.completions.size(); ++k) {
    const std::vector<int>& y = g.completions[k];
    const double w = g.weights[k];
    if (y.empty()) continue;
    std::vector<int> inputs = detail::model_inputs(v, g.x, y);
    detail::SeqTrace trace = detail::run_cell(p, inputs, inputs.size() - 1);
    const size_t first = 1 + g.x.size();
    auto ref_dists = next_token_distributions(ref, g.x, y);
    const double t_count = static_cast<double>(y.size());

    std::vector<Eigen::VectorXd> dlogits(trace.h.size());
    double comp_kl = 0.0;
    for (size_t t = 0; t < y.size(); ++t) {
      Eigen::VectorXd logits = detail::logits_at(p, trace, first + t);
      const double lse = detail::log_sum_exp(logits);
      Eigen::VectorXd logp = logits.array() - lse;
      // same softmax path as grad_weighted_loglik so that the beta = 0,
      // equal-weights case reproduces the plain likelihood ascent bit for bit
      Eigen::VectorXd probs = detail::stable_softmax(logits);
      stats.weighted_loglik += w * logp[y[t]];

      Eigen::VectorXd dl = -w * probs;
      dl[y[t]] += w;

      Eigen::VectorXd s =
          logp - ref_dists[t].array().log().matrix();
      const double kl_t = probs.dot(s);
      comp_kl += kl_t;
      if (beta != 0.0) {
        dl -= (beta / (k_count * t_count)) *
              (probs.array() * (s.array() - kl_t)).matrix();
      }
      dlogits[first + t] = scale * dl;
    }
    detail::backprop(p, trace, dlogits, grad);
    stats.kl += comp_kl / t_count;
    ++kl_counted;
  }
  if (kl_counted > 0) stats.kl = std::max(0.0, stats.kl / kl_counted);
  stats.objective = stats.weighted_loglik - beta * stats.kl;
  return stats;
}

/// One GRPO update over a batch of queries. For each query: sample K
/// completions, reward and normalize them, form softmax weights, accumulate
/// the analytic objective gradient, then take a single clipped
/// adaptive-moment ascent step.
///
/// RNG contract (relied on for determinism and replay): item j uses
/// rng.split(j); its k-th completion uses rng.split(j).split(k). The passed
/// stream is never consumed directly.
inline StepStats grpo_step(PolicyParams& params, const PolicyParams& ref,
                           const std::vector<const QAItem*>& batch,
                           const GRPOConfig& cfg, Rng& rng, Adam& opt,
                           const RouteIndex* routes = nullptr) {
  cfg.validate();
  if (batch.empty()) throw ConfigError("grpo_step: empty batch");
  const auto t0 = std::chrono::steady_clock::now();
  const Vocab& v = default_vocab();
  PolicyParams grad = zeros_like(params);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  std::vector<double> all_rewards;
  double obj_sum = 0.0, kl_sum = 0.0, entropy_sum = 0.0;

  for (size_t j = 0; j < batch.size(); ++j) {
    const QAItem& item = *batch[j];
    Rng item_rng = rng.split(j);
    GroupSample g;
    g.query_id = item.id;
    g.x = v.encode(item.prompt);
    for (int k = 0; k < cfg.group_size; ++k) {
      Rng srng = item_rng.split(static_cast<uint64_t>(k));
      SampledSeq s =
          sample(params, g.x, cfg.sampling_temperature, cfg.max_len, srng);
      g.completions.push_back(std::move(s.ids));
    }
    for (const auto& y : g.completions) {
      const std::string text = v.decode(y);
      double r;
      if (item.kind == TaskKind::RouteDesc) {
        if (!routes)
          throw ConfigError("RouteDesc reward requires a route table");
        auto found = routes->find(item.route_id);
        if (found == routes->end())
          throw DataError("no route for item " + item.id);
        r = reward_route_desc(item, text, *found->second, cfg);
      } else {
        r = reward_mcq(item, text, cfg);
      }
      g.rewards.push_back(r);
      all_rewards.push_back(r);
    }
    g.normalized = normalize_rewards(g.rewards, cfg.eps_std);
    g.weights = grpo_weights(g.normalized, cfg.weight_temperature);
    for (double w : g.weights)
      entropy_sum += w > 0 ? -w * std::log(w) * inv_b : 0.0;

    GroupSample for_grad = g;
    if (cfg.clipped_ratio_variant) {
      // one update per sample batch: the ratio is 1 at the expansion point,
      // so the clipped surrogate's gradient is the advantage-weighted
      // likelihood gradient with coefficients r~_k / K
      for (size_t k = 0; k < for_grad.weights.size(); ++k)
        for_grad.weights[k] =
            g.normalized[k] / static_cast<double>(cfg.group_size);
    }
    GroupGradStats stats = group_objective_grad_into(
        params, ref, for_grad, cfg.kl_coeff, inv_b, grad);
    obj_sum += stats.objective * inv_b;
    kl_sum += stats.kl * inv_b;
  }

  if (!std::isfinite(obj_sum))
    throw NumericError("non-finite GRPO objective (mean reward " +
                       std::to_string(all_rewards.empty()
                                          ? 0.0
                                          : std::accumulate(all_rewards.begin(),
                                                            all_rewards.end(),
                                                            0.0) /
                                                all_rewards.size()) +
                       ")");

  // ascend J: feed the optimizer the negated, clipped gradient
  for (const TensorView& view : tensor_views(grad))
    for (size_t i = 0; i < view.n; ++i) view.data[i] = -view.data[i];
  clip_global_norm(grad, cfg.clip_norm);
  opt.step(params, grad, cfg.lr);

  StepStats out;
  const double n = static_cast<double>(all_rewards.size());
  const double mean =
      std::accumulate(all_rewards.begin(), all_rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : all_rewards) var += (r - mean) * (r - mean);
  out.mean_reward = mean;
  out.reward_std = std::sqrt(var / n);
  out.kl = kl_sum;
  out.objective = obj_sum;
  out.weight_entropy = entropy_sum;
  out.wall_time_s = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  return out;
}

struct GrpoResult {
  PolicyParams params;
  std::vector<StepStats> curve;
};

/// Stage 2: GRPO from a frozen reference. The reference policy is the
/// initialization itself (pi_ref = pi_theta_init) and never updates.
/// Trains on MCQ items; RouteDesc items join only under the rubric-reward
/// flag. Deterministic for fixed (items, config).
inline GrpoResult train_grpo(
    const PolicyParams& init, const std::vector<QAItem>& items,
    const GRPOConfig& cfg, const RouteIndex* routes = nullptr,
    const std::function<void(int, const StepStats&)>& on_step = {},
    const std::function<void(int, const PolicyParams&)>& on_checkpoint = {}) {
  cfg.validate();
  if (cfg.rubric_reward_for_desc && !routes)
    throw ConfigError("rubric rewards need a route table");
  std::vector<const QAItem*> pool;
  for (const QAItem& it : items) {
    if (it.kind != TaskKind::RouteDesc || cfg.rubric_reward_for_desc)
      pool.push_back(&it);
  }
  if (pool.empty())
    throw ConfigError("no trainable items for GRPO (MCQ items required)");

  GrpoResult res;
  res.params = init;
  const PolicyParams ref = init;
  Adam opt(init, cfg.beta1, cfg.beta2);
  Rng master(cfg.seed);

  std::vector<size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0u);
  size_t cursor = order.size();  // force shuffle on first use
  uint64_t epoch = 0;

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<const QAItem*> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor >= order.size()) {
        Rng shuffle_rng = master.split(0x0E70C000000ull + epoch);
        for (size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1],
                    order[shuffle_rng.next_int(0, static_cast<int>(i) - 1)]);
        cursor = 0;
        ++epoch;
      }
      batch.push_back(pool[order[cursor++]]);
    }
    Rng step_rng = master.split(static_cast<uint64_t>(step));
    StepStats stats;
    try {
      stats = grpo_step(res.params, ref, batch, cfg, step_rng, opt, routes);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at GRPO step " +
                         std::to_string(step));
    }
    res.curve.push_back(stats);
    if (on_step) on_step(step, stats);
    if (on_checkpoint && cfg.checkpoint_every > 0 &&
        (step + 1) % cfg.checkpoint_every == 0)
      on_checkpoint(step + 1, res.params);
  }
  return res;
}

inline void write_grpo_curve_csv(const std::string& path,
                                 const std::vector<StepStats>& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << "step,mean_reward,reward_std,kl,objective,weight_entropy\n";
  char buf[160];
  for (size_t i = 0; i < curve.size(); ++i) {
    const StepStats& s = curve[i];
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n", i,
                  s.mean_reward, s.reward_std, s.kl, s.objective,
                  s.weight_entropy);
    out << buf;
  }
}

}  // namespace routelab
