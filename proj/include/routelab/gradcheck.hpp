#pragma once

#include <cmath>
#include <functional>

#include "routelab/grpo.hpp"
#include "routelab/sft.hpp"

namespace routelab {

struct GradCheckResult {
  double max_rel_err_sft = 0.0;
  double max_rel_err_grpo = 0.0;
  int configs = 0;

  double worst() const { return std::max(max_rel_err_sft, max_rel_err_grpo); }
};

namespace detail {

// Central differences over every parameter coordinate. The mismatch metric
// is |analytic - fd| / max(|analytic|, |fd|, 1e-3): relative where gradients
// are appreciable, a 1e-7 absolute bound where they vanish (finite-difference
// noise at step 1e-5 sits around 1e-9).
inline double fd_mismatch(PolicyParams& params,
                          const std::function<double()>& objective,
                          const PolicyParams& analytic) {
  const double step = 1e-5;
  double worst = 0.0;
  auto views = tensor_views(params);
  auto gviews = tensor_views(analytic);
  for (size_t t = 0; t < views.size(); ++t) {
    for (size_t i = 0; i < views[t].n; ++i) {
      const double saved = views[t].data[i];
      views[t].data[i] = saved + step;
      const double f1 = objective();
      views[t].data[i] = saved - step;
      const double f2 = objective();
      views[t].data[i] = saved;
      const double fd = (f1 - f2) / (2 * step);
      const double a = gviews[t].data[i];
      worst = std::max(
          worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3}));
    }
  }
  return worst;
}

inline std::vector<int> random_token_ids(Rng& rng, int len) {
  std::vector<int> out;
  const int vmax = static_cast<int>(default_vocab().size()) - 1;
  for (int i = 0; i < len; ++i) out.push_back(rng.next_int(0, vmax));
  return out;
}

}  // namespace detail

/// Checks analytic gradients of the SFT loss and the full GRPO objective
/// (weighted group likelihood minus beta times the KL term) against central
/// finite differences on randomized small model configurations.
inline GradCheckResult run_gradcheck(int n_configs, uint64_t seed) {
  if (n_configs < 1) throw ConfigError("gradcheck needs >= 1 config");
  GradCheckResult res;
  res.configs = n_configs;
  Rng master(seed);
  for (int c = 0; c < n_configs; ++c) {
    Rng rng = master.split(c);
    ModelConfig mc;
    mc.d_model = rng.next_int(3, 6);
    mc.hidden = rng.next_int(4, 8);
    Rng prng = rng.split(1);
    PolicyParams params =
        init_params(static_cast<int>(default_vocab().size()), mc, prng);
    Rng rrng = rng.split(2);
    PolicyParams ref =
        init_params(static_cast<int>(default_vocab().size()), mc, rrng);

    // SFT loss gradient
    {
      std::vector<CoTExample> batch;
      const int b = rng.next_int(1, 2);
      for (int i = 0; i < b; ++i) {
        CoTExample ex;
        ex.x = detail::random_token_ids(rng, rng.next_int(0, 4));
        ex.target = detail::random_token_ids(rng, rng.next_int(1, 6));
        batch.push_back(std::move(ex));
      }
      PolicyParams grad = zeros_like(params);
      sft_loss_and_grad(params, batch, grad);
      const double err = detail::fd_mismatch(
          params, [&]() { return sft_loss(params, batch); }, grad);
      res.max_rel_err_sft = std::max(res.max_rel_err_sft, err);
    }

    // full GRPO objective gradient, KL term included
    {
      GroupSample g;
      g.x = detail::random_token_ids(rng, rng.next_int(1, 3));
      const int k = rng.next_int(2, 3);
      std::vector<double> raw;
      for (int i = 0; i < k; ++i) {
        g.completions.push_back(
            detail::random_token_ids(rng, rng.next_int(1, 5)));
        raw.push_back(rng.next_double());
      }
      g.weights = grpo_weights(normalize_rewards(raw, 1e-6), 1.0);
      const double beta = 0.05;
      PolicyParams grad = zeros_like(params);
      group_objective_grad_into(params, ref, g, beta, 1.0, grad);
      auto objective = [&]() {
        double obj = 0.0;
        for (size_t i = 0; i < g.completions.size(); ++i)
          obj += g.weights[i] * logprob(params, g.x, g.completions[i]);
        return obj - beta * kl_term(params, ref, g);
      };
      const double err = detail::fd_mismatch(params, objective, grad);
      res.max_rel_err_grpo = std::max(res.max_rel_err_grpo, err);
    }
  }
  return res;
}

}  // namespace routelab
