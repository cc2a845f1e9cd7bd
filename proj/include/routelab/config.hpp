#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "routelab/grpo.hpp"
#include "routelab/sft.hpp"
#include "routelab/taskgen.hpp"

namespace routelab {

/// Everything one experiment needs: generation, split, both trainers, eval.
/// File values overlay these defaults; command-line flags overlay both.
struct RunConfig {
  uint64_t seed = 1;
  std::string out_dir = "out";

  DatasetGenConfig gen;
  int n_routes = 700;

  std::string split_mode = "ratio";  // "ratio" | "scene_ood"
  int ratio_train = 1;
  int ratio_test = 6;
  std::vector<SceneKind> train_scenes{SceneKind::IndoorSingle,
                                      SceneKind::IndoorMulti};
  std::vector<SceneKind> test_scenes{SceneKind::Outdoor};
  int train_items = 630;  // deterministic subsample of the train side; 0 = all

  SFTConfig sft;
  GRPOConfig grpo;

  int eval_max_len = 160;

  void validate() const {
    if (n_routes < 1) throw ConfigError("n_routes must be >= 1");
    if (split_mode != "ratio" && split_mode != "scene_ood")
      throw ConfigError("split_mode must be ratio or scene_ood");
    if (ratio_train < 1 || ratio_test < 1)
      throw ConfigError("split ratio parts must be positive");
    if (train_items < 0) throw ConfigError("train_items must be >= 0");
    if (eval_max_len < 1) throw ConfigError("eval_max_len must be >= 1");
    sft.validate();
    grpo.validate();
  }
};

namespace detail {

inline void require_keys(const json& j, std::initializer_list<const char*> ok,
                         const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : ok)
      if (key == k) known = true;
    if (!known)
      throw ConfigError("unknown config key \"" + key + "\" in " + where);
  }
}

inline std::vector<SceneKind> scenes_from_json(const json& arr) {
  std::vector<SceneKind> out;
  for (const auto& s : arr) out.push_back(scene_from_string(s.get<std::string>()));
  return out;
}

}  // namespace detail

inline json run_config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  json gen = c.gen.to_json();
  gen["n_routes"] = c.n_routes;
  j["gen"] = std::move(gen);
  json split;
  split["mode"] = c.split_mode;
  split["ratio"] = json::array({c.ratio_train, c.ratio_test});
  json ts = json::array(), xs = json::array();
  for (SceneKind s : c.train_scenes) ts.push_back(to_string(s));
  for (SceneKind s : c.test_scenes) xs.push_back(to_string(s));
  split["train_scenes"] = std::move(ts);
  split["test_scenes"] = std::move(xs);
  split["train_items"] = c.train_items;
  j["split"] = std::move(split);
  json sft;
  sft["lr"] = c.sft.lr;
  sft["batch_size"] = c.sft.batch_size;
  sft["epochs"] = c.sft.epochs;
  sft["clip_norm"] = c.sft.clip_norm;
  sft["beta1"] = c.sft.beta1;
  sft["beta2"] = c.sft.beta2;
  sft["checkpoint_every"] = c.sft.checkpoint_every;
  j["sft"] = std::move(sft);
  json grpo;
  grpo["group_size"] = c.grpo.group_size;
  grpo["weight_temperature"] = c.grpo.weight_temperature;
  grpo["kl_coeff"] = c.grpo.kl_coeff;
  grpo["eps_std"] = c.grpo.eps_std;
  grpo["sampling_temperature"] = c.grpo.sampling_temperature;
  grpo["max_len"] = c.grpo.max_len;
  grpo["lr"] = c.grpo.lr;
  grpo["steps"] = c.grpo.steps;
  grpo["wrong_reward"] = c.grpo.wrong_reward;
  grpo["format_bonus"] = c.grpo.format_bonus;
  grpo["batch_size"] = c.grpo.batch_size;
  grpo["clip_norm"] = c.grpo.clip_norm;
  grpo["clipped_ratio_variant"] = c.grpo.clipped_ratio_variant;
  grpo["rubric_reward_for_desc"] = c.grpo.rubric_reward_for_desc;
  grpo["checkpoint_every"] = c.grpo.checkpoint_every;
  j["grpo"] = std::move(grpo);
  json eval;
  eval["max_len"] = c.eval_max_len;
  j["eval"] = std::move(eval);
  return j;
}

/// Overlays file values onto defaults. Unknown keys are config errors.
inline void apply_config_json(const json& j, RunConfig& c) {
  detail::require_keys(j, {"seed", "out_dir", "gen", "split", "sft", "grpo",
                           "eval"},
                       "top level");
  if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  if (j.contains("gen")) {
    const json& g = j["gen"];
    detail::require_keys(g,
                         {"n_routes", "grid_size", "segment_count_range",
                          "length_range", "landmark_prob", "action_prob",
                          "max_attempts", "scenes"},
                         "gen");
    if (g.contains("n_routes")) c.n_routes = g["n_routes"].get<int>();
    if (g.contains("grid_size"))
      c.gen.route.grid_size = g["grid_size"].get<int>();
    if (g.contains("segment_count_range"))
      c.gen.route.segment_count_range = {g["segment_count_range"][0].get<int>(),
                                         g["segment_count_range"][1].get<int>()};
    if (g.contains("length_range"))
      c.gen.route.length_range = {g["length_range"][0].get<int>(),
                                  g["length_range"][1].get<int>()};
    if (g.contains("landmark_prob"))
      c.gen.route.landmark_prob = g["landmark_prob"].get<double>();
    if (g.contains("action_prob"))
      c.gen.route.action_prob = g["action_prob"].get<double>();
    if (g.contains("max_attempts"))
      c.gen.route.max_attempts = g["max_attempts"].get<int>();
    if (g.contains("scenes")) c.gen.scenes = detail::scenes_from_json(g["scenes"]);
  }
  if (j.contains("split")) {
    const json& s = j["split"];
    detail::require_keys(
        s, {"mode", "ratio", "train_scenes", "test_scenes", "train_items"},
        "split");
    if (s.contains("mode")) c.split_mode = s["mode"].get<std::string>();
    if (s.contains("ratio")) {
      c.ratio_train = s["ratio"][0].get<int>();
      c.ratio_test = s["ratio"][1].get<int>();
    }
    if (s.contains("train_scenes"))
      c.train_scenes = detail::scenes_from_json(s["train_scenes"]);
    if (s.contains("test_scenes"))
      c.test_scenes = detail::scenes_from_json(s["test_scenes"]);
    if (s.contains("train_items")) c.train_items = s["train_items"].get<int>();
  }
  if (j.contains("sft")) {
    const json& s = j["sft"];
    detail::require_keys(s,
                         {"lr", "batch_size", "epochs", "clip_norm", "beta1",
                          "beta2", "checkpoint_every"},
                         "sft");
    if (s.contains("lr")) c.sft.lr = s["lr"].get<double>();
    if (s.contains("batch_size")) c.sft.batch_size = s["batch_size"].get<int>();
    if (s.contains("epochs")) c.sft.epochs = s["epochs"].get<int>();
    if (s.contains("clip_norm")) c.sft.clip_norm = s["clip_norm"].get<double>();
    if (s.contains("beta1")) c.sft.beta1 = s["beta1"].get<double>();
    if (s.contains("beta2")) c.sft.beta2 = s["beta2"].get<double>();
    if (s.contains("checkpoint_every"))
      c.sft.checkpoint_every = s["checkpoint_every"].get<int>();
  }
  if (j.contains("grpo")) {
    const json& g = j["grpo"];
    detail::require_keys(
        g, {"group_size", "weight_temperature", "kl_coeff", "eps_std",
            "sampling_temperature", "max_len", "lr", "steps", "wrong_reward",
            "format_bonus", "batch_size", "clip_norm", "clipped_ratio_variant",
            "rubric_reward_for_desc", "checkpoint_every"},
        "grpo");
    if (g.contains("group_size")) c.grpo.group_size = g["group_size"].get<int>();
    if (g.contains("weight_temperature"))
      c.grpo.weight_temperature = g["weight_temperature"].get<double>();
    if (g.contains("kl_coeff")) c.grpo.kl_coeff = g["kl_coeff"].get<double>();
    if (g.contains("eps_std")) c.grpo.eps_std = g["eps_std"].get<double>();
    if (g.contains("sampling_temperature"))
      c.grpo.sampling_temperature = g["sampling_temperature"].get<double>();
    if (g.contains("max_len")) c.grpo.max_len = g["max_len"].get<int>();
    if (g.contains("lr")) c.grpo.lr = g["lr"].get<double>();
    if (g.contains("steps")) c.grpo.steps = g["steps"].get<int>();
    if (g.contains("wrong_reward"))
      c.grpo.wrong_reward = g["wrong_reward"].get<double>();
    if (g.contains("format_bonus"))
      c.grpo.format_bonus = g["format_bonus"].get<double>();
    if (g.contains("batch_size")) c.grpo.batch_size = g["batch_size"].get<int>();
    if (g.contains("clip_norm")) c.grpo.clip_norm = g["clip_norm"].get<double>();
    if (g.contains("clipped_ratio_variant"))
      c.grpo.clipped_ratio_variant = g["clipped_ratio_variant"].get<bool>();
    if (g.contains("rubric_reward_for_desc"))
      c.grpo.rubric_reward_for_desc = g["rubric_reward_for_desc"].get<bool>();
    if (g.contains("checkpoint_every"))
      c.grpo.checkpoint_every = g["checkpoint_every"].get<int>();
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    detail::require_keys(e, {"max_len"}, "eval");
    if (e.contains("max_len")) c.eval_max_len = e["max_len"].get<int>();
  }
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  RunConfig c;
  apply_config_json(j, c);
  return c;
}

inline uint64_t config_hash(const RunConfig& c) {
  const std::string dump = run_config_to_json(c).dump();
  return fnv1a64(dump.data(), dump.size());
}

/// Sidecar manifest carried by every command output; an artifact is
/// reproducible from its manifest alone.
inline void write_manifest(const std::string& path, const std::string& command,
                           const RunConfig& cfg, json extra = json::object()) {
  json j;
  j["command"] = command;
  j["seed"] = cfg.seed;
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));
  j["config_hash"] = buf;
  j["effective_config"] = run_config_to_json(cfg);
  for (auto& [k, v] : extra.items()) j[k] = v;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace routelab
