// Command-line surface for the route-reasoning lab: dataset generation,
// splits, the two-stage trainer (CoT SFT then GRPO), evaluation, and the
// gradient self-check. Every command is deterministic for a fixed config and
// seed and drops a manifest next to its outputs.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "routelab/config.hpp"
#include "routelab/evalsuite.hpp"
#include "routelab/gradcheck.hpp"
#include "routelab/grpo.hpp"
#include "routelab/sft.hpp"

namespace fs = std::filesystem;
using namespace routelab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Distinct RNG stream tags so commands never share a derived stream.
constexpr uint64_t kStreamSplit = 0x51u;
constexpr uint64_t kStreamSubsample = 0x52u;
constexpr uint64_t kStreamModelInit = 0x53u;

struct CliState {
  RunConfig cfg;

  std::string path(const std::string& name) const {
    return (fs::path(cfg.out_dir) / name).string();
  }

  void dump_effective_config(const std::string& command) const {
    std::ofstream out(path("effective_config_" + command + ".json"),
                      std::ios::binary);
    out << run_config_to_json(cfg).dump(2) << "\n";
  }
};

Dataset load_dataset(const std::string& path) {
  Dataset ds;
  ds.items = read_items_jsonl(path);
  ds.manifest = json::object();
  return ds;
}

/// Deterministic subsample used for the small-train-set experiments:
/// shuffle by a seed-derived stream, keep the first n items.
void subsample_items(Dataset& ds, int n, uint64_t seed) {
  if (n <= 0 || static_cast<size_t>(n) >= ds.items.size()) return;
  Rng rng = Rng(seed).split(kStreamSubsample);
  for (size_t i = ds.items.size(); i > 1; --i)
    std::swap(ds.items[i - 1],
              ds.items[rng.next_int(0, static_cast<int>(i) - 1)]);
  ds.items.resize(n);
}

int cmd_gen(const CliState& st) {
  st.dump_effective_config("gen");
  Rng rng(st.cfg.seed);
  BuildResult res = build_dataset(st.cfg.gen, st.cfg.n_routes, rng);
  write_routes_jsonl(st.path("routes.jsonl"), res.routes);
  write_items_jsonl(st.path("items.jsonl"), res.dataset.items);
  {
    std::ofstream out(st.path("manifest.json"), std::ios::binary);
    out << res.dataset.manifest.dump(2) << "\n";
  }
  write_manifest(st.path("gen.manifest.json"), "gen", st.cfg,
                 {{"total_items", res.dataset.items.size()},
                  {"n_routes", res.routes.size()}});
  std::cout << "wrote " << res.dataset.items.size() << " items from "
            << res.routes.size() << " routes to " << st.cfg.out_dir << "\n";
  return kExitOk;
}

int cmd_split(const CliState& st) {
  st.dump_effective_config("split");
  Dataset ds = load_dataset(st.path("items.jsonl"));
  Dataset train, test;
  if (st.cfg.split_mode == "ratio") {
    Rng rng = Rng(st.cfg.seed).split(kStreamSplit);
    std::tie(train, test) =
        split_ratio(ds, st.cfg.ratio_train, st.cfg.ratio_test, rng);
  } else {
    std::tie(train, test) =
        split_scene_ood(ds, st.cfg.train_scenes, st.cfg.test_scenes);
  }
  subsample_items(train, st.cfg.train_items, st.cfg.seed);
  write_items_jsonl(st.path("train.jsonl"), train.items);
  write_items_jsonl(st.path("test.jsonl"), test.items);
  write_manifest(st.path("split.manifest.json"), "split", st.cfg,
                 {{"train_items", train.items.size()},
                  {"test_items", test.items.size()}});
  std::cout << "train " << train.items.size() << " / test "
            << test.items.size() << "\n";
  return kExitOk;
}

int cmd_sft(const CliState& st, bool plain) {
  st.dump_effective_config("sft");
  Dataset train = load_dataset(st.path("train.jsonl"));
  auto routes = read_routes_jsonl(st.path("routes.jsonl"));
  RouteIndex idx = route_index(routes);
  attach_cot(train, idx);
  std::vector<CoTExample> examples =
      plain ? build_plain_examples(train) : build_cot_examples(train);

  Rng prng = Rng(st.cfg.seed).split(kStreamModelInit);
  ModelConfig mc;
  PolicyParams init =
      init_params(static_cast<int>(default_vocab().size()), mc, prng);
  SFTConfig cfg = st.cfg.sft;
  cfg.seed = st.cfg.seed;
  const uint64_t vhash = default_vocab().hash();
  SftResult res = train_sft(init, examples, cfg,
                            [&](int step, const PolicyParams& p) {
                              (void)step;
                              write_checkpoint(st.path("sft_checkpoint.bin"),
                                               p, vhash);
                            });
  write_checkpoint(st.path("sft_checkpoint.bin"), res.params, vhash);
  write_sft_curve_csv(st.path("sft_curve.csv"), res.curve);
  write_manifest(st.path("sft.manifest.json"), "sft", st.cfg,
                 {{"examples", examples.size()},
                  {"plain", plain},
                  {"final_loss", res.curve.back().loss}});
  std::cout << "sft loss " << res.curve.front().loss << " -> "
            << res.curve.back().loss << " over " << res.curve.size()
            << " steps\n";
  return kExitOk;
}

int cmd_grpo(const CliState& st, const std::string& init_path) {
  st.dump_effective_config("grpo");
  Dataset train = load_dataset(st.path("train.jsonl"));
  auto routes = read_routes_jsonl(st.path("routes.jsonl"));
  RouteIndex idx = route_index(routes);

  const uint64_t vhash = default_vocab().hash();
  const std::string init_file =
      init_path.empty() ? st.path("sft_checkpoint.bin") : init_path;
  PolicyParams init = read_checkpoint(init_file, vhash);

  GRPOConfig cfg = st.cfg.grpo;
  cfg.seed = st.cfg.seed;
  GrpoResult res = train_grpo(
      init, train.items, cfg, &idx,
      [&](int step, const StepStats& s) {
        if (step % 50 == 0)
          std::cout << "step " << step << " mean_reward " << s.mean_reward
                    << " kl " << s.kl << "\n";
      },
      [&](int step, const PolicyParams& p) {
        (void)step;
        write_checkpoint(st.path("grpo_checkpoint.bin"), p, vhash);
      });
  write_checkpoint(st.path("grpo_checkpoint.bin"), res.params, vhash);
  write_grpo_curve_csv(st.path("grpo_curve.csv"), res.curve);
  write_manifest(st.path("grpo.manifest.json"), "grpo", st.cfg,
                 {{"init_checkpoint", init_file},
                  {"final_mean_reward", res.curve.back().mean_reward}});
  std::cout << "grpo mean reward " << res.curve.front().mean_reward << " -> "
            << res.curve.back().mean_reward << " over " << res.curve.size()
            << " steps\n";
  return kExitOk;
}

int cmd_eval(const CliState& st, const std::string& checkpoint,
             const std::string& dataset_file, const std::string& tag) {
  st.dump_effective_config("eval");
  const std::string ds_file =
      dataset_file.empty() ? st.path("test.jsonl") : dataset_file;
  Dataset ds = load_dataset(ds_file);
  auto routes = read_routes_jsonl(st.path("routes.jsonl"));
  RouteIndex idx = route_index(routes);
  const std::string ckpt =
      checkpoint.empty() ? st.path("grpo_checkpoint.bin") : checkpoint;
  PolicyParams params = read_checkpoint(ckpt, default_vocab().hash());

  std::vector<Prediction> preds =
      generate_predictions(params, ds.items, st.cfg.eval_max_len);
  EvalReport report = evaluate_predictions(preds, ds, &idx);

  write_predictions_jsonl(st.path("predictions_" + tag + ".jsonl"), preds);
  {
    std::ofstream out(st.path("report_" + tag + ".json"), std::ios::binary);
    out << report_to_json(report).dump(2) << "\n";
  }
  const std::string csv_path = st.path("report.csv");
  const bool fresh = !fs::exists(csv_path);
  std::ofstream csv(csv_path, std::ios::binary | std::ios::app);
  if (fresh) csv << report_csv_header() << "\n";
  csv << report_csv_row(tag, report) << "\n";
  write_manifest(st.path("eval_" + tag + ".manifest.json"), "eval", st.cfg,
                 {{"checkpoint", ckpt},
                  {"dataset", ds_file},
                  {"avg_st", report.avg_st},
                  {"avg_total", report.avg_total}});
  std::cout << report_csv_header() << "\n"
            << report_csv_row(tag, report) << "\n";
  if (!report.missing_families.empty()) {
    std::cout << "warning: missing families excluded from averages:";
    for (const auto& f : report.missing_families) std::cout << " " << f;
    std::cout << "\n";
  }
  return kExitOk;
}

int cmd_gradcheck(const CliState& st, int n_configs) {
  GradCheckResult res = run_gradcheck(n_configs, st.cfg.seed);
  std::cout << "gradcheck over " << res.configs
            << " configs: max rel err sft " << res.max_rel_err_sft
            << ", grpo " << res.max_rel_err_grpo << "\n";
  if (res.worst() > 1e-4) {
    std::cerr << "gradient check FAILED (tolerance 1e-4)\n";
    return kExitNumeric;
  }
  return kExitOk;
}

int cmd_reverse(const CliState& st, const std::string& in_file,
                const std::string& out_file) {
  (void)st;
  auto routes = read_routes_jsonl(in_file);
  for (auto& sr : routes) sr.route = reverse_route(sr.route);
  write_routes_jsonl(out_file, routes);
  std::cout << "reversed " << routes.size() << " routes\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"route-reasoning lab: synthetic benchmark + two-stage trainer"};
  app.require_subcommand(1);
  app.fallthrough();  // global --seed/--out/--config may follow the subcommand

  std::string config_path;
  uint64_t seed_override = 0;
  std::string out_override;
  app.add_option("--config", config_path, "JSON config file");
  auto* seed_opt =
      app.add_option("--seed", seed_override, "master seed override");
  app.add_option("--out", out_override, "output directory override");

  auto* gen = app.add_subcommand("gen", "generate routes + QA dataset");
  int n_routes_override = 0;
  gen->add_option("--n-routes", n_routes_override, "number of routes");

  auto* split = app.add_subcommand("split", "split items into train/test");
  std::string split_mode_override;
  int train_items_override = -1;
  split->add_option("--mode", split_mode_override, "ratio | scene_ood");
  split->add_option("--train-items", train_items_override,
                    "subsample train side to N items (0 = keep all)");

  auto* sft = app.add_subcommand("sft", "stage 1: CoT supervised fine-tuning");
  bool plain = false;
  int epochs_override = 0;
  double sft_lr_override = 0;
  sft->add_flag("--plain", plain, "train on answers only (no thinking span)");
  sft->add_option("--epochs", epochs_override, "override epochs");
  sft->add_option("--lr", sft_lr_override, "override learning rate");

  auto* grpo = app.add_subcommand("grpo", "stage 2: GRPO from a checkpoint");
  std::string init_path;
  int steps_override = 0, k_override = 0;
  double grpo_lr_override = 0, beta_override = -1, tau_override = 0;
  grpo->add_option("--init", init_path, "initial checkpoint (default: sft)");
  grpo->add_option("--steps", steps_override, "override steps");
  grpo->add_option("--lr", grpo_lr_override, "override learning rate");
  grpo->add_option("--beta", beta_override, "override KL coefficient");
  grpo->add_option("--tau", tau_override, "override weight temperature");
  grpo->add_option("--k", k_override, "override group size");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_ckpt, eval_ds, eval_tag = "eval";
  int eval_max_len_override = 0;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file");
  eval->add_option("--dataset", eval_ds, "dataset JSONL (default: test split)");
  eval->add_option("--tag", eval_tag, "row tag in report.csv");
  eval->add_option("--max-len", eval_max_len_override, "generation budget");

  auto* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient self-check");
  int gc_configs = 20;
  gradcheck->add_option("--configs", gc_configs, "number of random configs");

  auto* reverse = app.add_subcommand("reverse", "reverse a route file (debug)");
  std::string rev_in, rev_out = "reversed.jsonl";
  reverse->add_option("--routes", rev_in, "input routes JSONL")->required();
  reverse->add_option("--out-file", rev_out, "output routes JSONL");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    CliState st;
    if (!config_path.empty()) st.cfg = load_run_config(config_path);
    if (seed_opt->count() > 0) st.cfg.seed = seed_override;
    if (!out_override.empty()) st.cfg.out_dir = out_override;

    // per-command flag overrides beat file values beat defaults
    if (n_routes_override > 0) st.cfg.n_routes = n_routes_override;
    if (!split_mode_override.empty()) st.cfg.split_mode = split_mode_override;
    if (train_items_override >= 0) st.cfg.train_items = train_items_override;
    if (epochs_override > 0) st.cfg.sft.epochs = epochs_override;
    if (sft_lr_override > 0) st.cfg.sft.lr = sft_lr_override;
    if (steps_override > 0) st.cfg.grpo.steps = steps_override;
    if (grpo_lr_override > 0) st.cfg.grpo.lr = grpo_lr_override;
    if (beta_override >= 0) st.cfg.grpo.kl_coeff = beta_override;
    if (tau_override > 0) st.cfg.grpo.weight_temperature = tau_override;
    if (k_override > 0) st.cfg.grpo.group_size = k_override;
    if (eval_max_len_override > 0) st.cfg.eval_max_len = eval_max_len_override;

    st.cfg.validate();
    fs::create_directories(st.cfg.out_dir);

    if (gen->parsed()) return cmd_gen(st);
    if (split->parsed()) return cmd_split(st);
    if (sft->parsed()) return cmd_sft(st, plain);
    if (grpo->parsed()) return cmd_grpo(st, init_path);
    if (eval->parsed()) return cmd_eval(st, eval_ckpt, eval_ds, eval_tag);
    if (gradcheck->parsed()) return cmd_gradcheck(st, gc_configs);
    if (reverse->parsed()) return cmd_reverse(st, rev_in, rev_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
