// SPDX-License-Identifier: Apache-2.0
//
// evomerge: merge checkpoints with DARE + TIES, tune the merge with CMA-ES,
// and score generated text. Subcommands: diff, merge, optimize, score,
// inspect, gen-fixture.
//
// Exit codes: 0 success, 1 internal error, 2 user/config error,
// 3 data/alignment error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "evomerge/archive.hpp"
#include "evomerge/cmaes.hpp"
#include "evomerge/errors.hpp"
#include "evomerge/fitness.hpp"
#include "evomerge/manifest.hpp"
#include "evomerge/merge_ops.hpp"
#include "evomerge/metrics.hpp"
#include "evomerge/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw evomerge::ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw evomerge::ConfigError("'" + path + "': invalid JSON: " + e.what());
  }
}

// --set key=value overrides on a JSON config; value parsed as JSON when
// possible, else taken as a string.
void apply_overrides(json& config, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw evomerge::ConfigError("--set expects key=value, got '" + s + "'");
    }
    std::string key = s.substr(0, eq);
    std::string value = s.substr(eq + 1);
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;
    }
    config[key] = parsed;
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw evomerge::ConfigError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// ---------------------------------------------------------------------------

int cmd_diff(const std::string& base_path, const std::string& model_path,
             const std::string& out_path, const evomerge::KeyFilter& filter) {
  try {
    auto base = evomerge::load_archive(base_path);
    auto model = evomerge::load_archive(model_path);
    auto tau = evomerge::task_vector(model, base, filter);
    if (tau.empty()) {
      std::cerr << "evomerge diff: empty merge domain\n";
      return 2;
    }
    evomerge::save_archive(tau, out_path);
    return 0;
  } catch (const evomerge::AlignmentError& e) {
    std::cerr << "evomerge diff: " << e.what() << "\n";
    return 2;
  }
}

int cmd_merge(const std::string& config_path, const std::string& base_path,
              const std::vector<std::string>& model_paths,
              const std::string& out_path, const std::string& method,
              const std::vector<std::string>& sets) {
  json config_json = load_json_file(config_path);
  apply_overrides(config_json, sets);

  auto base = evomerge::load_archive(base_path);
  std::vector<evomerge::TensorMap> models;
  for (const auto& p : model_paths) models.push_back(evomerge::load_archive(p));
  std::vector<const evomerge::TensorMap*> model_ptrs;
  for (const auto& m : models) model_ptrs.push_back(&m);

  evomerge::TensorMap merged;
  try {
    if (method == "ties_dare") {
      auto cfg = evomerge::MergeConfig::from_json(config_json);
      if (cfg.num_tasks() != models.size()) {
        throw evomerge::ConfigError("config is for " +
                                    std::to_string(cfg.num_tasks()) +
                                    " tasks, got " +
                                    std::to_string(models.size()) + " models");
      }
      merged = evomerge::ties_dare_merge(base, model_ptrs, cfg);
    } else if (method == "linear") {
      std::vector<double> w;
      if (config_json.contains("w")) {
        w = config_json.at("w").get<std::vector<double>>();
      } else if (config_json.contains("c")) {
        w = config_json.at("c").get<std::vector<double>>();
      } else {
        throw evomerge::ConfigError("linear merge needs weights under \"w\"");
      }
      merged = evomerge::linear_merge(model_ptrs, w);
    } else if (method == "slerp") {
      if (models.size() != 2) {
        throw evomerge::ConfigError("slerp is pairwise: need exactly 2 models");
      }
      double t = config_json.value("t", 0.5);
      merged = evomerge::slerp_merge(models[0], models[1], t);
    } else if (method == "task_arithmetic") {
      auto c = config_json.at("c").get<std::vector<double>>();
      double lambda = config_json.value("lambda", 1.0);
      evomerge::KeyFilter filter;
      filter.include_globs = config_json.value("include", std::vector<std::string>{});
      filter.exclude_globs = config_json.value("exclude", std::vector<std::string>{});
      std::vector<evomerge::TaskVector> taus;
      for (const auto& m : models) {
        taus.push_back(evomerge::task_vector(m, base, filter));
      }
      std::vector<const evomerge::TaskVector*> tau_ptrs;
      for (const auto& t2 : taus) tau_ptrs.push_back(&t2);
      merged = evomerge::task_arithmetic_merge(base, tau_ptrs, c, lambda);
    } else {
      throw evomerge::ConfigError("unknown merge method '" + method + "'");
    }
  } catch (const evomerge::AlignmentError& e) {
    std::cerr << "evomerge merge: " << e.what() << "\n";
    return 3;
  }
  evomerge::save_archive(merged, out_path);

  evomerge::RunManifest manifest;
  manifest.command = "merge --method " + method;
  manifest.config_paths = {{"config", config_path}, {"base", base_path}};
  for (std::size_t i = 0; i < model_paths.size(); ++i) {
    manifest.config_paths["model_" + std::to_string(i)] = model_paths[i];
  }
  manifest.seed = config_json.value("seed", std::uint64_t{0});
  manifest.started_at = manifest.finished_at = evomerge::RunManifest::now_iso8601();
  manifest.best_config = config_json;
  manifest.has_best = true;
  manifest.output_paths = {out_path};
  manifest.write(out_path + ".manifest.json");
  return 0;
}

// ---------------------------------------------------------------------------

struct OptimizeSetup {
  json config;
  std::string config_path;
  evomerge::TensorMap base;
  std::vector<evomerge::TensorMap> models;
  evomerge::KeyFilter filter;
  std::uint64_t merge_seed = 0;
  bool fixed_mask = false;
  std::optional<double> fixed_alpha;
  evomerge::Normalize normalize = evomerge::Normalize::kCount;
  evomerge::TrimScope trim_scope = evomerge::TrimScope::kGlobal;
  evomerge::CmaParams cma;
  evomerge::BudgetUnit budget_unit = evomerge::BudgetUnit::kGenerations;
  std::string out_dir;
  std::string work_dir;
};

OptimizeSetup load_optimize_config(const std::string& path,
                                   const std::vector<std::string>& sets) {
  OptimizeSetup setup;
  setup.config_path = path;
  setup.config = load_json_file(path);
  apply_overrides(setup.config, sets);
  const json& j = setup.config;
  try {
    setup.base = evomerge::load_archive(j.at("base").get<std::string>());
    for (const auto& p : j.at("models")) {
      setup.models.push_back(evomerge::load_archive(p.get<std::string>()));
    }
    if (setup.models.empty()) throw evomerge::ConfigError("optimize: no models");

    json merge = j.value("merge", json::object());
    setup.filter.include_globs = merge.value("include", std::vector<std::string>{});
    setup.filter.exclude_globs = merge.value("exclude", std::vector<std::string>{});
    setup.merge_seed = merge.value("seed", std::uint64_t{0});
    setup.fixed_mask = merge.value("fixed_mask", false);
    if (merge.contains("fix_alpha") && !merge.at("fix_alpha").is_null()) {
      setup.fixed_alpha = merge.at("fix_alpha").get<double>();
    }
    if (merge.value("normalize", "count") == std::string("weight_sum")) {
      setup.normalize = evomerge::Normalize::kWeightSum;
    }
    if (merge.value("trim_scope", "global") == std::string("per_tensor")) {
      setup.trim_scope = evomerge::TrimScope::kPerTensor;
    }

    json cma = j.value("cma", json::object());
    setup.cma.n = static_cast<int>(2 * setup.models.size() + 2);
    setup.cma.popsize = cma.value("popsize", 0);
    setup.cma.mu = cma.value("mu", 0);
    setup.cma.sigma0 = cma.value("sigma0", 1.0 / 6.0);
    setup.cma.max_generations = cma.value("max_generations", 600);
    setup.cma.seed = cma.value("seed", std::uint64_t{0});

    if (j.value("budget_unit", "generations") == std::string("evaluations")) {
      setup.budget_unit = evomerge::BudgetUnit::kEvaluations;
    }
    setup.out_dir = j.value("out_dir", "evomerge_run");
    setup.work_dir = j.value("work_dir", (fs::path(setup.out_dir) / "work").string());
  } catch (const json::exception& e) {
    throw evomerge::ConfigError("'" + path + "': " + e.what());
  }
  return setup;
}

int cmd_optimize(const std::string& config_path,
                 const std::vector<std::string>& sets,
                 const std::string& resume_path, long budget_override, int jobs,
                 bool keep_work) {
  OptimizeSetup setup = load_optimize_config(config_path, sets);
  fs::create_directories(setup.out_dir);

  evomerge::FitnessSpec spec =
      evomerge::FitnessSpec::from_json(setup.config.at("fitness"));
  evomerge::FitnessEvaluator evaluator(spec, setup.work_dir);

  std::vector<const evomerge::TensorMap*> model_ptrs;
  for (const auto& m : setup.models) model_ptrs.push_back(&m);
  evomerge::MergeObjective objective(&setup.base, model_ptrs, &evaluator,
                                     setup.filter, setup.merge_seed,
                                     setup.fixed_mask, setup.fixed_alpha,
                                     setup.normalize, setup.trim_scope);

  std::optional<evomerge::Cmaes> opt;
  if (!resume_path.empty()) {
    opt.emplace(evomerge::Cmaes::from_checkpoint(load_json_file(resume_path)));
    std::cerr << "resumed from " << resume_path << " at generation "
              << opt->generation() << "\n";
  } else {
    opt.emplace(setup.cma);
  }

  std::string history_path = (fs::path(setup.out_dir) / "history.jsonl").string();
  std::string checkpoint_path = (fs::path(setup.out_dir) / "checkpoint.json").string();
  std::ofstream history(history_path,
                        resume_path.empty() ? std::ios::trunc : std::ios::app);
  if (!history) throw evomerge::Error("cannot write '" + history_path + "'");

  evomerge::RunManifest manifest;
  manifest.command = "optimize";
  manifest.config_paths = {{"config", config_path}};
  manifest.seed = setup.cma.seed;
  manifest.started_at = evomerge::RunManifest::now_iso8601();

  evomerge::RunOptions options;
  options.budget_unit = setup.budget_unit;
  options.budget = budget_override;
  options.on_generation = [&](const evomerge::GenRecord& record) {
    history << record.to_json().dump() << "\n";
    history.flush();
    std::string tmp = checkpoint_path + ".tmp";
    {
      std::ofstream ck(tmp, std::ios::trunc);
      ck << opt->checkpoint_json().dump() << "\n";
    }
    fs::rename(tmp, checkpoint_path);
    std::cerr << "gen " << record.gen << " best " << record.best << " sigma "
              << record.sigma << "\n";
  };

  evomerge::BatchObjective batch =
      [&](const std::vector<std::vector<double>>& candidates) {
        return objective.evaluate_generation(candidates, opt->generation(), jobs);
      };
  evomerge::RunResult result = evomerge::run_cmaes(*opt, batch, options);

  // Prefer the objective's record of the best phenotype: it carries the exact
  // DARE seed the winning evaluation used. After a resume where no candidate
  // improved on the checkpointed best, fall back to re-decoding that genotype.
  evomerge::MergeConfig best_cfg =
      objective.has_best_config() &&
              objective.best_config_fitness() >= result.best_fitness
          ? objective.best_config()
          : objective.decode(result.best_genotype,
                             evomerge::mix_seed(setup.merge_seed, 0));
  std::string best_config_path = (fs::path(setup.out_dir) / "best_config.json").string();
  {
    std::ofstream f(best_config_path, std::ios::trunc);
    f << best_cfg.to_json().dump(2) << "\n";
  }
  std::string best_merged_path =
      (fs::path(setup.out_dir) / "best_merged.safetensors").string();
  evomerge::save_archive(
      evomerge::ties_dare_merge(setup.base, model_ptrs, best_cfg), best_merged_path);

  manifest.finished_at = evomerge::RunManifest::now_iso8601();
  manifest.best_config = best_cfg.to_json();
  manifest.has_best = true;
  manifest.best_fitness = result.best_fitness;
  manifest.output_paths = {best_config_path, best_merged_path, history_path,
                           checkpoint_path};
  manifest.write((fs::path(setup.out_dir) / "manifest.json").string());

  if (!keep_work) {
    std::error_code ec;
    fs::remove_all(setup.work_dir, ec);
  }

  json summary{{"best_fitness", result.best_fitness},
               {"best_config", best_cfg.to_json()},
               {"generations", opt->generation()},
               {"evaluations", opt->evaluations()}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_score(const std::string& hyp_path, const std::string& ref_path,
              const std::string& tokenizer) {
  auto hyp_lines = read_lines(hyp_path);
  auto ref_lines = read_lines(ref_path);
  if (hyp_lines.size() != ref_lines.size()) {
    std::cerr << "evomerge score: line count mismatch: " << hyp_path << " has "
              << hyp_lines.size() << " lines, " << ref_path << " has "
              << ref_lines.size() << "\n";
    return 2;
  }
  if (hyp_lines.empty()) {
    std::cerr << "evomerge score: empty corpus\n";
    return 2;
  }
  auto spec = evomerge::TokenizerSpec::parse(tokenizer);
  evomerge::Corpus corpus;
  for (std::size_t i = 0; i < hyp_lines.size(); ++i) {
    corpus.push_back({evomerge::tokenize(hyp_lines[i], spec),
                      evomerge::tokenize(ref_lines[i], spec)});
  }
  std::cout << evomerge::score_report(corpus).to_json().dump(2) << "\n";
  return 0;
}

int cmd_inspect(const std::string& config_path, bool json_only) {
  auto cfg = evomerge::MergeConfig::from_json(load_json_file(config_path));
  double c_sum = 0.0;
  for (double v : cfg.c) c_sum += v;

  json models = json::array();
  for (std::size_t t = 0; t < cfg.num_tasks(); ++t) {
    double share = c_sum > 0.0 ? cfg.c[t] / c_sum : 0.0;
    models.push_back({{"model", t},
                      {"density", cfg.k[t]},
                      {"weight", cfg.c[t]},
                      {"weight_share", share}});
  }
  json report{{"alpha", cfg.alpha},
              {"lambda", cfg.lambda},
              {"models", models}};

  if (!json_only) {
    std::fprintf(stderr, "%-8s %-12s %-12s %-12s\n", "model", "density(k)",
                 "weight(c)", "share");
    for (const auto& m : models) {
      std::fprintf(stderr, "%-8d %-12.6f %-12.6f %-12.6f\n",
                   m.at("model").get<int>(), m.at("density").get<double>(),
                   m.at("weight").get<double>(), m.at("weight_share").get<double>());
    }
    std::fprintf(stderr, "alpha %.6f  lambda %.6f\n", cfg.alpha, cfg.lambda);
  }
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_gen_fixture(std::uint64_t seed, int tasks, int features, int samples,
                    double ridge, const std::string& out_dir) {
  auto suite = evomerge::make_linear_suite(seed, tasks, features, samples, ridge);
  suite.write(out_dir);
  json listing = json::array();
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    listing.push_back(entry.path().filename().string());
  }
  std::sort(listing.begin(), listing.end());
  std::cout << json{{"out_dir", out_dir}, {"files", listing}}.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DARE + TIES checkpoint merging with CMA-ES hyperparameter search"};
  app.require_subcommand(0, 1);

  bool show_version = false;
  app.add_flag("--version", show_version, "print version and format versions");

  // diff
  auto* diff = app.add_subcommand("diff", "write the task vector model - base");
  std::string diff_base, diff_model, diff_out;
  std::vector<std::string> diff_include, diff_exclude;
  diff->add_option("--base", diff_base, "base checkpoint")->required();
  diff->add_option("--model", diff_model, "fine-tuned checkpoint")->required();
  diff->add_option("--out", diff_out, "output archive")->required();
  diff->add_option("--include", diff_include, "include globs");
  diff->add_option("--exclude", diff_exclude, "exclude globs");

  // merge
  auto* merge = app.add_subcommand("merge", "merge checkpoints");
  std::string merge_config, merge_base, merge_out, merge_method = "ties_dare";
  std::vector<std::string> merge_models, merge_sets;
  merge->add_option("--config", merge_config, "merge config JSON")->required();
  merge->add_option("--base", merge_base, "base checkpoint")->required();
  merge->add_option("--out", merge_out, "output archive")->required();
  merge->add_option("models", merge_models, "fine-tuned checkpoints")->required();
  merge->add_option("--method", merge_method,
                    "ties_dare|linear|slerp|task_arithmetic");
  merge->add_option("--set", merge_sets, "config override key=value");

  // optimize
  auto* optimize = app.add_subcommand("optimize", "evolve merge hyperparameters");
  std::string opt_config, opt_resume;
  std::vector<std::string> opt_sets;
  long opt_budget = -1;
  int opt_jobs = static_cast<int>(std::thread::hardware_concurrency());
  bool opt_keep_work = false;
  optimize->add_option("--config", opt_config, "evolution config JSON")->required();
  optimize->add_option("--resume", opt_resume, "checkpoint to resume from");
  optimize->add_option("--budget", opt_budget, "override the run budget");
  optimize->add_option("--jobs", opt_jobs, "parallel candidate evaluations");
  optimize->add_flag("--keep-work", opt_keep_work, "keep temp work dir");
  optimize->add_option("--set", opt_sets, "config override key=value");

  // score
  auto* score = app.add_subcommand("score", "score hypothesis vs reference text");
  std::string score_hyp, score_ref, score_tok = "ws";
  score->add_option("--hyp", score_hyp, "hypotheses, one per line")->required();
  score->add_option("--ref", score_ref, "references, one per line")->required();
  score->add_option("--tokenizer", score_tok, "ws|char|cmd:<argv>");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "report per-model densities and weights");
  std::string inspect_config;
  bool inspect_json = false;
  inspect->add_option("--config", inspect_config, "merge config JSON")->required();
  inspect->add_flag("--json", inspect_json, "suppress the text table");

  // gen-fixture
  auto* fixture = app.add_subcommand("gen-fixture", "generate a linear-task suite");
  std::uint64_t fx_seed = 0;
  int fx_tasks = 3, fx_features = 8, fx_samples = 40;
  double fx_ridge = 1e-3;
  std::string fx_out = "fixture";
  fixture->add_option("--seed", fx_seed, "suite seed");
  fixture->add_option("--tasks", fx_tasks, "number of tasks");
  fixture->add_option("--features", fx_features, "feature count");
  fixture->add_option("--samples", fx_samples, "training samples per task");
  fixture->add_option("--ridge", fx_ridge, "ridge coefficient");
  fixture->add_option("--out-dir", fx_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (show_version) {
    std::cout << "evomerge " << evomerge::kVersion << " (archive format "
              << evomerge::kArchiveFormatVersion << ", checkpoint format "
              << evomerge::kCheckpointFormatVersion << ", manifest format "
              << evomerge::kManifestFormatVersion << ")\n";
    return 0;
  }

  try {
    if (diff->parsed()) {
      evomerge::KeyFilter filter{diff_include, diff_exclude};
      return cmd_diff(diff_base, diff_model, diff_out, filter);
    }
    if (merge->parsed()) {
      return cmd_merge(merge_config, merge_base, merge_models, merge_out,
                       merge_method, merge_sets);
    }
    if (optimize->parsed()) {
      return cmd_optimize(opt_config, opt_sets, opt_resume, opt_budget,
                          opt_jobs, opt_keep_work);
    }
    if (score->parsed()) return cmd_score(score_hyp, score_ref, score_tok);
    if (inspect->parsed()) return cmd_inspect(inspect_config, inspect_json);
    if (fixture->parsed()) {
      return cmd_gen_fixture(fx_seed, fx_tasks, fx_features, fx_samples,
                             fx_ridge, fx_out);
    }
    std::cerr << app.help() << "\n";
    return 2;
  } catch (const evomerge::ConfigError& e) {
    std::cerr << "evomerge: " << e.what() << "\n";
    return 2;
  } catch (const evomerge::AlignmentError& e) {
    std::cerr << "evomerge: " << e.what() << "\n";
    return 3;
  } catch (const evomerge::FormatError& e) {
    std::cerr << "evomerge: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "evomerge: internal error: " << e.what() << "\n";
    return 1;
  }
}
