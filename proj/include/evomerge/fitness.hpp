// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "evomerge/archive.hpp"
#include "evomerge/errors.hpp"
#include "evomerge/merge_ops.hpp"
#include "evomerge/metrics.hpp"
#include "evomerge/rng.hpp"
#include "evomerge/subprocess.hpp"

// Fitness evaluators mapping a merged checkpoint to a scalar score
// (higher is better): distance to a target checkpoint, held-out MSE of a
// merged linear model, or an external generate-then-score loop over a
// subprocess protocol.

namespace evomerge {

enum class FitnessKind { kVectorTarget, kLinearTasks, kExternalGenerator };
enum class MetricKind { kRougeL, kBleu, kMeteor };

struct FitnessSpec {
  FitnessKind kind = FitnessKind::kVectorTarget;

  // vector_target
  std::string target_path;

  // linear_tasks
  std::vector<std::string> task_paths;  // archives holding tensors "X", "Y"
  std::string eval_path;
  double ridge = 1e-3;

  // external_generator
  std::vector<std::string> generator_argv;
  std::string prompts_path;   // JSONL {"id","image","prompt"}
  std::string refs_path;      // UTF-8 text, one reference per line
  std::string tokenizer = "ws";
  MetricKind metric = MetricKind::kRougeL;
  double timeout_sec = 300.0;
  std::uint64_t generator_seed = 0;
  std::optional<double> penalty_fitness;  // unset = abort on generator failure

  nlohmann::json to_json() const {
    nlohmann::json j;
    switch (kind) {
      case FitnessKind::kVectorTarget:
        j["kind"] = "vector_target";
        j["target"] = target_path;
        break;
      case FitnessKind::kLinearTasks:
        j["kind"] = "linear_tasks";
        j["tasks"] = task_paths;
        j["eval"] = eval_path;
        j["ridge"] = ridge;
        break;
      case FitnessKind::kExternalGenerator:
        j["kind"] = "external_generator";
        j["argv"] = generator_argv;
        j["prompts"] = prompts_path;
        j["refs"] = refs_path;
        j["tokenizer"] = tokenizer;
        j["metric"] = metric == MetricKind::kRougeL ? "rouge_l"
                      : metric == MetricKind::kBleu ? "bleu"
                                                    : "meteor";
        j["timeout_sec"] = timeout_sec;
        j["seed"] = generator_seed;
        if (penalty_fitness) j["penalty_fitness"] = *penalty_fitness;
        break;
    }
    return j;
  }

  static FitnessSpec from_json(const nlohmann::json& j) {
    FitnessSpec spec;
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "vector_target") {
      spec.kind = FitnessKind::kVectorTarget;
      spec.target_path = j.at("target").get<std::string>();
    } else if (kind == "linear_tasks") {
      spec.kind = FitnessKind::kLinearTasks;
      spec.task_paths = j.at("tasks").get<std::vector<std::string>>();
      spec.eval_path = j.at("eval").get<std::string>();
      spec.ridge = j.value("ridge", 1e-3);
      if (!(spec.ridge > 0)) throw ConfigError("fitness: ridge must be positive");
    } else if (kind == "external_generator") {
      spec.kind = FitnessKind::kExternalGenerator;
      spec.generator_argv = j.at("argv").get<std::vector<std::string>>();
      spec.prompts_path = j.at("prompts").get<std::string>();
      spec.refs_path = j.at("refs").get<std::string>();
      spec.tokenizer = j.value("tokenizer", "ws");
      std::string metric = j.value("metric", "rouge_l");
      if (metric == "rouge_l") {
        spec.metric = MetricKind::kRougeL;
      } else if (metric == "bleu") {
        spec.metric = MetricKind::kBleu;
      } else if (metric == "meteor") {
        spec.metric = MetricKind::kMeteor;
      } else {
        throw ConfigError("fitness: unknown metric '" + metric + "'");
      }
      spec.timeout_sec = j.value("timeout_sec", 300.0);
      spec.generator_seed = j.value("seed", std::uint64_t{0});
      if (j.contains("penalty_fitness") && !j.at("penalty_fitness").is_null()) {
        spec.penalty_fitness = j.at("penalty_fitness").get<double>();
      }
    } else {
      throw ConfigError("fitness: unknown kind '" + kind + "'");
    }
    return spec;
  }
};

namespace detail {

struct LinearData {
  Eigen::MatrixXd X;
  Eigen::VectorXd Y;
};

inline LinearData load_linear_data(const std::string& path) {
  TensorMap map = load_archive(path);
  const Tensor& xt = map.at("X");
  const Tensor& yt = map.at("Y");
  if (xt.shape.size() != 2 || yt.shape.size() != 1 || xt.shape[0] != yt.shape[0]) {
    throw FormatError("'" + path + "': expected X [n,p] and Y [n]");
  }
  LinearData d;
  d.X.resize(xt.shape[0], xt.shape[1]);
  for (std::int64_t i = 0; i < xt.shape[0]; ++i) {
    for (std::int64_t j = 0; j < xt.shape[1]; ++j) {
      d.X(i, j) = xt.data[static_cast<std::size_t>(i * xt.shape[1] + j)];
    }
  }
  d.Y.resize(yt.shape[0]);
  for (std::int64_t i = 0; i < yt.shape[0]; ++i) {
    d.Y(i) = yt.data[static_cast<std::size_t>(i)];
  }
  return d;
}

inline Eigen::VectorXd coef_vector(const TensorMap& model) {
  const Tensor& t = model.at("coef");
  Eigen::VectorXd w(t.data.size());
  for (std::size_t i = 0; i < t.data.size(); ++i) w(i) = t.data[i];
  return w;
}

}  // namespace detail

/// Owns the resources referenced by a FitnessSpec and scores merged
/// checkpoints. Thread-compatible: evaluate() is const apart from the
/// temp-file counter, which is internally synchronized.
class FitnessEvaluator {
 public:
  FitnessEvaluator(FitnessSpec spec, std::string work_dir)
      : spec_(std::move(spec)), work_dir_(std::move(work_dir)) {
    switch (spec_.kind) {
      case FitnessKind::kVectorTarget:
        target_ = load_archive(spec_.target_path);
        break;
      case FitnessKind::kLinearTasks:
        eval_data_ = detail::load_linear_data(spec_.eval_path);
        break;
      case FitnessKind::kExternalGenerator:
        load_generator_inputs();
        break;
    }
  }

  const FitnessSpec& spec() const { return spec_; }

  double evaluate(const TensorMap& merged) {
    switch (spec_.kind) {
      case FitnessKind::kVectorTarget: {
        double sum = 0.0;
        for (const auto& [key, target] : target_.entries()) {
          const Tensor& m = merged.at(key);
          if (m.shape != target.shape) {
            throw AlignmentError("fitness: shape mismatch for key '" + key + "'");
          }
          for (std::size_t i = 0; i < target.data.size(); ++i) {
            double d = static_cast<double>(m.data[i]) -
                       static_cast<double>(target.data[i]);
            sum += d * d;
          }
        }
        return -std::sqrt(sum);
      }
      case FitnessKind::kLinearTasks: {
        Eigen::VectorXd w = detail::coef_vector(merged);
        if (w.size() != eval_data_.X.cols()) {
          throw AlignmentError("fitness: coef length does not match eval features");
        }
        Eigen::VectorXd resid = eval_data_.X * w - eval_data_.Y;
        return -resid.squaredNorm() / static_cast<double>(resid.size());
      }
      case FitnessKind::kExternalGenerator:
        return evaluate_external(merged);
    }
    throw Error("fitness: unreachable");
  }

 private:
  void load_generator_inputs() {
    std::ifstream prompts(spec_.prompts_path);
    if (!prompts) throw Error("cannot open prompts '" + spec_.prompts_path + "'");
    std::string line;
    int line_no = 0;
    while (std::getline(prompts, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        auto j = nlohmann::json::parse(line);
        prompt_ids_.push_back(j.at("id").get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        throw FormatError("prompts line " + std::to_string(line_no) + ": " + e.what());
      }
      prompt_lines_.push_back(line);
    }
    std::ifstream refs(spec_.refs_path);
    if (!refs) throw Error("cannot open references '" + spec_.refs_path + "'");
    while (std::getline(refs, line)) references_.push_back(line);
    if (references_.size() != prompt_ids_.size()) {
      throw FormatError("references count " + std::to_string(references_.size()) +
                        " does not match prompts count " +
                        std::to_string(prompt_ids_.size()));
    }
    if (prompt_ids_.empty()) throw ConfigError("fitness: no prompts");
    tokenizer_spec_ = TokenizerSpec::parse(spec_.tokenizer);
  }

  double evaluate_external(const TensorMap& merged) {
    std::string weights_path;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      weights_path = (std::filesystem::path(work_dir_) /
                      ("weights_" + std::to_string(temp_counter_++) + ".safetensors"))
                         .string();
    }
    std::filesystem::create_directories(work_dir_);
    save_archive(merged, weights_path);

    std::vector<std::string> argv = spec_.generator_argv;
    argv.insert(argv.end(), {"--weights", weights_path, "--prompts",
                             spec_.prompts_path, "--seed",
                             std::to_string(spec_.generator_seed)});
    ProcessResult result = run_process(argv, "", spec_.timeout_sec);
    std::error_code ec;
    std::filesystem::remove(weights_path, ec);
    if (!result.ok()) {
      if (spec_.penalty_fitness) return *spec_.penalty_fitness;
      throw ProcessError("generator failed (" +
                         (result.timed_out ? std::string("timeout")
                                           : "exit " + std::to_string(result.exit_code)) +
                         "): " + result.err);
    }

    std::vector<std::string> outputs;
    std::istringstream out(result.out);
    std::string line;
    while (std::getline(out, line)) {
      if (line.empty()) continue;
      try {
        auto j = nlohmann::json::parse(line);
        std::string id = j.at("id").get<std::string>();
        if (outputs.size() >= prompt_ids_.size() ||
            id != prompt_ids_[outputs.size()]) {
          throw FormatError("generator output order does not match prompts (id '" +
                            id + "')");
        }
        outputs.push_back(j.at("output").get<std::string>());
      } catch (const nlohmann::json::exception& e) {
        if (spec_.penalty_fitness) return *spec_.penalty_fitness;
        throw ProcessError(std::string("malformed generator output: ") + e.what());
      }
    }
    if (outputs.size() != prompt_ids_.size()) {
      if (spec_.penalty_fitness) return *spec_.penalty_fitness;
      throw ProcessError("generator produced " + std::to_string(outputs.size()) +
                         " outputs for " + std::to_string(prompt_ids_.size()) +
                         " prompts");
    }

    Corpus corpus;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      corpus.push_back({tokenize(outputs[i], tokenizer_spec_),
                        tokenize(references_[i], tokenizer_spec_)});
    }
    switch (spec_.metric) {
      case MetricKind::kRougeL: return rouge_l(corpus);
      case MetricKind::kBleu: return bleu(corpus, 4);
      case MetricKind::kMeteor: return meteor(corpus);
    }
    throw Error("fitness: unreachable");
  }

  FitnessSpec spec_;
  std::string work_dir_;
  TensorMap target_;
  detail::LinearData eval_data_;
  std::vector<std::string> prompt_ids_;
  std::vector<std::string> prompt_lines_;
  std::vector<std::string> references_;
  TokenizerSpec tokenizer_spec_;
  std::mutex mutex_;
  long temp_counter_ = 0;
};

// ---------------------------------------------------------------------------
// Desk-scale linear-task fixtures

struct LinearTaskSuite {
  TensorMap base;                       // tensor "coef"
  std::vector<TensorMap> fine_tuned;    // ridge solutions, one per task
  std::vector<detail::LinearData> tasks;
  detail::LinearData eval;
  double ridge = 1e-3;

  /// Writes base.safetensors, task_<t>.model.safetensors,
  /// task_<t>.data.safetensors, eval.safetensors and fitness.json into `dir`.
  void write(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto data_map = [](const detail::LinearData& d) {
      TensorMap m;
      Tensor x;
      x.shape = {d.X.rows(), d.X.cols()};
      for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
        for (Eigen::Index j = 0; j < d.X.cols(); ++j) {
          x.data.push_back(static_cast<float>(d.X(i, j)));
        }
      }
      Tensor y;
      y.shape = {d.Y.size()};
      for (Eigen::Index i = 0; i < d.Y.size(); ++i) {
        y.data.push_back(static_cast<float>(d.Y(i)));
      }
      m.set("X", std::move(x));
      m.set("Y", std::move(y));
      return m;
    };
    save_archive(base, (fs::path(dir) / "base.safetensors").string());
    FitnessSpec spec;
    spec.kind = FitnessKind::kLinearTasks;
    spec.eval_path = (fs::path(dir) / "eval.safetensors").string();
    spec.ridge = ridge;
    for (std::size_t t = 0; t < fine_tuned.size(); ++t) {
      auto model = (fs::path(dir) / ("task_" + std::to_string(t) + ".model.safetensors")).string();
      auto data = (fs::path(dir) / ("task_" + std::to_string(t) + ".data.safetensors")).string();
      save_archive(fine_tuned[t], model);
      save_archive(data_map(tasks[t]), data);
      spec.task_paths.push_back(data);
    }
    save_archive(data_map(eval), spec.eval_path);
    std::ofstream f((fs::path(dir) / "fitness.json").string());
    f << spec.to_json().dump(2) << "\n";
  }
};

namespace detail {

class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - rng_.next_double();
    double u2 = rng_.next_double();
    double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return radius * std::cos(2.0 * M_PI * u2);
  }

 private:
  SplitMix64 rng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

inline TensorMap coef_map(const Eigen::VectorXd& w) {
  Tensor t;
  t.shape = {w.size()};
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    t.data.push_back(static_cast<float>(w(i)));
  }
  TensorMap m;
  m.set("coef", std::move(t));
  return m;
}

}  // namespace detail

/// Builds a deterministic suite of related linear regression tasks. Each
/// "fine-tuned model" is the closed-form ridge solution on its own task; the
/// evaluation set mixes held-out samples from every task, so a well-merged
/// model beats any single source on it.
inline LinearTaskSuite make_linear_suite(std::uint64_t seed, int n_tasks,
                                         int n_features, int n_samples,
                                         double ridge = 1e-3) {
  if (n_tasks < 1 || n_features < 1 || n_samples < 1) {
    throw ConfigError("make_linear_suite: sizes must be >= 1");
  }
  if (!(ridge > 0)) throw ConfigError("make_linear_suite: ridge must be positive");
  detail::GaussianStream gauss(mix_seed(seed, 0));
  LinearTaskSuite suite;
  suite.ridge = ridge;

  Eigen::VectorXd shared(n_features);
  for (int i = 0; i < n_features; ++i) shared(i) = gauss.next();

  std::vector<Eigen::VectorXd> true_weights;
  for (int t = 0; t < n_tasks; ++t) {
    Eigen::VectorXd w = shared;
    for (int i = 0; i < n_features; ++i) w(i) += 0.35 * gauss.next();
    true_weights.push_back(w);
  }

  auto sample_task = [&](const Eigen::VectorXd& w, int rows) {
    detail::LinearData d;
    d.X.resize(rows, n_features);
    d.Y.resize(rows);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < n_features; ++j) d.X(i, j) = gauss.next();
      d.Y(i) = d.X.row(i).dot(w) + 0.05 * gauss.next();
    }
    return d;
  };

  for (int t = 0; t < n_tasks; ++t) {
    detail::LinearData d = sample_task(true_weights[static_cast<std::size_t>(t)],
                                       n_samples);
    Eigen::MatrixXd normal = d.X.transpose() * d.X +
                             ridge * Eigen::MatrixXd::Identity(n_features, n_features);
    Eigen::VectorXd w = normal.ldlt().solve(d.X.transpose() * d.Y);
    suite.fine_tuned.push_back(detail::coef_map(w));
    suite.tasks.push_back(std::move(d));
  }

  // mixed held-out evaluation set, equal share per task
  std::vector<detail::LinearData> holdout;
  int eval_rows_per_task = std::max(4, n_samples / 2);
  for (int t = 0; t < n_tasks; ++t) {
    holdout.push_back(sample_task(true_weights[static_cast<std::size_t>(t)],
                                  eval_rows_per_task));
  }
  int total = eval_rows_per_task * n_tasks;
  suite.eval.X.resize(total, n_features);
  suite.eval.Y.resize(total);
  int row = 0;
  for (const auto& h : holdout) {
    for (Eigen::Index i = 0; i < h.X.rows(); ++i, ++row) {
      suite.eval.X.row(row) = h.X.row(i);
      suite.eval.Y(row) = h.Y(i);
    }
  }

  Eigen::VectorXd init(n_features);
  for (int i = 0; i < n_features; ++i) init(i) = 0.1 * gauss.next();
  suite.base = detail::coef_map(init);
  return suite;
}

// ---------------------------------------------------------------------------
// Brute-force acceptance oracle

struct GridOracleResult {
  MergeConfig config;
  double fitness = 0;
  long evaluations = 0;
};

/// Exhaustive search over a Cartesian grid of (k, c, lambda), with alpha
/// forced to 0 for determinism. Ties resolve to the lexicographically
/// smallest grid tuple (the first one visited; later candidates must be
/// strictly better).
inline GridOracleResult grid_oracle(FitnessEvaluator& evaluator,
                                    const TensorMap& theta_init,
                                    const std::vector<const TensorMap*>& thetas_ft,
                                    int points_per_dim,
                                    const KeyFilter& filter = {},
                                    Normalize normalize = Normalize::kCount) {
  if (points_per_dim < 1) throw ConfigError("grid_oracle: need >= 1 point per dim");
  std::size_t K = thetas_ft.size();
  int dims = static_cast<int>(2 * K + 1);
  double total = std::pow(static_cast<double>(points_per_dim), dims);
  if (total > 1e6) throw ConfigError("grid_oracle: grid larger than 10^6 points");

  auto grid_value = [&](int step, double lo, double hi) {
    if (points_per_dim == 1) return lo;
    return lo + (hi - lo) * step / (points_per_dim - 1);
  };

  GridOracleResult best;
  bool have_best = false;
  std::vector<int> odo(static_cast<std::size_t>(dims), 0);
  while (true) {
    MergeConfig cfg;
    cfg.alpha = 0.0;
    cfg.filter = filter;
    cfg.normalize = normalize;
    cfg.k.resize(K);
    cfg.c.resize(K);
    for (std::size_t t = 0; t < K; ++t) {
      cfg.k[t] = grid_value(odo[t], 0.0, 1.0);
      cfg.c[t] = grid_value(odo[K + t], 0.0, MergeConfig::kCMax);
    }
    cfg.lambda = grid_value(odo[2 * K], 0.0, MergeConfig::kLambdaMax);

    double fitness = evaluator.evaluate(ties_dare_merge(theta_init, thetas_ft, cfg));
    ++best.evaluations;
    if (!have_best || fitness > best.fitness) {
      best.fitness = fitness;
      best.config = cfg;
      have_best = true;
    }

    int d = dims - 1;
    while (d >= 0 && ++odo[static_cast<std::size_t>(d)] == points_per_dim) {
      odo[static_cast<std::size_t>(d)] = 0;
      --d;
    }
    if (d < 0) break;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Genotype objective over the merge pipeline, with per-run fitness caching

class MergeObjective {
 public:
  MergeObjective(const TensorMap* base, std::vector<const TensorMap*> models,
                 FitnessEvaluator* evaluator, KeyFilter filter,
                 std::uint64_t run_seed, bool fixed_mask,
                 std::optional<double> fixed_alpha,
                 Normalize normalize = Normalize::kCount,
                 TrimScope trim_scope = TrimScope::kGlobal)
      : base_(base),
        models_(std::move(models)),
        evaluator_(evaluator),
        filter_(std::move(filter)),
        run_seed_(run_seed),
        fixed_mask_(fixed_mask),
        fixed_alpha_(fixed_alpha),
        normalize_(normalize),
        trim_scope_(trim_scope) {}

  std::size_t num_tasks() const { return models_.size(); }
  int genotype_dims() const { return static_cast<int>(2 * models_.size() + 2); }

  MergeConfig decode(const std::vector<double>& genotype,
                     std::uint64_t dare_seed) const {
    MergeConfig cfg = decode_genotype(genotype, models_.size(), fixed_alpha_);
    cfg.filter = filter_;
    cfg.normalize = normalize_;
    cfg.trim_scope = trim_scope_;
    cfg.fixed_mask = fixed_mask_;
    cfg.seed = fixed_mask_ ? run_seed_ : dare_seed;
    return cfg;
  }

  /// DARE mask stream for candidate `index` of generation `generation`;
  /// fixed_mask pins it to the run seed instead.
  std::uint64_t candidate_seed(int generation, int index, int popsize) const {
    return fixed_mask_ ? run_seed_
                       : mix_seed(run_seed_,
                                  static_cast<std::uint64_t>(generation) *
                                          static_cast<std::uint64_t>(popsize) +
                                      static_cast<std::uint64_t>(index));
  }

  double evaluate_config(const MergeConfig& cfg) {
    std::string key = cfg.to_json().dump();
    {
      std::lock_guard<std::mutex> lock(cache_mutex_);
      auto it = cache_.find(key);
      if (it != cache_.end()) return it->second;
    }
    double fitness = evaluator_->evaluate(ties_dare_merge(*base_, models_, cfg));
    std::lock_guard<std::mutex> lock(cache_mutex_);
    cache_.emplace(std::move(key), fitness);
    // remember the full phenotype (including its DARE seed) of the best score
    if (!have_best_ || fitness > best_fitness_) {
      best_fitness_ = fitness;
      best_config_ = cfg;
      have_best_ = true;
    }
    return fitness;
  }

  bool has_best_config() const { return have_best_; }
  double best_config_fitness() const { return best_fitness_; }
  const MergeConfig& best_config() const { return best_config_; }

  /// Evaluates a generation, optionally across threads. Results are keyed by
  /// candidate index, so the outcome is independent of scheduling.
  std::vector<double> evaluate_generation(
      const std::vector<std::vector<double>>& candidates, int generation,
      int jobs) {
    std::vector<double> fitnesses(candidates.size(), 0.0);
    int popsize = static_cast<int>(candidates.size());
    auto eval_one = [&](int i) {
      MergeConfig cfg = decode(candidates[static_cast<std::size_t>(i)],
                               candidate_seed(generation, i, popsize));
      fitnesses[static_cast<std::size_t>(i)] = evaluate_config(cfg);
    };
    if (jobs <= 1 || popsize <= 1) {
      for (int i = 0; i < popsize; ++i) eval_one(i);
      return fitnesses;
    }
    std::vector<std::thread> workers;
    std::exception_ptr error;
    std::mutex error_mutex;
    std::atomic<int> next{0};
    int worker_count = std::min(jobs, popsize);
    for (int w = 0; w < worker_count; ++w) {
      workers.emplace_back([&] {
        for (int i = next.fetch_add(1); i < popsize; i = next.fetch_add(1)) {
          try {
            eval_one(i);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
    for (auto& w : workers) w.join();
    if (error) std::rethrow_exception(error);
    return fitnesses;
  }

 private:
  const TensorMap* base_;
  std::vector<const TensorMap*> models_;
  FitnessEvaluator* evaluator_;
  KeyFilter filter_;
  std::uint64_t run_seed_;
  bool fixed_mask_;
  std::optional<double> fixed_alpha_;
  Normalize normalize_;
  TrimScope trim_scope_;
  std::mutex cache_mutex_;
  std::map<std::string, double> cache_;
  bool have_best_ = false;
  double best_fitness_ = 0.0;
  MergeConfig best_config_;
};

}  // namespace evomerge
