// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "evomerge/detail/base64.hpp"
#include "evomerge/errors.hpp"

// Deterministic, resumable (mu/mu_w, lambda)-CMA-ES with the Hansen (2006)
// default learning rates, maximization convention, and clip-repair box
// bounds. Serializing a checkpoint and resuming reproduces the uninterrupted
// trajectory bit for bit.

namespace evomerge {

struct CmaParams {
  int n = 0;
  int popsize = 0;  // 0 = 4 + floor(3 ln n)
  int mu = 0;       // 0 = popsize / 2
  double sigma0 = 1.0 / 6.0;
  std::vector<double> mean0;  // empty = all 0.5
  int max_generations = 600;
  std::uint64_t seed = 0;
  std::vector<double> lower;  // empty = all 0
  std::vector<double> upper;  // empty = all 1

  static int default_popsize(int n) {
    return 4 + static_cast<int>(std::floor(3.0 * std::log(static_cast<double>(n))));
  }

  CmaParams resolved() const {
    CmaParams p = *this;
    if (p.n <= 0) throw ConfigError("cma: dimension must be positive");
    if (p.popsize == 0) p.popsize = default_popsize(p.n);
    if (p.mu == 0) p.mu = p.popsize / 2;
    if (p.popsize < 2) throw ConfigError("cma: popsize must be >= 2");
    if (p.mu < 1 || p.mu >= p.popsize) throw ConfigError("cma: need 1 <= mu < popsize");
    if (!(p.sigma0 > 0)) throw ConfigError("cma: sigma0 must be positive");
    if (p.mean0.empty()) p.mean0.assign(static_cast<std::size_t>(p.n), 0.5);
    if (p.lower.empty()) p.lower.assign(static_cast<std::size_t>(p.n), 0.0);
    if (p.upper.empty()) p.upper.assign(static_cast<std::size_t>(p.n), 1.0);
    if (static_cast<int>(p.mean0.size()) != p.n ||
        static_cast<int>(p.lower.size()) != p.n ||
        static_cast<int>(p.upper.size()) != p.n) {
      throw ConfigError("cma: mean0/bounds length does not match dimension");
    }
    for (int i = 0; i < p.n; ++i) {
      if (!(p.lower[static_cast<std::size_t>(i)] < p.upper[static_cast<std::size_t>(i)])) {
        throw ConfigError("cma: need lower < upper in every dimension");
      }
    }
    return p;
  }

  nlohmann::json to_json() const {
    return {{"n", n},       {"popsize", popsize},
            {"mu", mu},     {"sigma0", sigma0},
            {"mean0", detail::encode_f64(mean0)},
            {"max_generations", max_generations},
            {"seed", seed},
            {"lower", detail::encode_f64(lower)},
            {"upper", detail::encode_f64(upper)}};
  }

  static CmaParams from_json(const nlohmann::json& j) {
    CmaParams p;
    p.n = j.at("n").get<int>();
    p.popsize = j.at("popsize").get<int>();
    p.mu = j.at("mu").get<int>();
    p.sigma0 = j.at("sigma0").get<double>();
    p.mean0 = detail::decode_f64(j.at("mean0").get<std::string>());
    p.max_generations = j.at("max_generations").get<int>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.lower = detail::decode_f64(j.at("lower").get<std::string>());
    p.upper = detail::decode_f64(j.at("upper").get<std::string>());
    return p;
  }
};

class Cmaes {
 public:
  static constexpr int kCheckpointFormat = 1;

  explicit Cmaes(const CmaParams& params) : params_(params.resolved()) {
    int n = params_.n;
    setup_constants();
    mean_ = Eigen::Map<const Eigen::VectorXd>(params_.mean0.data(), n);
    C_ = Eigen::MatrixXd::Identity(n, n);
    p_sigma_ = Eigen::VectorXd::Zero(n);
    p_c_ = Eigen::VectorXd::Zero(n);
    sigma_ = params_.sigma0;
    rng_.seed(params_.seed);
    update_eigensystem();
  }

  const CmaParams& params() const { return params_; }
  int generation() const { return generation_; }
  long evaluations() const { return evaluations_; }
  double sigma() const { return sigma_; }
  bool has_best() const { return best_generation_ >= 0; }
  double best_fitness() const { return best_fitness_; }
  const std::vector<double>& best_genotype() const { return best_genotype_; }
  bool eigen_was_reset() const { return eigen_reset_; }

  /// Samples popsize candidates x_i = clip(mean + sigma * B D z_i).
  std::vector<std::vector<double>> ask() {
    int n = params_.n;
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(params_.popsize));
    for (int i = 0; i < params_.popsize; ++i) {
      Eigen::VectorXd z(n);
      for (int d = 0; d < n; ++d) z[d] = next_normal();
      Eigen::VectorXd x = mean_ + sigma_ * (B_ * (D_.cwiseProduct(z)));
      std::vector<double> xi(static_cast<std::size_t>(n));
      for (int d = 0; d < n; ++d) {
        xi[static_cast<std::size_t>(d)] =
            std::clamp(x[d], params_.lower[static_cast<std::size_t>(d)],
                       params_.upper[static_cast<std::size_t>(d)]);
      }
      out.push_back(std::move(xi));
    }
    return out;
  }

  /// Rank-based update; `fitnesses[i]` belongs to `candidates[i]`,
  /// higher is better.
  void tell(const std::vector<std::vector<double>>& candidates,
            const std::vector<double>& fitnesses) {
    int n = params_.n;
    if (static_cast<int>(candidates.size()) != params_.popsize ||
        fitnesses.size() != candidates.size()) {
      throw ConfigError("cma tell: expected exactly popsize evaluated candidates");
    }
    for (std::size_t i = 0; i < fitnesses.size(); ++i) {
      if (!std::isfinite(fitnesses[i])) {
        throw Error("cma tell: candidate " + std::to_string(i) +
                    " has non-finite fitness");
      }
    }
    std::vector<int> order(static_cast<std::size_t>(params_.popsize));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return fitnesses[static_cast<std::size_t>(a)] >
             fitnesses[static_cast<std::size_t>(b)];
    });

    Eigen::VectorXd old_mean = mean_;
    std::vector<Eigen::VectorXd> ys(static_cast<std::size_t>(params_.mu));
    Eigen::VectorXd y_w = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < params_.mu; ++i) {
      const auto& x = candidates[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
      Eigen::VectorXd y =
          (Eigen::Map<const Eigen::VectorXd>(x.data(), n) - old_mean) / sigma_;
      y_w += weights_[static_cast<std::size_t>(i)] * y;
      ys[static_cast<std::size_t>(i)] = std::move(y);
    }
    mean_ = old_mean + sigma_ * y_w;

    p_sigma_ = (1.0 - c_sigma_) * p_sigma_ +
               std::sqrt(c_sigma_ * (2.0 - c_sigma_) * mu_eff_) * (inv_sqrt_C_ * y_w);
    double ps_norm = p_sigma_.norm();
    double expected = ps_norm / std::sqrt(1.0 - std::pow(1.0 - c_sigma_,
                                                         2.0 * (generation_ + 1)));
    bool hsig = expected / chi_n_ < 1.4 + 2.0 / (n + 1.0);
    p_c_ = (1.0 - c_c_) * p_c_ +
           (hsig ? std::sqrt(c_c_ * (2.0 - c_c_) * mu_eff_) : 0.0) * y_w;

    Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < params_.mu; ++i) {
      rank_mu += weights_[static_cast<std::size_t>(i)] *
                 (ys[static_cast<std::size_t>(i)] *
                  ys[static_cast<std::size_t>(i)].transpose());
    }
    C_ = (1.0 - c_1_ - c_mu_) * C_ +
         c_1_ * (p_c_ * p_c_.transpose() +
                 (hsig ? 0.0 : c_c_ * (2.0 - c_c_)) * C_) +
         c_mu_ * rank_mu;
    C_ = 0.5 * (C_ + C_.transpose().eval());  // symmetry repair

    sigma_ *= std::exp(std::min(1.0, (c_sigma_ / d_sigma_) * (ps_norm / chi_n_ - 1.0)));

    int best_idx = order[0];
    double gen_best = fitnesses[static_cast<std::size_t>(best_idx)];
    if (best_generation_ < 0 || gen_best > best_fitness_) {
      best_fitness_ = gen_best;
      best_genotype_ = candidates[static_cast<std::size_t>(best_idx)];
      best_generation_ = generation_;
    }

    ++generation_;
    evaluations_ += params_.popsize;
    if (generation_ - last_eigen_generation_ >= eigen_interval_) {
      update_eigensystem();
    }
  }

  void record_external_evaluation(const std::vector<double>& genotype,
                                  double fitness) {
    ++evaluations_;
    if (best_generation_ < 0 || fitness > best_fitness_) {
      best_fitness_ = fitness;
      best_genotype_ = genotype;
      best_generation_ = generation_;
    }
  }

  std::vector<double> mean() const {
    return {mean_.data(), mean_.data() + mean_.size()};
  }

  nlohmann::json checkpoint_json() const {
    auto vec = [](const Eigen::VectorXd& v) {
      return detail::encode_f64({v.data(), v.data() + v.size()});
    };
    auto mat = [](const Eigen::MatrixXd& m) {
      std::vector<double> flat;
      flat.reserve(static_cast<std::size_t>(m.size()));
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
      }
      return detail::encode_f64(flat);
    };
    std::ostringstream rng_text;
    rng_text << rng_;
    nlohmann::json best = nullptr;
    if (best_generation_ >= 0) {
      best = {{"genotype", detail::encode_f64(best_genotype_)},
              {"fitness", best_fitness_},
              {"generation", best_generation_}};
    }
    return {{"format", kCheckpointFormat},
            {"params", params_.to_json()},
            {"generation", generation_},
            {"evaluations", evaluations_},
            {"mean", vec(mean_)},
            {"C", mat(C_)},
            {"B", mat(B_)},
            {"D", vec(D_)},
            {"p_sigma", vec(p_sigma_)},
            {"p_c", vec(p_c_)},
            {"sigma", sigma_},
            {"rng", rng_text.str()},
            {"last_eigen_generation", last_eigen_generation_},
            {"normal_spare_valid", spare_valid_},
            {"normal_spare", spare_},
            {"best", best}};
  }

  static Cmaes from_checkpoint(const nlohmann::json& j) {
    if (j.value("format", -1) != kCheckpointFormat) {
      throw FormatError("checkpoint: unsupported format version");
    }
    Cmaes opt(CmaParams::from_json(j.at("params")));
    int n = opt.params_.n;
    auto vec = [&](const std::string& key) {
      auto v = detail::decode_f64(j.at(key).get<std::string>());
      if (static_cast<int>(v.size()) != n) {
        throw FormatError("checkpoint: field '" + key + "' has wrong length");
      }
      return Eigen::Map<const Eigen::VectorXd>(v.data(), n).eval();
    };
    auto mat = [&](const std::string& key) {
      auto v = detail::decode_f64(j.at(key).get<std::string>());
      if (static_cast<int>(v.size()) != n * n) {
        throw FormatError("checkpoint: field '" + key + "' has wrong length");
      }
      Eigen::MatrixXd m(n, n);
      std::size_t idx = 0;
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) m(r, c) = v[idx++];
      }
      return m;
    };
    opt.generation_ = j.at("generation").get<int>();
    opt.evaluations_ = j.at("evaluations").get<long>();
    opt.mean_ = vec("mean");
    opt.C_ = mat("C");
    opt.B_ = mat("B");
    opt.D_ = vec("D");
    opt.inv_sqrt_C_ =
        opt.B_ * opt.D_.cwiseInverse().asDiagonal() * opt.B_.transpose();
    opt.p_sigma_ = vec("p_sigma");
    opt.p_c_ = vec("p_c");
    opt.sigma_ = j.at("sigma").get<double>();
    opt.last_eigen_generation_ = j.at("last_eigen_generation").get<int>();
    opt.spare_valid_ = j.value("normal_spare_valid", false);
    opt.spare_ = j.value("normal_spare", 0.0);
    std::istringstream rng_text(j.at("rng").get<std::string>());
    rng_text >> opt.rng_;
    if (!j.at("best").is_null()) {
      const auto& b = j.at("best");
      opt.best_genotype_ = detail::decode_f64(b.at("genotype").get<std::string>());
      opt.best_fitness_ = b.at("fitness").get<double>();
      opt.best_generation_ = b.at("generation").get<int>();
    }
    return opt;
  }

 private:
  void setup_constants() {
    int n = params_.n;
    int mu = params_.mu;
    weights_.resize(static_cast<std::size_t>(mu));
    double sum = 0.0;
    for (int i = 0; i < mu; ++i) {
      weights_[static_cast<std::size_t>(i)] =
          std::log(mu + 0.5) - std::log(static_cast<double>(i + 1));
      sum += weights_[static_cast<std::size_t>(i)];
    }
    double sq = 0.0;
    for (auto& w : weights_) {
      w /= sum;
      sq += w * w;
    }
    mu_eff_ = 1.0 / sq;
    c_sigma_ = (mu_eff_ + 2.0) / (n + mu_eff_ + 5.0);
    d_sigma_ = 1.0 +
               2.0 * std::max(0.0, std::sqrt((mu_eff_ - 1.0) / (n + 1.0)) - 1.0) +
               c_sigma_;
    c_c_ = (4.0 + mu_eff_ / n) / (n + 4.0 + 2.0 * mu_eff_ / n);
    c_1_ = 2.0 / (std::pow(n + 1.3, 2.0) + mu_eff_);
    c_mu_ = std::min(1.0 - c_1_, 2.0 * (mu_eff_ - 2.0 + 1.0 / mu_eff_) /
                                     (std::pow(n + 2.0, 2.0) + mu_eff_));
    chi_n_ = std::sqrt(static_cast<double>(n)) *
             (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));
    eigen_interval_ = std::max(
        1, static_cast<int>(std::ceil(1.0 / (10.0 * n * (c_1_ + c_mu_)))));
  }

  void update_eigensystem() {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(C_);
    if (solver.info() != Eigen::Success) {
      C_ = Eigen::MatrixXd::Identity(params_.n, params_.n);
      solver.compute(C_);
      eigen_reset_ = true;
    }
    B_ = solver.eigenvectors();
    D_ = solver.eigenvalues().cwiseMax(1e-20).cwiseSqrt();
    inv_sqrt_C_ = B_ * D_.cwiseInverse().asDiagonal() * B_.transpose();
    last_eigen_generation_ = generation_;
  }

  double next_uniform() {
    return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  }

  // Box-Muller with a serialized spare, so the stream survives checkpointing.
  double next_normal() {
    if (spare_valid_) {
      spare_valid_ = false;
      return spare_;
    }
    double u1 = 1.0 - next_uniform();  // (0, 1]
    double u2 = next_uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    spare_valid_ = true;
    return radius * std::cos(angle);
  }

  CmaParams params_;
  std::vector<double> weights_;
  double mu_eff_ = 0, c_sigma_ = 0, d_sigma_ = 0, c_c_ = 0, c_1_ = 0, c_mu_ = 0;
  double chi_n_ = 0;
  int eigen_interval_ = 1;

  Eigen::VectorXd mean_;
  Eigen::MatrixXd C_;
  Eigen::MatrixXd B_;
  Eigen::VectorXd D_;
  Eigen::MatrixXd inv_sqrt_C_;
  Eigen::VectorXd p_sigma_;
  Eigen::VectorXd p_c_;
  double sigma_ = 0;
  int generation_ = 0;
  long evaluations_ = 0;
  int last_eigen_generation_ = 0;
  bool eigen_reset_ = false;

  std::mt19937_64 rng_;
  bool spare_valid_ = false;
  double spare_ = 0.0;

  std::vector<double> best_genotype_;
  double best_fitness_ = 0.0;
  int best_generation_ = -1;
};

// ---------------------------------------------------------------------------
// Driver

struct GenRecord {
  int gen = 0;
  double best = 0;          // best-so-far fitness
  double mean_fitness = 0;  // mean fitness of this generation
  double sigma = 0;
  std::vector<double> best_genotype;

  nlohmann::json to_json() const {
    return {{"gen", gen},
            {"best", best},
            {"mean_fitness", mean_fitness},
            {"sigma", sigma},
            {"best_genotype", best_genotype}};
  }
};

enum class BudgetUnit { kGenerations, kEvaluations };

struct RunOptions {
  BudgetUnit budget_unit = BudgetUnit::kGenerations;
  long budget = -1;  // -1 = params.max_generations
  std::function<void(const GenRecord&)> on_generation;
};

struct RunResult {
  std::vector<double> best_genotype;
  double best_fitness = 0;
  std::vector<GenRecord> history;
};

/// Evaluates a whole generation at once; entry i is candidate i's fitness.
using BatchObjective =
    std::function<std::vector<double>(const std::vector<std::vector<double>>&)>;

/// Ask/tell loop until the budget is exhausted. A zero budget evaluates the
/// current mean once and returns it.
inline RunResult run_cmaes(Cmaes& opt, const BatchObjective& objective,
                           const RunOptions& options = {}) {
  long budget = options.budget >= 0 ? options.budget
                                    : opt.params().max_generations;
  RunResult result;
  auto budget_left = [&] {
    return options.budget_unit == BudgetUnit::kGenerations
               ? opt.generation() < budget
               : opt.evaluations() < budget;
  };

  if (budget == 0 && !opt.has_best()) {
    std::vector<std::vector<double>> mean_only{opt.mean()};
    double f = objective(mean_only).at(0);
    opt.record_external_evaluation(mean_only[0], f);
  }

  while (budget_left()) {
    auto candidates = opt.ask();
    auto fitnesses = objective(candidates);
    if (fitnesses.size() != candidates.size()) {
      throw Error("objective returned wrong number of fitnesses");
    }
    int gen = opt.generation();
    opt.tell(candidates, fitnesses);

    GenRecord record;
    record.gen = gen;
    record.best = opt.best_fitness();
    record.mean_fitness =
        std::accumulate(fitnesses.begin(), fitnesses.end(), 0.0) /
        static_cast<double>(fitnesses.size());
    record.sigma = opt.sigma();
    record.best_genotype = opt.best_genotype();
    if (options.on_generation) options.on_generation(record);
    result.history.push_back(std::move(record));
  }

  result.best_genotype = opt.best_genotype();
  result.best_fitness = opt.best_fitness();
  return result;
}

/// Convenience wrapper over a scalar objective.
inline RunResult run_cmaes(const CmaParams& params,
                           const std::function<double(const std::vector<double>&)>& objective,
                           const RunOptions& options = {}) {
  Cmaes opt(params);
  BatchObjective batch = [&](const std::vector<std::vector<double>>& xs) {
    std::vector<double> fs;
    fs.reserve(xs.size());
    for (const auto& x : xs) fs.push_back(objective(x));
    return fs;
  };
  return run_cmaes(opt, batch, options);
}

}  // namespace evomerge
