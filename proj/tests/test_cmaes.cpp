// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "evomerge/cmaes.hpp"

using namespace evomerge;

namespace {

double sphere(const std::vector<double>& x) {
  double sum = 0.0;
  for (double v : x) {
    double d = v - 0.5;
    sum += d * d;
  }
  return -sum;
}

double rosenbrock(const std::vector<double>& x) {
  // shifted so the optimum (all ones in standard coordinates) sits at 0.75
  // inside the [0,1] box: u_i = 4 * (x_i - 0.5)
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < x.size(); ++i) {
    double a = 4.0 * (x[i] - 0.5);
    double b = 4.0 * (x[i + 1] - 0.5);
    sum += 100.0 * std::pow(b - a * a, 2.0) + std::pow(1.0 - a, 2.0);
  }
  return -sum;
}

}  // namespace

TEST_CASE("parameter defaults and validation") {
  CHECK(CmaParams::default_popsize(10) == 10);
  CHECK(CmaParams::default_popsize(2) == 6);
  CHECK(CmaParams::default_popsize(22) == 13);

  CmaParams p;
  p.n = 10;
  auto r = p.resolved();
  CHECK(r.popsize == 10);
  CHECK(r.mu == 5);
  CHECK_THAT(r.sigma0, Catch::Matchers::WithinAbs(1.0 / 6.0, 1e-15));
  CHECK(r.mean0 == std::vector<double>(10, 0.5));
  CHECK(r.lower == std::vector<double>(10, 0.0));
  CHECK(r.upper == std::vector<double>(10, 1.0));

  CmaParams bad;
  CHECK_THROWS_AS(bad.resolved(), ConfigError);
  bad.n = 3;
  bad.popsize = 1;
  CHECK_THROWS_AS(bad.resolved(), ConfigError);
  bad.popsize = 4;
  bad.mu = 4;
  CHECK_THROWS_AS(bad.resolved(), ConfigError);
  bad.mu = 2;
  bad.sigma0 = 0.0;
  CHECK_THROWS_AS(bad.resolved(), ConfigError);
  bad.sigma0 = 0.1;
  bad.lower = {0.0, 0.0, 1.0};
  bad.upper = {1.0, 1.0, 1.0};
  CHECK_THROWS_AS(bad.resolved(), ConfigError);
}

TEST_CASE("ask is deterministic per seed and respects bounds") {
  CmaParams p;
  p.n = 4;
  p.seed = 99;
  Cmaes a(p), b(p);
  auto ca = a.ask();
  auto cb = b.ask();
  REQUIRE(ca.size() == cb.size());
  CHECK(ca == cb);

  p.seed = 100;
  Cmaes c(p);
  CHECK(c.ask() != ca);

  p.seed = 99;
  p.sigma0 = 50.0;  // force clipping
  Cmaes wide(p);
  for (const auto& x : wide.ask()) {
    for (double v : x) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("tell input validation") {
  CmaParams p;
  p.n = 3;
  Cmaes opt(p);
  auto xs = opt.ask();
  std::vector<double> fs(xs.size() - 1, 0.0);
  CHECK_THROWS_AS(opt.tell(xs, fs), ConfigError);
  fs.assign(xs.size(), 0.0);
  fs[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(opt.tell(xs, fs), Error);
}

TEST_CASE("mean moves toward better candidates") {
  CmaParams p;
  p.n = 2;
  p.seed = 5;
  Cmaes opt(p);
  // reward proximity to the corner (1, 1)
  for (int gen = 0; gen < 20; ++gen) {
    auto xs = opt.ask();
    std::vector<double> fs;
    for (const auto& x : xs) fs.push_back(-(std::pow(x[0] - 1.0, 2) + std::pow(x[1] - 1.0, 2)));
    opt.tell(xs, fs);
  }
  auto m = opt.mean();
  CHECK(m[0] > 0.7);
  CHECK(m[1] > 0.7);
  CHECK(opt.generation() == 20);
  CHECK(opt.evaluations() == 20L * opt.params().popsize);
}

TEST_CASE("constant fitness stays numerically stable") {
  CmaParams p;
  p.n = 3;
  p.seed = 11;
  Cmaes opt(p);
  for (int gen = 0; gen < 50; ++gen) {
    auto xs = opt.ask();
    opt.tell(xs, std::vector<double>(xs.size(), 1.25));
  }
  CHECK(std::isfinite(opt.sigma()));
  for (double v : opt.mean()) CHECK(std::isfinite(v));
}

TEST_CASE("sphere n=10 reaches the optimum") {
  CmaParams p;
  p.n = 10;
  p.seed = 42;
  auto result = run_cmaes(p, sphere);
  CHECK(result.best_fitness >= -1e-8);
  CHECK(static_cast<int>(result.history.size()) <= 600);
}

TEST_CASE("rosenbrock n=5 reaches the valley floor") {
  CmaParams p;
  p.n = 5;
  p.seed = 42;
  auto result = run_cmaes(p, rosenbrock);
  CHECK(-result.best_fitness < 1e-3);
}

TEST_CASE("adding a fitness offset leaves the trajectory unchanged") {
  auto run = [](double offset) {
    CmaParams p;
    p.n = 4;
    p.seed = 7;
    p.max_generations = 30;
    return run_cmaes(p, [&](const std::vector<double>& x) {
      return sphere(x) + offset;
    });
  };
  auto a = run(0.0);
  auto b = run(1000.0);
  REQUIRE(a.history.size() == b.history.size());
  CHECK(a.best_genotype == b.best_genotype);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].sigma == b.history[i].sigma);
    CHECK(a.history[i].best_genotype == b.history[i].best_genotype);
  }
}

TEST_CASE("checkpoint round trip reproduces the trajectory bit for bit") {
  CmaParams p;
  p.n = 6;
  p.seed = 123;
  p.max_generations = 10;

  // uninterrupted run, recording every generation
  Cmaes full(p);
  std::vector<GenRecord> full_hist;
  RunOptions opts;
  opts.on_generation = [&](const GenRecord& r) { full_hist.push_back(r); };
  BatchObjective batch = [](const std::vector<std::vector<double>>& xs) {
    std::vector<double> fs;
    for (const auto& x : xs) fs.push_back(sphere(x));
    return fs;
  };
  auto full_result = run_cmaes(full, batch, opts);

  // run 5 generations, serialize, resume from JSON text, run 5 more
  Cmaes first(p);
  RunOptions five;
  five.budget = 5;
  run_cmaes(first, batch, five);
  std::string text = first.checkpoint_json().dump();
  Cmaes resumed = Cmaes::from_checkpoint(nlohmann::json::parse(text));
  CHECK(resumed.generation() == 5);
  CHECK(resumed.evaluations() == first.evaluations());
  std::vector<GenRecord> tail;
  RunOptions rest;
  rest.budget = 10;
  rest.on_generation = [&](const GenRecord& r) { tail.push_back(r); };
  auto resumed_result = run_cmaes(resumed, batch, rest);

  CHECK(resumed_result.best_fitness == full_result.best_fitness);
  CHECK(resumed_result.best_genotype == full_result.best_genotype);
  REQUIRE(tail.size() == 5);
  for (std::size_t i = 0; i < tail.size(); ++i) {
    const GenRecord& a = full_hist[5 + i];
    const GenRecord& b = tail[i];
    CHECK(a.gen == b.gen);
    CHECK(a.best == b.best);
    CHECK(a.mean_fitness == b.mean_fitness);
    CHECK(a.sigma == b.sigma);
    CHECK(a.best_genotype == b.best_genotype);
  }

  // a load/save round trip reproduces the checkpoint text exactly
  CHECK(Cmaes::from_checkpoint(nlohmann::json::parse(text))
            .checkpoint_json().dump() == text);

  nlohmann::json broken = nlohmann::json::parse(text);
  broken["format"] = 999;
  CHECK_THROWS_AS(Cmaes::from_checkpoint(broken), FormatError);
}

TEST_CASE("evaluation budget unit") {
  CmaParams p;
  p.n = 3;
  p.seed = 9;
  Cmaes opt(p);
  BatchObjective batch = [](const std::vector<std::vector<double>>& xs) {
    std::vector<double> fs;
    for (const auto& x : xs) fs.push_back(sphere(x));
    return fs;
  };
  RunOptions opts;
  opts.budget_unit = BudgetUnit::kEvaluations;
  opts.budget = 25;  // popsize 7 at n=3, so 4 generations = 28 evaluations
  run_cmaes(opt, batch, opts);
  CHECK(opt.params().popsize == 7);
  CHECK(opt.generation() == 4);
  CHECK(opt.evaluations() == 28);
}

TEST_CASE("zero budget evaluates the mean once") {
  CmaParams p;
  p.n = 3;
  p.seed = 1;
  Cmaes opt(p);
  int calls = 0;
  BatchObjective batch = [&](const std::vector<std::vector<double>>& xs) {
    ++calls;
    std::vector<double> fs;
    for (const auto& x : xs) fs.push_back(sphere(x));
    return fs;
  };
  RunOptions opts;
  opts.budget = 0;
  auto result = run_cmaes(opt, batch, opts);
  CHECK(calls == 1);
  CHECK(result.best_genotype == std::vector<double>(3, 0.5));
  CHECK(result.best_fitness == 0.0);
  CHECK(opt.evaluations() == 1);
}
