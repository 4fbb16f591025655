// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evomerge/errors.hpp"
#include "evomerge/rng.hpp"
#include "evomerge/tensor_map.hpp"

// Merge arithmetic: task vectors, DARE drop-and-rescale, TIES trim / elect /
// disjoint merge, and the interpolation baselines. All operations are pure
// functions of (inputs, seed). Elementwise reductions over tasks run in task
// order with double accumulation, so results are bit-reproducible.

namespace evomerge {

/// A task vector is a TensorMap restricted to the merge domain,
/// semantically theta_ft - theta_init.
using TaskVector = TensorMap;

enum class Normalize { kCount, kWeightSum };
enum class TrimScope { kGlobal, kPerTensor };

/// The merge phenotype searched by the optimizer.
struct MergeConfig {
  static constexpr double kAlphaMax = 0.9;  // keeps 1/(1-alpha) bounded
  static constexpr double kCMax = 2.0;
  static constexpr double kLambdaMax = 2.0;

  double alpha = 0.0;
  std::vector<double> alpha_per_task;  // optional; overrides alpha when set
  std::vector<double> k;
  std::vector<double> c;
  double lambda = 1.0;
  KeyFilter filter;
  std::uint64_t seed = 0;
  Normalize normalize = Normalize::kCount;
  TrimScope trim_scope = TrimScope::kGlobal;
  bool fixed_mask = false;

  std::size_t num_tasks() const { return k.size(); }

  double task_alpha(std::size_t t) const {
    return alpha_per_task.empty() ? alpha : alpha_per_task[t];
  }

  void validate() const {
    if (k.empty()) throw ConfigError("merge config: need at least one task");
    if (c.size() != k.size()) {
      throw ConfigError("merge config: k and c lengths differ");
    }
    if (!alpha_per_task.empty() && alpha_per_task.size() != k.size()) {
      throw ConfigError("merge config: alpha_per_task length mismatch");
    }
    auto check = [](double v, double lo, double hi, const char* what) {
      if (!(v >= lo && v <= hi)) {
        throw ConfigError(std::string("merge config: ") + what +
                          " out of range [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "]");
      }
    };
    check(alpha, 0.0, kAlphaMax, "alpha");
    for (double a : alpha_per_task) check(a, 0.0, kAlphaMax, "alpha");
    for (double v : k) check(v, 0.0, 1.0, "k");
    for (double v : c) check(v, 0.0, kCMax, "c");
    check(lambda, 0.0, kLambdaMax, "lambda");
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"alpha", alpha},
                     {"k", k},
                     {"c", c},
                     {"lambda", lambda},
                     {"seed", seed},
                     {"include", filter.include_globs},
                     {"exclude", filter.exclude_globs},
                     {"normalize", normalize == Normalize::kCount ? "count" : "weight_sum"},
                     {"trim_scope", trim_scope == TrimScope::kGlobal ? "global" : "per_tensor"},
                     {"fixed_mask", fixed_mask}};
    if (!alpha_per_task.empty()) j["alpha_per_task"] = alpha_per_task;
    return j;
  }

  static MergeConfig from_json(const nlohmann::json& j) {
    MergeConfig cfg;
    try {
      cfg.alpha = j.value("alpha", 0.0);
      if (j.contains("alpha_per_task")) {
        cfg.alpha_per_task = j.at("alpha_per_task").get<std::vector<double>>();
      }
      cfg.k = j.at("k").get<std::vector<double>>();
      cfg.c = j.at("c").get<std::vector<double>>();
      cfg.lambda = j.value("lambda", 1.0);
      cfg.seed = j.value("seed", std::uint64_t{0});
      cfg.filter.include_globs = j.value("include", std::vector<std::string>{});
      cfg.filter.exclude_globs = j.value("exclude", std::vector<std::string>{});
      std::string norm = j.value("normalize", "count");
      if (norm == "count") {
        cfg.normalize = Normalize::kCount;
      } else if (norm == "weight_sum") {
        cfg.normalize = Normalize::kWeightSum;
      } else {
        throw ConfigError("merge config: unknown normalize '" + norm + "'");
      }
      std::string scope = j.value("trim_scope", "global");
      if (scope == "global") {
        cfg.trim_scope = TrimScope::kGlobal;
      } else if (scope == "per_tensor") {
        cfg.trim_scope = TrimScope::kPerTensor;
      } else {
        throw ConfigError("merge config: unknown trim_scope '" + scope + "'");
      }
      cfg.fixed_mask = j.value("fixed_mask", false);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("merge config: ") + e.what());
    }
    cfg.validate();
    return cfg;
  }
};

/// Per-parameter consensus signs over the flattened merge domain
/// (keys in lexicographic order, elements row-major within each tensor).
struct ElectedSigns {
  std::vector<std::string> keys;
  std::vector<std::int8_t> signs;  // one per flattened element, in {-1, 0, +1}
};

namespace detail {
inline int sign_of(float v) { return (v > 0.0f) - (v < 0.0f); }
}  // namespace detail

/// tau = theta_ft - theta_init on the filtered domain.
inline TaskVector task_vector(const TensorMap& theta_ft,
                              const TensorMap& theta_init,
                              const KeyFilter& filter = {}) {
  auto keys = aligned_keys({&theta_ft, &theta_init}, filter);
  TaskVector tau;
  for (const auto& key : keys) {
    const Tensor& ft = theta_ft.at(key);
    const Tensor& init = theta_init.at(key);
    Tensor t;
    t.shape = ft.shape;
    t.data.resize(ft.data.size());
    for (std::size_t i = 0; i < ft.data.size(); ++i) {
      t.data[i] = ft.data[i] - init.data[i];
    }
    tau.set(key, std::move(t));
  }
  return tau;
}

/// Drop-and-rescale: zero each element with probability alpha and divide the
/// survivors by (1 - alpha), so the expectation is unchanged. The Bernoulli
/// stream comes from SplitMix64(rng_seed), one draw per element in flat order.
inline TaskVector dare(const TaskVector& tau, double alpha,
                       std::uint64_t rng_seed) {
  if (!(alpha >= 0.0 && alpha <= MergeConfig::kAlphaMax)) {
    throw ConfigError("dare: alpha " + std::to_string(alpha) +
                      " outside [0, " + std::to_string(MergeConfig::kAlphaMax) + "]");
  }
  if (alpha == 0.0) return tau;
  SplitMix64 rng(rng_seed);
  double inv_keep = 1.0 / (1.0 - alpha);
  TaskVector out;
  for (const auto& [key, t] : tau.entries()) {
    Tensor o;
    o.shape = t.shape;
    o.data.resize(t.data.size());
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      bool drop = rng.next_double() < alpha;
      o.data[i] = drop ? 0.0f
                       : static_cast<float>(static_cast<double>(t.data[i]) * inv_keep);
    }
    out.set(key, std::move(o));
  }
  return out;
}

namespace detail {

// Keeps the r = ceil(k*d) elements of largest magnitude among `values`,
// ties broken by smaller flat index, zeroing the rest in-place via `keep`.
inline void trim_select(const std::vector<std::pair<float, std::int64_t>>& mag_idx,
                        std::int64_t r, std::vector<bool>& keep) {
  auto cmp = [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  };
  std::vector<std::pair<float, std::int64_t>> order = mag_idx;
  if (r < static_cast<std::int64_t>(order.size())) {
    std::nth_element(order.begin(), order.begin() + r, order.end(), cmp);
    order.resize(static_cast<std::size_t>(r));
  }
  for (const auto& [mag, idx] : order) keep[static_cast<std::size_t>(idx)] = true;
}

}  // namespace detail

/// TIES trim: keep the top ceil(k*d) elements by absolute value, zero the
/// rest. Ranking is global over the whole domain by default (the model is
/// treated as a single layer); per-tensor ranking is available for ablation.
inline TaskVector trim(const TaskVector& tau, double k,
                       TrimScope scope = TrimScope::kGlobal) {
  if (!(k >= 0.0 && k <= 1.0)) {
    throw ConfigError("trim: k " + std::to_string(k) + " outside [0, 1]");
  }
  if (k == 1.0) return tau;
  TaskVector out;
  if (scope == TrimScope::kGlobal) {
    std::int64_t d = 0;
    for (const auto& [key, t] : tau.entries()) d += t.numel();
    std::int64_t r = std::min<std::int64_t>(
        d, static_cast<std::int64_t>(std::ceil(k * static_cast<double>(d))));
    std::vector<std::pair<float, std::int64_t>> mag_idx;
    mag_idx.reserve(static_cast<std::size_t>(d));
    std::int64_t flat = 0;
    for (const auto& [key, t] : tau.entries()) {
      for (float v : t.data) mag_idx.emplace_back(std::fabs(v), flat++);
    }
    std::vector<bool> keep(static_cast<std::size_t>(d), false);
    detail::trim_select(mag_idx, r, keep);
    flat = 0;
    for (const auto& [key, t] : tau.entries()) {
      Tensor o;
      o.shape = t.shape;
      o.data.resize(t.data.size());
      for (std::size_t i = 0; i < t.data.size(); ++i, ++flat) {
        o.data[i] = keep[static_cast<std::size_t>(flat)] ? t.data[i] : 0.0f;
      }
      out.set(key, std::move(o));
    }
  } else {
    for (const auto& [key, t] : tau.entries()) {
      std::int64_t d = t.numel();
      std::int64_t r = std::min<std::int64_t>(
          d, static_cast<std::int64_t>(std::ceil(k * static_cast<double>(d))));
      std::vector<std::pair<float, std::int64_t>> mag_idx;
      mag_idx.reserve(static_cast<std::size_t>(d));
      for (std::int64_t i = 0; i < d; ++i) {
        mag_idx.emplace_back(std::fabs(t.data[static_cast<std::size_t>(i)]), i);
      }
      std::vector<bool> keep(static_cast<std::size_t>(d), false);
      detail::trim_select(mag_idx, r, keep);
      Tensor o;
      o.shape = t.shape;
      o.data.resize(t.data.size());
      for (std::size_t i = 0; i < t.data.size(); ++i) {
        o.data[i] = keep[i] ? t.data[i] : 0.0f;
      }
      out.set(key, std::move(o));
    }
  }
  return out;
}

/// Per-parameter sign with the greater total movement: sgn(sum_t tau_t^p),
/// with sgn(0) = 0. The sum over tasks runs in task order.
inline ElectedSigns elect(const std::vector<const TaskVector*>& taus) {
  auto keys = aligned_keys(taus);
  ElectedSigns es;
  es.keys = keys;
  for (const auto& key : keys) {
    const Tensor& first = taus[0]->at(key);
    for (std::size_t i = 0; i < first.data.size(); ++i) {
      double sum = 0.0;
      for (const TaskVector* tau : taus) {
        sum += static_cast<double>(tau->at(key).data[i]);
      }
      es.signs.push_back(static_cast<std::int8_t>((sum > 0.0) - (sum < 0.0)));
    }
  }
  return es;
}

/// Weighted sum over the sign-agreeing tasks A_p, divided by |A_p|
/// (the count, not the weight sum; Normalize::kWeightSum switches to the
/// original TIES convention). Zero elements never join A_p; an empty A_p or
/// an elected sign of zero yields zero.
inline TaskVector disjoint_merge(const std::vector<const TaskVector*>& taus,
                                 const std::vector<double>& c,
                                 const ElectedSigns& signs,
                                 Normalize normalize = Normalize::kCount) {
  if (c.size() != taus.size()) {
    throw ConfigError("disjoint_merge: weight count does not match task count");
  }
  auto keys = aligned_keys(taus);
  if (keys != signs.keys) {
    throw AlignmentError("disjoint_merge: elected signs cover a different domain");
  }
  TaskVector out;
  std::size_t flat = 0;
  for (const auto& key : keys) {
    const Tensor& first = taus[0]->at(key);
    Tensor o;
    o.shape = first.shape;
    o.data.resize(first.data.size());
    for (std::size_t i = 0; i < first.data.size(); ++i, ++flat) {
      int gamma = signs.signs[flat];
      if (gamma == 0) {
        o.data[i] = 0.0f;
        continue;
      }
      double sum = 0.0;
      double weight_sum = 0.0;
      int count = 0;
      for (std::size_t t = 0; t < taus.size(); ++t) {
        float v = taus[t]->at(key).data[i];
        if (detail::sign_of(v) == gamma) {
          sum += c[t] * static_cast<double>(v);
          weight_sum += c[t];
          ++count;
        }
      }
      if (count == 0) {
        o.data[i] = 0.0f;
      } else if (normalize == Normalize::kCount) {
        o.data[i] = static_cast<float>(sum / count);
      } else {
        o.data[i] = weight_sum != 0.0 ? static_cast<float>(sum / weight_sum) : 0.0f;
      }
    }
    out.set(key, std::move(o));
  }
  return out;
}

/// theta_final = theta_init + lambda * merged on the merge domain; every
/// tensor outside the domain is copied verbatim from `passthrough`.
inline TensorMap apply_merge(const TensorMap& theta_init,
                             const TaskVector& merged, double lambda,
                             const TensorMap& passthrough) {
  TensorMap out = passthrough;
  for (const auto& [key, m] : merged.entries()) {
    const Tensor& init = theta_init.at(key);
    if (init.shape != m.shape) {
      throw AlignmentError("apply_merge: shape mismatch for key '" + key + "'");
    }
    Tensor o;
    o.shape = init.shape;
    o.data.resize(init.data.size());
    for (std::size_t i = 0; i < init.data.size(); ++i) {
      o.data[i] = static_cast<float>(static_cast<double>(init.data[i]) +
                                     lambda * static_cast<double>(m.data[i]));
    }
    out.set(key, std::move(o));
  }
  return out;
}

/// Full DARE + TIES pipeline: per-task DARE with stream seed mix_seed(seed, t),
/// trim with k_t, elect, disjoint merge with weights c, then
/// theta_init + lambda * tau_merged with theta_init passed through outside
/// the domain.
inline TensorMap ties_dare_merge(const TensorMap& theta_init,
                                 const std::vector<const TensorMap*>& thetas_ft,
                                 const MergeConfig& cfg) {
  cfg.validate();
  if (thetas_ft.size() != cfg.num_tasks()) {
    throw ConfigError("ties_dare_merge: config is for " +
                      std::to_string(cfg.num_tasks()) + " tasks, got " +
                      std::to_string(thetas_ft.size()) + " models");
  }
  std::vector<const TensorMap*> all{&theta_init};
  all.insert(all.end(), thetas_ft.begin(), thetas_ft.end());
  aligned_keys(all, cfg.filter);  // surface alignment errors up front

  std::vector<TaskVector> tilde;
  tilde.reserve(thetas_ft.size());
  for (std::size_t t = 0; t < thetas_ft.size(); ++t) {
    TaskVector tau = task_vector(*thetas_ft[t], theta_init, cfg.filter);
    tau = dare(tau, cfg.task_alpha(t), mix_seed(cfg.seed, t));
    tilde.push_back(trim(tau, cfg.k[t], cfg.trim_scope));
  }
  std::vector<const TaskVector*> ptrs;
  for (const auto& tv : tilde) ptrs.push_back(&tv);
  ElectedSigns signs = elect(ptrs);
  TaskVector merged = disjoint_merge(ptrs, cfg.c, signs, cfg.normalize);
  return apply_merge(theta_init, merged, cfg.lambda, theta_init);
}

/// Elementwise weighted average; weights must sum to 1 within 1e-9.
inline TensorMap linear_merge(const std::vector<const TensorMap*>& thetas,
                              const std::vector<double>& w) {
  if (w.size() != thetas.size()) {
    throw ConfigError("linear_merge: weight count does not match model count");
  }
  double sum = 0.0;
  for (double v : w) sum += v;
  if (std::fabs(sum - 1.0) > 1e-9) {
    throw ConfigError("linear_merge: weights sum to " + std::to_string(sum) +
                      ", expected 1");
  }
  auto keys = aligned_keys(thetas);
  TensorMap out;
  for (const auto& key : keys) {
    const Tensor& first = thetas[0]->at(key);
    Tensor o;
    o.shape = first.shape;
    o.data.resize(first.data.size());
    for (std::size_t i = 0; i < first.data.size(); ++i) {
      double acc = 0.0;
      for (std::size_t m = 0; m < thetas.size(); ++m) {
        acc += w[m] * static_cast<double>(thetas[m]->at(key).data[i]);
      }
      o.data[i] = static_cast<float>(acc);
    }
    out.set(key, std::move(o));
  }
  return out;
}

/// Spherical linear interpolation applied per tensor on flattened vectors,
/// falling back to linear interpolation for near-parallel or near-zero inputs.
inline TensorMap slerp_merge(const TensorMap& theta_a, const TensorMap& theta_b,
                             double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw ConfigError("slerp_merge: t outside [0, 1]");
  }
  auto keys = aligned_keys({&theta_a, &theta_b});
  TensorMap out;
  for (const auto& key : keys) {
    const Tensor& a = theta_a.at(key);
    const Tensor& b = theta_b.at(key);
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      dot += static_cast<double>(a.data[i]) * static_cast<double>(b.data[i]);
      na2 += static_cast<double>(a.data[i]) * static_cast<double>(a.data[i]);
      nb2 += static_cast<double>(b.data[i]) * static_cast<double>(b.data[i]);
    }
    double na = std::sqrt(na2), nb = std::sqrt(nb2);
    double wa, wb;
    if (na < 1e-12 || nb < 1e-12) {
      wa = 1.0 - t;
      wb = t;
    } else {
      double omega = std::acos(std::clamp(dot / (na * nb), -1.0, 1.0));
      if (omega < 1e-6) {
        wa = 1.0 - t;
        wb = t;
      } else {
        double s = std::sin(omega);
        wa = std::sin((1.0 - t) * omega) / s;
        wb = std::sin(t * omega) / s;
      }
    }
    Tensor o;
    o.shape = a.shape;
    o.data.resize(a.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      o.data[i] = static_cast<float>(wa * static_cast<double>(a.data[i]) +
                                     wb * static_cast<double>(b.data[i]));
    }
    out.set(key, std::move(o));
  }
  return out;
}

/// Task Arithmetic baseline: theta_init + lambda * sum_t c_t * tau_t,
/// with no trim or sign election.
inline TensorMap task_arithmetic_merge(const TensorMap& theta_init,
                                       const std::vector<const TaskVector*>& taus,
                                       const std::vector<double>& c,
                                       double lambda) {
  if (c.size() != taus.size()) {
    throw ConfigError("task_arithmetic_merge: weight count mismatch");
  }
  auto keys = aligned_keys(taus);
  TensorMap out = theta_init;
  for (const auto& key : keys) {
    const Tensor& init = theta_init.at(key);
    const Tensor& first = taus[0]->at(key);
    if (init.shape != first.shape) {
      throw AlignmentError("task_arithmetic_merge: shape mismatch for key '" +
                           key + "'");
    }
    Tensor o;
    o.shape = init.shape;
    o.data.resize(init.data.size());
    for (std::size_t i = 0; i < init.data.size(); ++i) {
      double acc = 0.0;
      for (std::size_t m = 0; m < taus.size(); ++m) {
        acc += c[m] * static_cast<double>(taus[m]->at(key).data[i]);
      }
      o.data[i] = static_cast<float>(static_cast<double>(init.data[i]) +
                                     lambda * acc);
    }
    out.set(key, std::move(o));
  }
  return out;
}

/// Maps a raw search vector g in [0,1]^(2K+2) onto a MergeConfig:
/// g[0] -> alpha in [0, alpha_max] (ignored when `fixed_alpha` is set),
/// g[1..K] -> k_t directly, g[K+1..2K] -> c_t in [0, c_max],
/// g[2K+1] -> lambda in [0, lambda_max].
inline MergeConfig decode_genotype(const std::vector<double>& g, std::size_t K,
                                   std::optional<double> fixed_alpha = {}) {
  if (g.size() != 2 * K + 2) {
    throw ConfigError("genotype length " + std::to_string(g.size()) +
                      " does not match 2K+2 = " + std::to_string(2 * K + 2));
  }
  auto clamp01 = [](double v) { return std::clamp(v, 0.0, 1.0); };
  MergeConfig cfg;
  cfg.alpha = fixed_alpha ? *fixed_alpha
                          : clamp01(g[0]) * MergeConfig::kAlphaMax;
  cfg.k.resize(K);
  cfg.c.resize(K);
  for (std::size_t t = 0; t < K; ++t) {
    cfg.k[t] = clamp01(g[1 + t]);
    cfg.c[t] = clamp01(g[1 + K + t]) * MergeConfig::kCMax;
  }
  cfg.lambda = clamp01(g[1 + 2 * K]) * MergeConfig::kLambdaMax;
  return cfg;
}

}  // namespace evomerge
