#pragma once

// DPO objective on sequence-level log-probabilities, plus a log-linear toy
// policy whose analytic gradient can be checked against finite differences.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "topicllm/error.hpp"

namespace topicllm::dpo {

inline constexpr double kDefaultBeta = 0.1;
inline constexpr double kDefaultFdStep = 1e-5;
inline constexpr double kDefaultGradTolerance = 1e-5;

class Beta {
 public:
  explicit Beta(double value = kDefaultBeta) : value_(value) {
    if (!(value > 0.0) || !std::isfinite(value)) throw invalid_input("beta must be a positive finite number");
  }
  double value() const { return value_; }

 private:
  double value_;
};

/// log pi_theta and log pi_ref of the accepted and rejected completions.
struct LogProbPair {
  double theta_accepted = 0.0;
  double theta_rejected = 0.0;
  double ref_accepted = 0.0;
  double ref_rejected = 0.0;
};

/// log(1 + e^x) without overflow or cancellation.
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double implicit_reward(double theta_logp, double ref_logp, Beta beta) {
  return beta.value() * (theta_logp - ref_logp);
}

/// z = r(accepted) - r(rejected).
inline double margin(const LogProbPair& p, Beta beta) {
  return implicit_reward(p.theta_accepted, p.ref_accepted, beta) -
         implicit_reward(p.theta_rejected, p.ref_rejected, beta);
}

/// -log sigmoid(z), evaluated as softplus(-z).
inline double dpo_loss(const LogProbPair& p, Beta beta) {
  return softplus(-margin(p, beta));
}

/// sigma(r(rejected) - r(accepted)): large when the implicit reward ranks
/// the pair the wrong way round.
inline double gradient_weight(const LogProbPair& p, Beta beta) {
  return sigmoid(-margin(p, beta));
}

/// Log-linear policy over a finite completion set per context:
///   pi(c | x) = exp(w . phi(x, c)) / sum_c' exp(w . phi(x, c'))
class ToyPolicy {
 public:
  using Vector = std::vector<double>;
  using Context = std::vector<Vector>;  // one feature vector per completion

  ToyPolicy(Vector weights, std::vector<Context> contexts)
      : weights_(std::move(weights)), contexts_(std::move(contexts)) {
    for (const auto& ctx : contexts_) {
      if (ctx.empty()) throw invalid_input("toy policy context has no completions");
      for (const auto& phi : ctx) {
        if (phi.size() != weights_.size()) throw invalid_input("feature dimension does not match weights");
      }
    }
  }

  std::size_t dim() const { return weights_.size(); }
  std::size_t num_contexts() const { return contexts_.size(); }
  std::size_t num_completions(std::size_t x) const { return context(x).size(); }

  const Vector& weights() const { return weights_; }
  Vector& weights() { return weights_; }

  const Context& context(std::size_t x) const {
    if (x >= contexts_.size()) throw invalid_input("context index out of range");
    return contexts_[x];
  }

  Vector log_probs(std::size_t x) const {
    const auto& ctx = context(x);
    Vector logits(ctx.size());
    for (std::size_t c = 0; c < ctx.size(); ++c) {
      double s = 0.0;
      for (std::size_t d = 0; d < dim(); ++d) s += weights_[d] * ctx[c][d];
      logits[c] = s;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    const double lse = mx + std::log(z);
    for (double& l : logits) l -= lse;
    return logits;
  }

  double log_prob(std::size_t x, std::size_t c) const {
    check_completion(x, c);
    return log_probs(x)[c];
  }

  /// d/dw log pi(c | x) = phi(x, c) - E_{c' ~ pi}[phi(x, c')].
  Vector score(std::size_t x, std::size_t c) const {
    check_completion(x, c);
    const auto& ctx = context(x);
    const auto lp = log_probs(x);
    Vector g = ctx[c];
    for (std::size_t k = 0; k < ctx.size(); ++k) {
      const double p = std::exp(lp[k]);
      for (std::size_t d = 0; d < dim(); ++d) g[d] -= p * ctx[k][d];
    }
    return g;
  }

  void check_completion(std::size_t x, std::size_t c) const {
    if (c >= context(x).size()) throw invalid_input("completion is not in the policy's support");
  }

 private:
  Vector weights_;
  std::vector<Context> contexts_;
};

/// (x, y_accepted, y_rejected) as indices into a ToyPolicy.
struct Sample {
  std::size_t context = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

inline LogProbPair log_prob_pair(const ToyPolicy& policy, const ToyPolicy& ref, const Sample& s) {
  return {policy.log_prob(s.context, s.accepted), policy.log_prob(s.context, s.rejected),
          ref.log_prob(s.context, s.accepted), ref.log_prob(s.context, s.rejected)};
}

inline double sample_loss(const ToyPolicy& policy, const ToyPolicy& ref, const Sample& s, Beta beta) {
  return dpo_loss(log_prob_pair(policy, ref, s), beta);
}

/// Gradient of the per-sample DPO loss with respect to the policy weights:
///   -beta * sigma(r_rej - r_acc) * (score(accepted) - score(rejected))
inline std::vector<double> dpo_gradient(const ToyPolicy& policy, const ToyPolicy& ref, const Sample& s,
                                        Beta beta) {
  if (s.accepted == s.rejected) throw invalid_input("accepted and rejected completions must differ");
  policy.check_completion(s.context, s.accepted);
  policy.check_completion(s.context, s.rejected);
  ref.check_completion(s.context, s.accepted);
  ref.check_completion(s.context, s.rejected);

  const double w = gradient_weight(log_prob_pair(policy, ref, s), beta);
  const auto sa = policy.score(s.context, s.accepted);
  const auto sr = policy.score(s.context, s.rejected);
  std::vector<double> g(policy.dim());
  for (std::size_t d = 0; d < g.size(); ++d) g[d] = -beta.value() * w * (sa[d] - sr[d]);
  return g;
}

/// Central differences of sample_loss over the policy weights.
inline std::vector<double> numeric_gradient(const ToyPolicy& policy, const ToyPolicy& ref, const Sample& s,
                                            Beta beta, double step) {
  ToyPolicy probe = policy;
  std::vector<double> g(policy.dim());
  for (std::size_t d = 0; d < g.size(); ++d) {
    const double w0 = probe.weights()[d];
    probe.weights()[d] = w0 + step;
    const double up = sample_loss(probe, ref, s, beta);
    probe.weights()[d] = w0 - step;
    const double down = sample_loss(probe, ref, s, beta);
    probe.weights()[d] = w0;
    g[d] = (up - down) / (2.0 * step);
  }
  return g;
}

/// Coordinate errors are scaled by the larger of the two gradients' max-norms,
/// so near-zero components do not dominate. Two all-zero gradients give 0.
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double scale = 0.0;
  double worst = 0.0;
  for (std::size_t d = 0; d < analytic.size(); ++d) {
    scale = std::max({scale, std::abs(analytic[d]), std::abs(numeric[d])});
    worst = std::max(worst, std::abs(analytic[d] - numeric[d]));
  }
  if (scale == 0.0) return 0.0;
  return worst / scale;
}

inline double finite_diff_check(const ToyPolicy& policy, const ToyPolicy& ref, const std::vector<Sample>& samples,
                                Beta beta, double step = kDefaultFdStep) {
  if (!(step > 1e-8 && step < 1e-2)) throw invalid_input("finite-difference step must be in (1e-8, 1e-2)");
  double worst = 0.0;
  for (const auto& s : samples) {
    worst = std::max(worst, relative_error(dpo_gradient(policy, ref, s, beta),
                                           numeric_gradient(policy, ref, s, beta, step)));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Random toy instances

struct ToyInstance {
  ToyPolicy policy;
  ToyPolicy ref;
  std::vector<Sample> samples;
};

struct ToyShape {
  std::size_t dim = 5;
  std::size_t completions = 4;
  std::size_t contexts = 2;
  std::size_t samples = 3;
};

namespace detail {

/// Standard normal via Box-Muller on raw engine output.
inline double normal(std::mt19937_64& rng) {
  constexpr double kScale = 1.0 / 9007199254740992.0;  // 2^-53
  double u1;
  do {
    u1 = static_cast<double>(rng() >> 11) * kScale;
  } while (u1 <= 0.0);
  const double u2 = static_cast<double>(rng() >> 11) * kScale;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace detail

/// Policy and reference share the features but not the weights.
inline ToyInstance random_instance(std::mt19937_64& rng, const ToyShape& shape) {
  if (shape.completions < 2) throw invalid_input("toy instance needs at least two completions");
  std::vector<ToyPolicy::Context> contexts(shape.contexts);
  for (auto& ctx : contexts) {
    ctx.assign(shape.completions, std::vector<double>(shape.dim));
    for (auto& phi : ctx) {
      for (double& v : phi) v = detail::normal(rng);
    }
  }
  std::vector<double> w(shape.dim), w_ref(shape.dim);
  for (double& v : w) v = detail::normal(rng);
  for (double& v : w_ref) v = detail::normal(rng);

  std::vector<Sample> samples;
  for (std::size_t i = 0; i < shape.samples; ++i) {
    Sample s;
    s.context = static_cast<std::size_t>(rng() % shape.contexts);
    s.accepted = static_cast<std::size_t>(rng() % shape.completions);
    s.rejected = (s.accepted + 1 + static_cast<std::size_t>(rng() % (shape.completions - 1))) % shape.completions;
    samples.push_back(s);
  }
  return {ToyPolicy(std::move(w), contexts), ToyPolicy(std::move(w_ref), contexts), std::move(samples)};
}

struct GradCheckSummary {
  std::size_t instances = 0;
  double max_relative_error = 0.0;
};

/// Runs finite_diff_check on `instances` random toy problems with feature
/// dimension cycling through 1..max_dim and 3..max_completions completions.
inline GradCheckSummary run_gradcheck(std::size_t instances, std::uint64_t seed, Beta beta,
                                      double step = kDefaultFdStep, std::size_t max_dim = 8,
                                      std::size_t max_completions = 6) {
  if (max_dim == 0 || max_completions < 3) throw invalid_input("gradcheck needs dim >= 1 and >= 3 completions");
  std::mt19937_64 rng(seed);
  GradCheckSummary out;
  for (std::size_t i = 0; i < instances; ++i) {
    ToyShape shape;
    shape.dim = 1 + i % max_dim;
    shape.completions = 3 + i % (max_completions - 2);
    shape.contexts = 1 + i % 3;
    auto inst = random_instance(rng, shape);
    out.max_relative_error =
        std::max(out.max_relative_error, finite_diff_check(inst.policy, inst.ref, inst.samples, beta, step));
    ++out.instances;
  }
  return out;
}

}  // namespace topicllm::dpo
