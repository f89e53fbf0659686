#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "lineage/core.hpp"

namespace lineage {

/// Receives non-fatal warnings (renormalised inputs and the like). Defaults to stderr.
inline std::function<void(const std::string&)>& warning_sink() {
  static std::function<void(const std::string&)> sink = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(const std::string& msg) {
  if (warning_sink()) warning_sink()(msg);
}

/// Distribution of the number of meioses G separating Q and an alternative source.
class GDistribution {
 public:
  struct Entry {
    unsigned g;
    double prob;
  };

  GDistribution() = default;

  /// Accepts unnormalised or truncated weights and renormalises them,
  /// emitting a warning when the input did not already sum to one.
  explicit GDistribution(std::vector<Entry> entries) {
    std::map<unsigned, double> merged;
    for (const auto& e : entries) {
      if (e.g < 1) throw InputError("meiosis count g must be >= 1");
      if (!(e.prob >= 0.0) || !std::isfinite(e.prob))
        throw InputError("P(G=" + std::to_string(e.g) + ") must be a non-negative finite number");
      if (!merged.emplace(e.g, e.prob).second)
        throw InputError("meiosis count g=" + std::to_string(e.g) + " listed twice");
    }
    double total = 0.0;
    for (const auto& [g, p] : merged) total += p;
    if (!(total > 0.0)) throw InputError("G distribution has no probability mass");
    if (std::abs(total - 1.0) > 1e-9) {
      renormalised_ = true;
      warn("G distribution sums to " + std::to_string(total) + "; renormalised to 1");
    }
    for (const auto& [g, p] : merged) support_.push_back({g, p / total});
  }

  static GDistribution point_mass(unsigned g) { return GDistribution({{g, 1.0}}); }

  const std::vector<Entry>& support() const noexcept { return support_; }
  bool renormalised() const noexcept { return renormalised_; }

  double total() const {
    double t = 0.0;
    for (const auto& e : support_) t += e.prob;
    return t;
  }

  /// Sets P(G=g)=0 for the excluded degrees (e.g. relatives already ruled
  /// out) and renormalises the remaining mass.
  GDistribution excluding(const std::set<unsigned>& excluded) const {
    std::vector<Entry> kept;
    for (const auto& e : support_)
      if (!excluded.contains(e.g)) kept.push_back(e);
    double mass = 0.0;
    for (const auto& e : kept) mass += e.prob;
    if (!(mass > 0.0)) throw InputError("excluding these meiosis counts removes all probability mass");
    return GDistribution(std::move(kept));
  }

 private:
  std::vector<Entry> support_;
  bool renormalised_ = false;
};

struct EstimatorInputs {
  std::size_t k_q = 0;
  std::size_t n = 0;
  double kappa = 0.0;
  std::optional<double> theta;
  std::optional<double> confidence;
};

struct MatchProbabilityEstimate {
  double value = 0.0;
  std::string method;
  EstimatorInputs inputs;
};

struct LRValue {
  double lr = 1.0;
  std::string h_q = "the evidence profile came from Q";
  std::string h_x = "the evidence profile came from X";
};

namespace detail {

inline LRValue lr_from_denominator(double denom) {
  if (!(denom > 0.0 && denom <= 1.0 + 1e-12))
    throw InputError("likelihood-ratio denominator must lie in (0,1]");
  return LRValue{1.0 / std::min(denom, 1.0)};
}

inline void check_mu(double mu) {
  if (!(mu >= 0.0 && mu < 1.0)) throw InputError("profile mutation rate must lie in [0,1)");
}

}  // namespace detail

/// LR when Q and X are separated by exactly g meioses: 1 / (1-mu)^g.
inline LRValue lr_known_g(double mu, unsigned g) {
  detail::check_mu(mu);
  if (g < 1) throw InputError("meiosis count g must be >= 1");
  return detail::lr_from_denominator(std::pow(1.0 - mu, static_cast<double>(g)));
}

/// LR averaged over an unknown relatedness: 1 / sum_g (1-mu)^g P(G=g).
inline LRValue lr_g_distribution(double mu, const GDistribution& gdist) {
  detail::check_mu(mu);
  if (gdist.support().empty()) throw InputError("G distribution is empty");
  double denom = 0.0;
  for (const auto& e : gdist.support()) denom += std::pow(1.0 - mu, static_cast<double>(e.g)) * e.prob;
  return detail::lr_from_denominator(denom);
}

/// Database frequency after adding `augment` copies of q: (k_q+a)/(n+a).
inline MatchProbabilityEstimate freq_estimate(const DatabaseSummary& s, int augment) {
  if (augment < 0 || augment > 2) throw InputError("augment must be 0, 1 or 2");
  if (s.n < 1) throw InputError("database size n must be at least 1");
  static const char* names[] = {"frequency", "augmented-1", "augmented-2"};
  const double v = static_cast<double>(s.k_q + static_cast<std::size_t>(augment)) /
                   static_cast<double>(s.n + static_cast<std::size_t>(augment));
  return {v, names[augment], {s.k_q, s.n, s.kappa, {}, {}}};
}

/// Singleton-fraction estimate (1-kappa)/n; defined only for unobserved profiles.
inline MatchProbabilityEstimate kappa_estimate(const DatabaseSummary& s) {
  if (s.n < 1) throw InputError("database size n must be at least 1");
  if (s.k_q > 0)
    throw NotApplicableError(
        "kappa estimator is defined only for k_q = 0 (here k_q = " + std::to_string(s.k_q) +
        "); use the augmented frequency or the upper confidence limit instead");
  if (!(s.kappa >= 0.0 && s.kappa <= 1.0)) throw InputError("kappa must lie in [0,1]");
  return {(1.0 - s.kappa) / static_cast<double>(s.n), "kappa", {s.k_q, s.n, s.kappa, {}, {}}};
}

/// log P(X <= k) for X ~ Binomial(n, p), summed in log space.
inline double log_binomial_cdf(std::size_t k, std::size_t n, double p) {
  if (k >= n) return 0.0;
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return -std::numeric_limits<double>::infinity();
  const double lp = std::log(p), lq = std::log1p(-p);
  const double ln_fact_n = std::lgamma(static_cast<double>(n) + 1.0);
  double maxterm = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(k + 1);
  for (std::size_t x = 0; x <= k; ++x) {
    const double dx = static_cast<double>(x), dn = static_cast<double>(n);
    terms[x] = ln_fact_n - std::lgamma(dx + 1.0) - std::lgamma(dn - dx + 1.0) + dx * lp + (dn - dx) * lq;
    maxterm = std::max(maxterm, terms[x]);
  }
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - maxterm);
  return maxterm + std::log(acc);
}

/// Clopper-Pearson upper confidence limit: the largest pi with
/// P(X <= k_q | n, pi) >= 1 - confidence, located by bisection.
inline MatchProbabilityEstimate ucl_estimate(const DatabaseSummary& s, double confidence = 0.95,
                                             double tolerance = 1e-10) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw InputError("confidence must lie in (0,1)");
  if (s.n < 1) throw InputError("database size n must be at least 1");
  if (!(tolerance > 0.0)) throw InputError("tolerance must be positive");
  EstimatorInputs in{s.k_q, s.n, s.kappa, {}, confidence};
  if (s.k_q >= s.n) return {1.0, "ucl", in};
  const double log_alpha = std::log1p(-confidence);
  double lo = 0.0, hi = 1.0;
  while (hi - lo > tolerance) {
    const double mid = 0.5 * (lo + hi);
    if (log_binomial_cdf(s.k_q, s.n, mid) >= log_alpha)
      lo = mid;
    else
      hi = mid;
  }
  return {0.5 * (lo + hi), "ucl", in};
}

/// Coancestry-adjusted LR 1 / (theta + (1-theta) pi_q).
inline LRValue theta_adjust(double pi_q, double theta) {
  if (!(theta >= 0.0 && theta < 1.0)) throw InputError("theta must lie in [0,1)");
  if (!(pi_q >= 0.0 && pi_q <= 1.0)) throw InputError("match probability must lie in [0,1]");
  if (theta == 0.0 && pi_q == 0.0)
    throw InputError("theta and the match probability are both zero; the LR is unbounded");
  return detail::lr_from_denominator(theta + (1.0 - theta) * pi_q);
}

/// N / K_q. Assumes the K_q matchers are well mixed in a population of N
/// alternative sources, which lineage relatedness usually violates.
inline LRValue lr_from_kq(std::size_t population, std::size_t k_q) {
  if (k_q == 0) throw InputError("K_q must be at least 1");
  if (k_q > population) throw InputError("K_q exceeds the population size");
  return LRValue{static_cast<double>(population) / static_cast<double>(k_q)};
}

inline constexpr const char* kWellMixedCaveat =
    "N/K_q assumes the matching individuals are well mixed in the population of alternative "
    "sources; matchers are relatives of Q and usually are not.";

/// Expected number of individuals matching at both the lineage and autosomal profiles.
inline double combine_autosomal(double kq_bound, double autosomal_match_prob) {
  if (!(kq_bound >= 0.0)) throw InputError("K_q bound must be non-negative");
  if (!(autosomal_match_prob >= 0.0 && autosomal_match_prob <= 1.0))
    throw InputError("autosomal match probability must lie in [0,1]");
  return kq_bound * autosomal_match_prob;
}

}  // namespace lineage
