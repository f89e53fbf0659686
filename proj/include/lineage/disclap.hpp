#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "lineage/core.hpp"
#include "lineage/estimators.hpp"

namespace lineage::disclap {

inline constexpr double kPMin = 1e-6;
inline constexpr double kPMax = 1.0 - 1e-6;

/// Double-geometric mass ((1-p)/(1+p)) p^|d|.
inline double pmf(long d, double p) {
  if (!(p >= 0.0 && p < 1.0)) throw InputError("discrete Laplace dispersion must lie in [0,1)");
  const long ad = d < 0 ? -d : d;
  if (p == 0.0) return ad == 0 ? 1.0 : 0.0;
  return (1.0 - p) / (1.0 + p) * std::pow(p, static_cast<double>(ad));
}

inline double log_pmf(long d, double p) {
  const long ad = d < 0 ? -d : d;
  return std::log1p(-p) - std::log1p(p) + static_cast<double>(ad) * std::log(p);
}

/// Maximum-likelihood dispersion for mean absolute displacement m:
/// the root of E|D| = 2p/(1-p^2), clamped to [kPMin, kPMax].
inline double p_mle(double mean_abs_dev) {
  if (!(mean_abs_dev >= 0.0)) throw InputError("mean absolute deviation must be non-negative");
  if (mean_abs_dev == 0.0) return kPMin;
  const double m = mean_abs_dev;
  // (sqrt(1+m^2)-1)/m written without cancellation
  const double p = m / (std::sqrt(1.0 + m * m) + 1.0);
  return std::clamp(p, kPMin, kPMax);
}

/// Draws D = G1 - G2 with G1, G2 iid geometric(1-p); D is discrete Laplace(p).
template <class Rng>
long sample(double p, Rng& rng) {
  if (p <= 0.0) return 0;
  std::geometric_distribution<long> geo(1.0 - p);
  return geo(rng) - geo(rng);
}

struct Cluster {
  double weight = 0.0;
  std::vector<Allele> center;
  std::vector<double> dispersion;
};

struct FitDiagnostics {
  double log_likelihood = 0.0;
  std::size_t iterations = 0;
  double bic = 0.0;
  std::size_t n = 0;
  bool converged = false;
};

struct Model {
  std::string panel_name;
  std::size_t num_loci = 0;
  std::vector<Cluster> clusters;
  FitDiagnostics diagnostics;

  std::size_t num_parameters() const {
    const std::size_t c = clusters.size();
    return (c - 1) + 2 * c * num_loci;
  }
};

struct FitOptions {
  std::uint64_t seed = 1;
  std::size_t max_iter = 500;
  double rel_tol = 1e-8;
};

struct FitResult {
  Model model;
  std::vector<double> log_likelihood_trace;  // after initialization, then after each EM step
};

namespace detail {

// Row-major n x L integer matrix of fully observed profiles.
struct Data {
  std::size_t n = 0, L = 0;
  std::vector<Allele> x;
  std::vector<std::vector<std::uint32_t>> by_allele;  // per locus, row indices sorted by allele
  Allele at(std::size_t i, std::size_t l) const { return x[i * L + l]; }
};

inline Data to_data(const HaplotypeDatabase& db) {
  if (db.empty()) throw InputError("database is empty");
  Data d{db.size(), db.num_loci(), {}, {}};
  d.x.reserve(d.n * d.L);
  for (std::size_t r = 0; r < db.size(); ++r) {
    if (!db[r].complete())
      throw InputError("discrete Laplace fitting requires fully observed profiles; row " +
                       std::to_string(r + 1) + " is partial");
    d.x.insert(d.x.end(), db[r].alleles().begin(), db[r].alleles().end());
  }
  d.by_allele.resize(d.L);
  for (std::size_t l = 0; l < d.L; ++l) {
    auto& o = d.by_allele[l];
    o.resize(d.n);
    std::iota(o.begin(), o.end(), 0u);
    std::stable_sort(o.begin(), o.end(), [&](auto a, auto b) { return d.at(a, l) < d.at(b, l); });
  }
  return d;
}

inline std::size_t count_distinct(const Data& d) {
  std::set<std::vector<Allele>> s;
  for (std::size_t i = 0; i < d.n; ++i)
    s.emplace(d.x.begin() + static_cast<long>(i * d.L), d.x.begin() + static_cast<long>((i + 1) * d.L));
  return s.size();
}

inline double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double a : v) m = std::max(m, a);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double a : v) s += std::exp(a - m);
  return m + std::log(s);
}

// log tau_c, and per (c,l) the pmf's log normaliser and log p, tabulated once per pass.
struct LogTables {
  std::size_t L = 0;
  std::vector<double> log_w, log_norm, log_p;

  LogTables(const std::vector<Cluster>& cs, std::size_t loci) : L(loci) {
    for (const auto& cl : cs) {
      log_w.push_back(cl.weight > 0.0 ? std::log(cl.weight) : -std::numeric_limits<double>::infinity());
      for (std::size_t l = 0; l < L; ++l) {
        const double p = cl.dispersion[l];
        log_norm.push_back(std::log1p(-p) - std::log1p(p));
        log_p.push_back(std::log(p));
      }
    }
  }
};

// Per-row log of tau_c * prod_l pmf for every cluster.
inline void component_logs(const Data& d, const std::vector<Cluster>& cs, const LogTables& t, std::size_t i,
                           std::vector<double>& out) {
  out.resize(cs.size());
  for (std::size_t c = 0; c < cs.size(); ++c) {
    if (!std::isfinite(t.log_w[c])) {
      out[c] = t.log_w[c];
      continue;
    }
    double s = t.log_w[c];
    const std::size_t base = c * d.L;
    for (std::size_t l = 0; l < d.L; ++l) {
      const long dev = std::abs(static_cast<long>(d.at(i, l)) - cs[c].center[l]);
      s += t.log_norm[base + l] + static_cast<double>(dev) * t.log_p[base + l];
    }
    out[c] = s;
  }
}

inline double log_likelihood(const Data& d, const std::vector<Cluster>& cs) {
  const LogTables t(cs, d.L);
  std::vector<double> buf;
  double ll = 0.0;
  for (std::size_t i = 0; i < d.n; ++i) {
    component_logs(d, cs, t, i, buf);
    ll += log_sum_exp(buf);
  }
  return ll;
}

// Smallest allele whose cumulative responsibility reaches half of wsum (ties go low).
inline Allele weighted_median(const Data& d, const std::vector<double>& r, std::size_t C, std::size_t c,
                              std::size_t l, double wsum) {
  double acc = 0.0;
  for (auto i : d.by_allele[l]) {
    acc += r[i * C + c];
    if (acc >= 0.5 * wsum) return d.at(i, l);
  }
  return d.at(d.by_allele[l].back(), l);
}

// Responsibilities r[i*C + c] -> new weights, centers, dispersions.
inline void m_step(const Data& d, const std::vector<double>& r, std::vector<Cluster>& cs) {
  const std::size_t C = cs.size();
  for (std::size_t c = 0; c < C; ++c) {
    double wsum = 0.0;
    for (std::size_t i = 0; i < d.n; ++i) wsum += r[i * C + c];
    cs[c].weight = wsum / static_cast<double>(d.n);
    if (wsum <= 0.0) continue;  // empty cluster keeps its location and stays at weight 0
    for (std::size_t l = 0; l < d.L; ++l) {
      const Allele y = weighted_median(d, r, C, c, l, wsum);
      double dev = 0.0;
      for (std::size_t i = 0; i < d.n; ++i) dev += r[i * C + c] * std::abs(static_cast<double>(d.at(i, l)) - y);
      cs[c].center[l] = y;
      cs[c].dispersion[l] = p_mle(dev / wsum);
    }
  }
}

inline void e_step(const Data& d, const std::vector<Cluster>& cs, std::vector<double>& r) {
  const std::size_t C = cs.size();
  r.assign(d.n * C, 0.0);
  const LogTables t(cs, d.L);
  std::vector<double> buf;
  for (std::size_t i = 0; i < d.n; ++i) {
    component_logs(d, cs, t, i, buf);
    const double lse = log_sum_exp(buf);
    for (std::size_t c = 0; c < C; ++c) r[i * C + c] = std::exp(buf[c] - lse);
  }
}

inline long l1(const Data& d, std::size_t i, std::size_t j) {
  long s = 0;
  for (std::size_t l = 0; l < d.L; ++l) s += std::abs(static_cast<long>(d.at(i, l)) - d.at(j, l));
  return s;
}

// k-means++ style medoid seeding on L1 distance over distinct profiles, then
// hard responsibilities from the nearest medoid.
inline std::vector<double> initial_responsibilities(const Data& d, std::size_t C, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> distinct;
  {
    std::set<std::vector<Allele>> seen;
    for (std::size_t i = 0; i < d.n; ++i)
      if (seen.emplace(d.x.begin() + static_cast<long>(i * d.L),
                       d.x.begin() + static_cast<long>((i + 1) * d.L))
              .second)
        distinct.push_back(i);
  }
  std::vector<std::size_t> medoids;
  medoids.push_back(distinct[std::uniform_int_distribution<std::size_t>(0, distinct.size() - 1)(rng)]);
  std::vector<double> nearest(distinct.size(), std::numeric_limits<double>::infinity());
  while (medoids.size() < C) {
    double total = 0.0;
    for (std::size_t k = 0; k < distinct.size(); ++k) {
      nearest[k] = std::min(nearest[k], static_cast<double>(l1(d, distinct[k], medoids.back())));
      total += nearest[k];
    }
    if (total <= 0.0) break;
    std::size_t pick = 0;
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    for (std::size_t k = 0; k < distinct.size(); ++k) {
      if (nearest[k] <= 0.0) continue;
      pick = k;
      u -= nearest[k];
      if (u <= 0.0) break;
    }
    medoids.push_back(distinct[pick]);
  }
  std::vector<double> r(d.n * C, 0.0);
  for (std::size_t i = 0; i < d.n; ++i) {
    std::size_t best = 0;
    long bd = std::numeric_limits<long>::max();
    for (std::size_t c = 0; c < medoids.size(); ++c) {
      const long dist = l1(d, i, medoids[c]);
      if (dist < bd) {
        bd = dist;
        best = c;
      }
    }
    r[i * C + best] = 1.0;
  }
  return r;
}

inline double bic(double ll, std::size_t params, std::size_t n) {
  return -2.0 * ll + static_cast<double>(params) * std::log(static_cast<double>(n));
}

}  // namespace detail

/// Fits a num_clusters-component discrete Laplace mixture by EM.
///
/// M-step: weights are mean responsibilities, centers the responsibility-
/// weighted median allele, dispersions the MLE of the weighted mean absolute
/// displacement. Each step maximizes the expected complete-data likelihood
/// coordinate-wise, so the log-likelihood never decreases.
inline FitResult fit_em(const HaplotypeDatabase& db, const Panel& panel, std::size_t num_clusters,
                        const FitOptions& opt = {}) {
  if (db.num_loci() != panel.size()) throw InputError("database does not conform to panel");
  const auto data = detail::to_data(db);
  if (num_clusters < 1) throw InputError("number of clusters must be at least 1");
  const std::size_t distinct = detail::count_distinct(data);
  if (num_clusters > distinct)
    throw InputError("number of clusters (" + std::to_string(num_clusters) +
                     ") exceeds the number of distinct profiles (" + std::to_string(distinct) + ")");

  std::vector<Cluster> cs(num_clusters,
                          Cluster{0.0, std::vector<Allele>(data.L, 0), std::vector<double>(data.L, kPMin)});
  auto r = detail::initial_responsibilities(data, num_clusters, opt.seed);
  detail::m_step(data, r, cs);

  FitResult out;
  double ll = detail::log_likelihood(data, cs);
  out.log_likelihood_trace.push_back(ll);
  std::size_t it = 0;
  bool converged = false;
  while (it < opt.max_iter) {
    detail::e_step(data, cs, r);
    detail::m_step(data, r, cs);
    const double next = detail::log_likelihood(data, cs);
    ++it;
    out.log_likelihood_trace.push_back(next);
    const double gain = next - ll;
    ll = next;
    if (std::abs(gain) <= opt.rel_tol * std::abs(ll)) {
      converged = true;
      break;
    }
  }
  out.model.panel_name = panel.name();
  out.model.num_loci = data.L;
  out.model.clusters = std::move(cs);
  out.model.diagnostics = {ll, it, detail::bic(ll, out.model.num_parameters(), data.n), data.n, converged};
  return out;
}

/// pi_q = sum_c tau_c prod_l pmf(q_l - y_cl, p_cl). Requires a complete q.
inline MatchProbabilityEstimate haplotype_probability(const Model& model, const Haplotype& q) {
  if (q.size() != model.num_loci)
    throw InputError("query has " + std::to_string(q.size()) + " loci, model has " +
                     std::to_string(model.num_loci));
  if (!q.complete())
    throw InputError(
        "discrete Laplace evaluation requires a fully observed profile; evaluate partial profiles "
        "by simulation on the observed loci");
  double total = 0.0;
  for (const auto& c : model.clusters) {
    double prod = c.weight;
    for (std::size_t l = 0; l < model.num_loci && prod > 0.0; ++l)
      prod *= pmf(static_cast<long>(q[l]) - c.center[l], c.dispersion[l]);
    total += prod;
  }
  return {std::min(total, 1.0), "discrete-laplace", {}};
}

struct Selection {
  Model model;
  std::vector<double> bic_by_clusters;  // index c-1
};

/// Fits c = 1..max_clusters (restarts per c, seeded seed + restart) and keeps
/// the lowest-BIC model. Restarts run on separate threads.
inline Selection select_clusters_bic(const HaplotypeDatabase& db, const Panel& panel,
                                     std::size_t max_clusters, std::uint64_t seed,
                                     std::size_t restarts = 5, const FitOptions& base = {}) {
  if (max_clusters < 1) throw InputError("max_clusters must be at least 1");
  if (restarts < 1) throw InputError("restarts must be at least 1");
  const std::size_t distinct = detail::count_distinct(detail::to_data(db));
  const std::size_t top = std::min(max_clusters, distinct);
  Selection sel;
  bool have = false;
  for (std::size_t c = 1; c <= top; ++c) {
    std::vector<Model> fits(restarts);
    std::vector<std::exception_ptr> errors(restarts);
    {
      std::vector<std::jthread> workers;
      for (std::size_t k = 0; k < restarts; ++k) {
        workers.emplace_back([&, k] {
          try {
            FitOptions o = base;
            o.seed = seed + k;
            fits[k] = fit_em(db, panel, c, o).model;
          } catch (...) {
            errors[k] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    const auto best = std::max_element(fits.begin(), fits.end(), [](const Model& a, const Model& b) {
      return a.diagnostics.log_likelihood < b.diagnostics.log_likelihood;
    });
    sel.bic_by_clusters.push_back(best->diagnostics.bic);
    if (!have || best->diagnostics.bic < sel.model.diagnostics.bic) {
      sel.model = *best;
      have = true;
    }
  }
  return sel;
}

}  // namespace lineage::disclap
