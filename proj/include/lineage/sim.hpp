#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "lineage/core.hpp"
#include "lineage/estimators.hpp"

namespace lineage::sim {

using Rng = std::mt19937_64;

/// Founder f carries allele kFounderBase + kFounderSpacing * f at every locus,
/// so haplotypes from different founder lineages stay far apart.
inline constexpr Allele kFounderBase = 10;
inline constexpr Allele kFounderSpacing = 10;

struct PopulationSchedule {
  std::size_t initial_size = 1;
  double growth_rate = 0.0;  // per generation, N_t = round(N_0 exp(r t))

  std::size_t size_at(std::size_t generation) const {
    if (growth_rate == 0.0) return initial_size;
    const double v = std::round(static_cast<double>(initial_size) *
                                std::exp(growth_rate * static_cast<double>(generation)));
    return static_cast<std::size_t>(std::max(1.0, v));
  }
};

struct SimConfig {
  std::size_t generations = 1;
  PopulationSchedule population;
  double offspring_dispersion = 1.0;  // 1 = every parent equally likely
  Panel panel;
  std::size_t live_generations = 1;
  std::size_t replicates = 1;
  std::uint64_t seed = 1;
  std::size_t max_individuals = 100'000'000;
  LocusMask locus_subset;  // empty = whole panel
  DuplicatePolicy duplicate_policy = DuplicatePolicy::kMatchBoth;
  std::size_t threads = 0;  // 0 = hardware concurrency

  std::size_t total_individuals() const {
    std::size_t total = 0;
    for (std::size_t t = 0; t < generations; ++t) total += population.size_at(t);
    return total;
  }

  void validate() const {
    if (generations < 1) throw InputError("generations must be at least 1");
    if (live_generations < 1) throw InputError("live_generations must be at least 1");
    if (live_generations > generations) throw InputError("live_generations exceeds generations");
    if (population.initial_size < 1) throw InputError("population.initial_size must be at least 1");
    if (!std::isfinite(population.growth_rate)) throw InputError("population.growth_rate must be finite");
    if (!(offspring_dispersion >= 1.0) || !std::isfinite(offspring_dispersion))
      throw InputError("offspring_dispersion must be a finite number >= 1");
    if (replicates < 1) throw InputError("replicates must be at least 1");
    if (panel.size() == 0) throw InputError("panel is empty");
    if (!locus_subset.empty() && locus_subset.size() != panel.size())
      throw InputError("locus_subset does not conform to the panel");
    if (total_individuals() > max_individuals)
      throw SimulationError("simulation needs " + std::to_string(total_individuals()) +
                            " individuals, above the cap of " + std::to_string(max_individuals));
  }
};

/// One simulated replicate: parent links for every individual ever simulated,
/// haplotypes for the live generations only.
class Pedigree {
 public:
  static constexpr std::uint32_t kNoParent = 0xffffffffu;

  std::size_t num_generations() const noexcept { return offsets_.size() - 1; }
  std::size_t generation_begin(std::size_t t) const { return offsets_.at(t); }
  std::size_t generation_end(std::size_t t) const { return offsets_.at(t + 1); }
  std::size_t generation_size(std::size_t t) const { return generation_end(t) - generation_begin(t); }
  std::size_t size() const noexcept { return offsets_.back(); }

  std::size_t generation_of(std::size_t i) const {
    auto it = std::upper_bound(offsets_.begin(), offsets_.end(), i);
    return static_cast<std::size_t>(it - offsets_.begin()) - 1;
  }

  std::uint32_t parent(std::size_t i) const { return parents_[i]; }
  std::size_t founder_of(std::size_t i) const {
    while (parents_[i] != kNoParent) i = parents_[i];
    return i;
  }

  std::size_t live_begin() const noexcept { return offsets_[first_live_]; }
  std::size_t live_end() const noexcept { return offsets_.back(); }
  std::size_t live_size() const noexcept { return live_end() - live_begin(); }
  bool is_live(std::size_t i) const noexcept { return i >= live_begin() && i < live_end(); }

  std::size_t num_loci() const noexcept { return num_loci_; }

  std::span<const Allele> haplotype(std::size_t i) const {
    if (!is_live(i)) throw InputError("haplotypes are stored for live individuals only");
    return {live_haps_.data() + (i - live_begin()) * num_loci_, num_loci_};
  }

  Haplotype haplotype_copy(std::size_t i) const {
    auto h = haplotype(i);
    return Haplotype(std::vector<Allele>(h.begin(), h.end()));
  }

  std::uint64_t transfers() const noexcept { return transfers_; }
  std::uint64_t mismatched_transfers() const noexcept { return mismatched_transfers_; }

 private:
  template <class R>
  friend Pedigree simulate_population(const SimConfig&, R&);

  std::vector<std::size_t> offsets_{0};
  std::vector<std::uint32_t> parents_;
  std::vector<Allele> live_haps_;
  std::size_t first_live_ = 0;
  std::size_t num_loci_ = 0;
  std::uint64_t transfers_ = 0;
  std::uint64_t mismatched_transfers_ = 0;
};

namespace detail {

template <class R>
inline double unit(R& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Single-step mutation of one child copy. Draws "any mutation" once from the
// composed rate, then places mutations locus by locus conditioned on at least one.
struct Mutator {
  std::vector<double> mu;
  std::vector<double> cond;  // P(locus l mutates | >=1 mutation among l..L-1)
  double keep_all = 1.0;

  explicit Mutator(const Panel& panel) {
    const std::size_t L = panel.size();
    mu.resize(L);
    cond.resize(L);
    std::vector<double> keep_suffix(L + 1, 1.0);
    for (std::size_t l = L; l-- > 0;) {
      mu[l] = panel.locus(l).mu;
      keep_suffix[l] = keep_suffix[l + 1] * (1.0 - mu[l]);
    }
    keep_all = keep_suffix[0];
    for (std::size_t l = 0; l < L; ++l) {
      const double any = 1.0 - keep_suffix[l];
      cond[l] = any > 0.0 ? mu[l] / any : 0.0;
    }
  }

  // Returns true when at least one locus changed.
  template <class R>
  bool apply(std::span<Allele> h, R& rng) const {
    if (unit(rng) < keep_all) return false;
    bool placed = false;
    for (std::size_t l = 0; l < h.size(); ++l) {
      const double p = placed ? mu[l] : cond[l];
      if (p > 0.0 && unit(rng) < p) {
        h[l] += (rng() & 1u) ? 1 : -1;
        placed = true;
      }
    }
    return placed;
  }
};

}  // namespace detail

/// Forward-in-time Wright-Fisher style lineage simulation.
///
/// Each child picks one parent from the previous generation, uniformly when
/// offspring_dispersion == 1, otherwise with symmetric Dirichlet weights of
/// concentration 1/(dispersion-1) redrawn every generation. Children inherit
/// the parent haplotype with independent per-locus single-step mutations.
template <class R>
Pedigree simulate_population(const SimConfig& cfg, R& rng) {
  cfg.validate();
  const std::size_t L = cfg.panel.size();
  const std::size_t G = cfg.generations;
  Pedigree ped;
  ped.num_loci_ = L;
  ped.first_live_ = G - cfg.live_generations;
  ped.offsets_.reserve(G + 1);
  ped.parents_.reserve(cfg.total_individuals());

  const detail::Mutator mutator(cfg.panel);
  std::vector<Allele> prev, cur;
  const std::size_t n0 = cfg.population.size_at(0);
  if (static_cast<double>(n0) * kFounderSpacing > 2e9) throw SimulationError("too many founders");
  cur.resize(n0 * L);
  for (std::size_t f = 0; f < n0; ++f)
    std::fill_n(cur.begin() + static_cast<long>(f * L), L,
                kFounderBase + kFounderSpacing * static_cast<Allele>(f));
  ped.parents_.assign(n0, Pedigree::kNoParent);
  ped.offsets_.push_back(n0);
  if (ped.first_live_ == 0) ped.live_haps_.insert(ped.live_haps_.end(), cur.begin(), cur.end());

  const bool dirichlet = cfg.offspring_dispersion > 1.0;
  const double concentration = dirichlet ? 1.0 / (cfg.offspring_dispersion - 1.0) : 0.0;
  std::vector<double> cumulative;

  for (std::size_t t = 1; t < G; ++t) {
    std::swap(prev, cur);
    const std::size_t np = cfg.population.size_at(t - 1);
    const std::size_t nc = cfg.population.size_at(t);
    const std::size_t parent_base = ped.offsets_[t - 1];
    cur.resize(nc * L);

    std::uniform_int_distribution<std::size_t> uniform_parent(0, np - 1);
    if (dirichlet) {
      std::gamma_distribution<double> gamma(concentration, 1.0);
      cumulative.resize(np);
      double acc = 0.0;
      for (std::size_t k = 0; k < np; ++k) {
        acc += gamma(rng);
        cumulative[k] = acc;
      }
      if (!(acc > 0.0)) {  // every gamma draw underflowed; fall back to uniform weights
        for (std::size_t k = 0; k < np; ++k) cumulative[k] = static_cast<double>(k + 1);
      }
    }

    for (std::size_t c = 0; c < nc; ++c) {
      std::size_t p;
      if (dirichlet) {
        const double u = detail::unit(rng) * cumulative.back();
        p = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) -
                                     cumulative.begin());
        if (p >= np) p = np - 1;
      } else {
        p = uniform_parent(rng);
      }
      ped.parents_.push_back(static_cast<std::uint32_t>(parent_base + p));
      std::span<Allele> child(cur.data() + c * L, L);
      std::copy_n(prev.data() + p * L, L, child.begin());
      if (mutator.apply(child, rng)) ++ped.mismatched_transfers_;
    }
    ped.transfers_ += nc;
    ped.offsets_.push_back(ped.offsets_.back() + nc);
    if (t >= ped.first_live_) ped.live_haps_.insert(ped.live_haps_.end(), cur.begin(), cur.end());
  }
  return ped;
}

/// Number of meioses from a up to the most recent common lineage ancestor
/// with b and back down; nullopt when they descend from different founders.
inline std::optional<unsigned> meiosis_distance(const Pedigree& ped, std::size_t a, std::size_t b) {
  std::size_t ga = ped.generation_of(a), gb = ped.generation_of(b);
  const std::size_t ga0 = ga, gb0 = gb;
  while (ga > gb) {
    a = ped.parent(a);
    --ga;
  }
  while (gb > ga) {
    b = ped.parent(b);
    --gb;
  }
  while (a != b) {
    if (ga == 0) return std::nullopt;
    a = ped.parent(a);
    b = ped.parent(b);
    --ga;
  }
  return static_cast<unsigned>((ga0 - ga) + (gb0 - ga));
}

struct MatchCount {
  std::size_t k_q = 0;
  std::vector<std::size_t> matchers;
  std::vector<unsigned> distances;  // parallel to matchers that share a founder with Q
  std::size_t cross_founder = 0;    // matchers from a different founder lineage
};

/// Counts live individuals other than q_individual whose haplotype matches
/// Q's on the (optionally masked) panel, and records their meiosis distances.
inline MatchCount count_matches(const Pedigree& ped, std::size_t q_individual, const Panel& panel,
                                const LocusMask& mask = {},
                                DuplicatePolicy policy = DuplicatePolicy::kMatchBoth) {
  if (!ped.is_live(q_individual)) throw InputError("Q must be a live individual");
  if (panel.size() != ped.num_loci()) throw InputError("panel does not conform to the pedigree");
  const auto q = ped.haplotype(q_individual);
  MatchCount out;
  for (std::size_t x = ped.live_begin(); x < ped.live_end(); ++x) {
    if (x == q_individual) continue;
    const auto t = compare_alleles<true>(q, ped.haplotype(x), panel, mask, policy);
    if (!t.agree || t.compared == 0) continue;
    ++out.k_q;
    out.matchers.push_back(x);
    if (auto g = meiosis_distance(ped, q_individual, x))
      out.distances.push_back(*g);
    else
      ++out.cross_founder;
  }
  return out;
}

/// Pairs (Q, x) pooled by meiosis distance, with the number that match.
struct MatchDecay {
  struct Cell {
    std::uint64_t pairs = 0;
    std::uint64_t matches = 0;
  };
  std::map<unsigned, Cell> by_distance;

  void merge(const MatchDecay& o) {
    for (const auto& [g, c] : o.by_distance) {
      by_distance[g].pairs += c.pairs;
      by_distance[g].matches += c.matches;
    }
  }
};

inline void accumulate_match_decay(const Pedigree& ped, std::size_t q_individual, const Panel& panel,
                                   MatchDecay& decay, const LocusMask& mask = {},
                                   DuplicatePolicy policy = DuplicatePolicy::kMatchBoth) {
  const auto q = ped.haplotype(q_individual);
  for (std::size_t x = ped.live_begin(); x < ped.live_end(); ++x) {
    if (x == q_individual) continue;
    const auto g = meiosis_distance(ped, q_individual, x);
    if (!g) continue;
    auto& cell = decay.by_distance[*g];
    ++cell.pairs;
    const auto t = compare_alleles<true>(q, ped.haplotype(x), panel, mask, policy);
    if (t.agree && t.compared > 0) ++cell.matches;
  }
}

/// Like accumulate_match_decay, but adds only one randomly chosen partner of Q
/// per meiosis distance. Pairs pooled over independent replicates are then
/// independent trials, so binomial standard errors apply.
template <class R>
void sample_match_decay(const Pedigree& ped, std::size_t q_individual, const Panel& panel, MatchDecay& decay,
                        R& rng, const LocusMask& mask = {},
                        DuplicatePolicy policy = DuplicatePolicy::kMatchBoth) {
  const auto q = ped.haplotype(q_individual);
  std::map<unsigned, std::vector<std::size_t>> at;
  for (std::size_t x = ped.live_begin(); x < ped.live_end(); ++x) {
    if (x == q_individual) continue;
    if (const auto g = meiosis_distance(ped, q_individual, x)) at[*g].push_back(x);
  }
  for (const auto& [g, xs] : at) {
    const std::size_t x = xs[std::uniform_int_distribution<std::size_t>(0, xs.size() - 1)(rng)];
    auto& cell = decay.by_distance[g];
    ++cell.pairs;
    const auto t = compare_alleles<true>(q, ped.haplotype(x), panel, mask, policy);
    if (t.agree && t.compared > 0) ++cell.matches;
  }
}

struct SampledDatabase {
  HaplotypeDatabase database;
  std::vector<std::size_t> individuals;
  std::size_t k_q = 0;
  std::size_t n = 0;
};

/// Uniform sample of n live individuals (without replacement, excluding Q),
/// with k_q counted against Q's haplotype.
template <class R>
SampledDatabase sample_database(const Pedigree& ped, std::size_t q_individual, std::size_t n,
                                const Panel& panel, R& rng, const LocusMask& mask = {},
                                DuplicatePolicy policy = DuplicatePolicy::kMatchBoth) {
  if (n == 0) throw InputError("database size must be at least 1");
  if (!ped.is_live(q_individual)) throw InputError("Q must be a live individual");
  const std::size_t pool = ped.live_size() - 1;
  if (n > pool)
    throw InputError("database size " + std::to_string(n) + " exceeds the " + std::to_string(pool) +
                     " live individuals other than Q");
  // Floyd's algorithm over positions 0..pool-1, mapped around Q.
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  {
    std::vector<std::uint8_t> taken(pool, 0);
    for (std::size_t j = pool - n; j < pool; ++j) {
      const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
      const std::size_t pick = taken[t] ? j : t;
      taken[pick] = 1;
      chosen.push_back(pick);
    }
  }
  SampledDatabase out;
  out.n = n;
  const auto q = ped.haplotype(q_individual);
  std::vector<Haplotype> rows;
  rows.reserve(n);
  for (std::size_t pos : chosen) {
    std::size_t x = ped.live_begin() + pos;
    if (x >= q_individual) ++x;
    out.individuals.push_back(x);
    rows.push_back(ped.haplotype_copy(x));
    const auto t = compare_alleles<true>(q, ped.haplotype(x), panel, mask, policy);
    if (t.agree && t.compared > 0) ++out.k_q;
  }
  out.database = HaplotypeDatabase(panel, std::move(rows));
  return out;
}

/// Runs fn(index, rng) for every replicate on a small thread pool. Each
/// replicate's generator is seeded with seed + index; fn must only write to
/// its own result slot.
template <class Fn>
void for_each_replicate(std::size_t replicates, std::uint64_t seed, std::size_t threads, Fn&& fn) {
  std::size_t workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, replicates);
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  auto work = [&](std::size_t w) {
    try {
      for (std::size_t r = next++; r < replicates; r = next++) {
        Rng rng(seed + r);
        fn(r, rng);
      }
    } catch (...) {
      errors[w] = std::current_exception();
      next = replicates;
    }
  };
  if (workers <= 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <class R>
std::size_t pick_q(const Pedigree& ped, R& rng) {
  return std::uniform_int_distribution<std::size_t>(ped.live_begin(), ped.live_end() - 1)(rng);
}

struct Condition {
  std::size_t n = 0;
  std::size_t observed_k_q = 0;
  std::size_t min_accepted = 10;
};

struct ReplicateRecord {
  std::size_t k_q = 0;
  std::size_t live_size = 0;
  std::optional<std::size_t> database_k_q;
  bool accepted = true;
  std::vector<unsigned> distances;
  std::size_t cross_founder = 0;
};

struct Quantiles {
  std::size_t q50 = 0, q95 = 0, q99 = 0;
};

/// Inverse empirical CDF: smallest value v with F(v) >= p.
inline std::size_t empirical_quantile(std::vector<std::size_t> values, double p) {
  if (values.empty()) throw InputError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = std::ceil(p * static_cast<double>(values.size()));
  const std::size_t idx = pos < 1.0 ? 0 : static_cast<std::size_t>(pos) - 1;
  return values[std::min(idx, values.size() - 1)];
}

inline Quantiles quantiles_of(const std::vector<std::size_t>& values) {
  return {empirical_quantile(values, 0.5), empirical_quantile(values, 0.95),
          empirical_quantile(values, 0.99)};
}

struct SimOutcome {
  std::vector<ReplicateRecord> replicates;
  std::map<std::size_t, std::size_t> kq_histogram;      // over accepted replicates
  std::map<unsigned, std::size_t> distance_histogram;   // matchers' meiosis distances
  std::size_t cross_founder = 0;
  std::size_t accepted = 0;
  double acceptance_rate = 1.0;
  Quantiles quantiles;
  std::optional<Condition> condition;

  std::vector<std::size_t> accepted_kq() const {
    std::vector<std::size_t> v;
    for (const auto& r : replicates)
      if (r.accepted) v.push_back(r.k_q);
    return v;
  }

  /// The matchers' meiosis-distance histogram as a candidate P(G=g).
  GDistribution to_gdistribution() const {
    std::vector<GDistribution::Entry> e;
    double total = 0.0;
    for (const auto& [g, c] : distance_histogram) total += static_cast<double>(c);
    if (total == 0.0) throw InputError("no matchers were observed; the G distribution is empty");
    for (const auto& [g, c] : distance_histogram) e.push_back({g, static_cast<double>(c) / total});
    return GDistribution(std::move(e));
  }
};

namespace detail {

inline void finalize(SimOutcome& out) {
  for (const auto& r : out.replicates) {
    if (!r.accepted) continue;
    ++out.accepted;
    ++out.kq_histogram[r.k_q];
    for (unsigned g : r.distances) ++out.distance_histogram[g];
    out.cross_founder += r.cross_founder;
  }
  out.acceptance_rate = static_cast<double>(out.accepted) / static_cast<double>(out.replicates.size());
  if (out.accepted > 0) out.quantiles = quantiles_of(out.accepted_kq());
}

}  // namespace detail

/// Distribution of K_q over replicates, each with Q drawn uniformly from the
/// live population. With a condition, only replicates whose sampled database
/// reproduces observed_k_q exactly are kept (rejection sampling).
inline SimOutcome kq_distribution(const SimConfig& cfg, const std::optional<Condition>& condition = {}) {
  cfg.validate();
  if (condition && condition->n == 0) throw InputError("conditioning database size must be at least 1");
  SimOutcome out;
  out.condition = condition;
  out.replicates.resize(cfg.replicates);
  for_each_replicate(cfg.replicates, cfg.seed, cfg.threads, [&](std::size_t r, Rng& rng) {
    const Pedigree ped = simulate_population(cfg, rng);
    const std::size_t q = pick_q(ped, rng);
    auto m = count_matches(ped, q, cfg.panel, cfg.locus_subset, cfg.duplicate_policy);
    ReplicateRecord rec;
    rec.k_q = m.k_q;
    rec.live_size = ped.live_size();
    rec.distances = std::move(m.distances);
    rec.cross_founder = m.cross_founder;
    if (condition) {
      const auto db = sample_database(ped, q, condition->n, cfg.panel, rng, cfg.locus_subset,
                                      cfg.duplicate_policy);
      rec.database_k_q = db.k_q;
      rec.accepted = db.k_q == condition->observed_k_q;
    }
    out.replicates[r] = std::move(rec);
  });
  detail::finalize(out);
  if (condition && out.accepted < condition->min_accepted)
    throw SimulationError("conditioning on k_q=" + std::to_string(condition->observed_k_q) +
                          " in n=" + std::to_string(condition->n) + " accepted " +
                          std::to_string(out.accepted) + " of " + std::to_string(cfg.replicates) +
                          " replicates (acceptance rate " + std::to_string(out.acceptance_rate) +
                          "), below the minimum of " + std::to_string(condition->min_accepted));
  return out;
}

}  // namespace lineage::sim
