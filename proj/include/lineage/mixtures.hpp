#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lineage/core.hpp"
#include "lineage/sim.hpp"

namespace lineage {

/// Allele sets of a two-contributor lineage mixture. Duplicated pairs pool
/// all their alleles into one set, stored at both loci of the pair. An empty
/// set means the locus is unobserved.
class MixtureProfile {
 public:
  MixtureProfile() = default;

  MixtureProfile(const Panel& panel, std::vector<std::vector<Allele>> per_locus) {
    if (per_locus.size() != panel.size())
      throw InputError("mixture has " + std::to_string(per_locus.size()) + " loci, panel has " +
                       std::to_string(panel.size()));
    for (auto& s : per_locus) {
      for (Allele a : s)
        if (a == kMissing) throw InputError("mixture allele sets cannot contain missing markers");
      normalize(s);
    }
    for (std::size_t i = 0; i < panel.size(); ++i) {
      if (auto j = panel.partner(i); j && *j > i) {
        std::vector<Allele> pooled = per_locus[i];
        pooled.insert(pooled.end(), per_locus[*j].begin(), per_locus[*j].end());
        normalize(pooled);
        per_locus[i] = pooled;
        per_locus[*j] = std::move(pooled);
      }
    }
    sets_ = std::move(per_locus);
    if (std::all_of(sets_.begin(), sets_.end(), [](const auto& s) { return s.empty(); }))
      throw InputError("mixture has no observed loci");
  }

  std::size_t size() const noexcept { return sets_.size(); }
  const std::vector<Allele>& alleles(std::size_t locus) const { return sets_.at(locus); }
  bool observed(std::size_t locus) const { return !sets_.at(locus).empty(); }

  LocusMask observed_mask() const {
    LocusMask m(sets_.size(), 0);
    for (std::size_t i = 0; i < sets_.size(); ++i) m[i] = sets_[i].empty() ? 0 : 1;
    return m;
  }

  friend bool operator==(const MixtureProfile&, const MixtureProfile&) = default;

 private:
  static void normalize(std::vector<Allele>& s) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }

  std::vector<std::vector<Allele>> sets_;
};

namespace detail {

// Locus groups: singletons and duplicated pairs (lower index first).
inline std::vector<std::vector<std::size_t>> locus_groups(const Panel& panel) {
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < panel.size(); ++i) {
    auto j = panel.partner(i);
    if (!j)
      groups.push_back({i});
    else if (*j > i)
      groups.push_back({i, *j});
  }
  return groups;
}

inline std::vector<Allele> observed_alleles(std::span<const Allele> h, const std::vector<std::size_t>& group) {
  std::vector<Allele> v;
  for (std::size_t l : group)
    if (h[l] != kMissing) v.push_back(h[l]);
  return v;
}

}  // namespace detail

/// Per-locus union of two contributors' alleles; loci outside `mask` (when
/// given) are left unobserved.
inline MixtureProfile mixture_union(std::span<const Allele> a, std::span<const Allele> b, const Panel& panel,
                                    const LocusMask& mask = {}) {
  if (a.size() != panel.size() || b.size() != panel.size())
    throw InputError("haplotypes do not conform to the panel");
  std::vector<std::vector<Allele>> sets(panel.size());
  for (std::size_t i = 0; i < panel.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    if (a[i] != kMissing) sets[i].push_back(a[i]);
    if (b[i] != kMissing) sets[i].push_back(b[i]);
  }
  return MixtureProfile(panel, std::move(sets));
}

inline MixtureProfile mixture_union(const Haplotype& a, const Haplotype& b, const Panel& panel,
                                    const LocusMask& mask = {}) {
  return mixture_union(a.alleles(), b.alleles(), panel, mask);
}

struct Containment {
  bool contained = false;
  std::size_t loci_checked = 0;
};

/// Whether every allele q shows is present in the mixture, on loci observed in both.
inline Containment mixture_contains(const MixtureProfile& m, const Haplotype& q, const Panel& panel) {
  check_conforms(q, panel);
  if (m.size() != panel.size()) throw InputError("mixture does not conform to the panel");
  Containment r{true, 0};
  for (const auto& group : detail::locus_groups(panel)) {
    const auto& set = m.alleles(group.front());
    if (set.empty()) continue;
    for (std::size_t l : group) {
      if (!q.observed(l)) continue;
      ++r.loci_checked;
      if (!std::binary_search(set.begin(), set.end(), q[l])) r.contained = false;
    }
  }
  if (r.loci_checked == 0) throw InputError("no locus is comparable between the mixture and q");
  return r;
}

struct CompanionLocus {
  std::vector<std::size_t> loci;                // one locus, or a duplicated pair
  std::vector<std::vector<Allele>> candidates;  // sorted companion alleles per option
};

struct Companions {
  std::vector<CompanionLocus> loci;  // observed mixture loci only
  double count = 1.0;                // number of companion profiles (product of option counts)
};

/// Enumerates, per observed mixture locus, the companion alleles that
/// together with q reproduce the mixture. Alleles q does not show act as
/// wildcards drawn from the mixture set.
inline Companions companion_count(const MixtureProfile& m, const Haplotype& q, const Panel& panel) {
  if (!mixture_contains(m, q, panel).contained)
    throw InputError("q is not contained in the mixture");
  Companions out;
  for (const auto& group : detail::locus_groups(panel)) {
    const auto& set = m.alleles(group.front());
    if (set.empty()) continue;
    const auto q_obs = detail::observed_alleles(q.alleles(), group);
    const std::size_t wildcards = group.size() - q_obs.size();
    CompanionLocus cl{group, {}};
    auto feasible = [&](const std::vector<Allele>& comp) {
      std::size_t uncovered = 0;
      for (Allele a : set) {
        const bool by_q = std::find(q_obs.begin(), q_obs.end(), a) != q_obs.end();
        const bool by_c = std::find(comp.begin(), comp.end(), a) != comp.end();
        if (!by_q && !by_c) ++uncovered;
      }
      return uncovered <= wildcards;
    };
    if (group.size() == 1) {
      for (Allele a : set)
        if (feasible({a})) cl.candidates.push_back({a});
    } else {
      for (std::size_t x = 0; x < set.size(); ++x)
        for (std::size_t y = x; y < set.size(); ++y)
          if (feasible({set[x], set[y]})) cl.candidates.push_back({set[x], set[y]});
    }
    if (cl.candidates.empty()) {
      std::string names;
      for (std::size_t l : group) names += (names.empty() ? "" : "/") + panel.locus(l).name;
      throw InputError("mixture is inconsistent with two contributors one of whom is q: locus " + names +
                       " has " + std::to_string(set.size()) +
                       " alleles that q and a single companion cannot cover");
    }
    out.count *= static_cast<double>(cl.candidates.size());
    out.loci.push_back(std::move(cl));
  }
  return out;
}

/// True when haplotype x is one of the enumerated companion profiles.
inline bool is_companion(const Companions& c, std::span<const Allele> x) {
  std::vector<Allele> buf;
  for (const auto& cl : c.loci) {
    buf.clear();
    for (std::size_t l : cl.loci) {
      if (x[l] == kMissing) return false;
      buf.push_back(x[l]);
    }
    std::sort(buf.begin(), buf.end());
    if (std::find(cl.candidates.begin(), cl.candidates.end(), buf) == cl.candidates.end()) return false;
  }
  return true;
}

/// Whether any database profile is a feasible companion.
inline std::vector<std::size_t> companions_in_database(const Companions& c, const HaplotypeDatabase& db) {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < db.size(); ++r)
    if (is_companion(c, db[r].alleles())) rows.push_back(r);
  return rows;
}

namespace sim {

/// Live individuals x != Q with mixture_union(q, x) == m on m's observed loci,
/// found through the companion constraints.
inline std::size_t count_mixture_matches(const Pedigree& ped, std::size_t q_individual,
                                         const MixtureProfile& m, const Panel& panel) {
  const Haplotype q = ped.haplotype_copy(q_individual);
  const Companions comp = companion_count(m, q, panel);
  std::size_t count = 0;
  for (std::size_t x = ped.live_begin(); x < ped.live_end(); ++x)
    if (x != q_individual && is_companion(comp, ped.haplotype(x))) ++count;
  return count;
}

struct MixtureReplicate {
  std::size_t q_individual = 0;
  std::size_t second_contributor = 0;
  std::size_t mixture_count = 0;  // individuals that reproduce the mixture with q
  std::size_t k_q = 0;            // single-source matches for comparison
  std::size_t contained = 0;      // individuals whose haplotype lies inside the mixture
};

struct MixtureOutcome {
  std::vector<MixtureReplicate> replicates;
  std::map<std::size_t, std::size_t> mixture_histogram;
  std::map<std::size_t, std::size_t> kq_histogram;
  Quantiles mixture_quantiles;
  Quantiles kq_quantiles;
};

/// Two-contributor mixtures in simulated populations: per replicate Q and a
/// second contributor are drawn uniformly from the live population, their
/// mixture is formed on the loci in `observed` (all loci when empty), and the
/// individuals who could stand in for the second contributor are counted.
inline MixtureOutcome simulate_mixture_matches(const SimConfig& cfg, const LocusMask& observed = {}) {
  cfg.validate();
  MixtureOutcome out;
  out.replicates.resize(cfg.replicates);
  LocusMask mask = observed;
  if (mask.empty()) mask = cfg.locus_subset;
  for_each_replicate(cfg.replicates, cfg.seed, cfg.threads, [&](std::size_t r, Rng& rng) {
    const Pedigree ped = simulate_population(cfg, rng);
    if (ped.live_size() < 2) throw SimulationError("mixture simulation needs at least two live individuals");
    MixtureReplicate rec;
    rec.q_individual = pick_q(ped, rng);
    std::size_t s = std::uniform_int_distribution<std::size_t>(ped.live_begin(), ped.live_end() - 2)(rng);
    if (s >= rec.q_individual) ++s;
    rec.second_contributor = s;
    const auto m = mixture_union(ped.haplotype(rec.q_individual), ped.haplotype(s), cfg.panel, mask);
    rec.mixture_count = count_mixture_matches(ped, rec.q_individual, m, cfg.panel);
    rec.k_q = count_matches(ped, rec.q_individual, cfg.panel, mask, cfg.duplicate_policy).k_q;
    for (std::size_t x = ped.live_begin(); x < ped.live_end(); ++x) {
      if (x == rec.q_individual) continue;
      if (mixture_contains(m, ped.haplotype_copy(x), cfg.panel).contained) ++rec.contained;
    }
    out.replicates[r] = rec;
  });
  std::vector<std::size_t> mix, kq;
  for (const auto& r : out.replicates) {
    ++out.mixture_histogram[r.mixture_count];
    ++out.kq_histogram[r.k_q];
    mix.push_back(r.mixture_count);
    kq.push_back(r.k_q);
  }
  out.mixture_quantiles = quantiles_of(mix);
  out.kq_quantiles = quantiles_of(kq);
  return out;
}

}  // namespace sim
}  // namespace lineage
