#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lineage/error.hpp"

namespace lineage {

using Allele = std::int32_t;

/// Sentinel for an unobserved (dropped-out or masked) locus.
inline constexpr Allele kMissing = std::numeric_limits<Allele>::min();

struct LocusSpec {
  std::string name;
  double mu = 0.0;  // per-generation mutation probability
  std::optional<std::string> duplicate_group;
};

/// Ordered locus set with per-locus mutation rates.
///
/// Loci sharing a duplicate_group (exactly two per group) are an unordered
/// pair such as DYS385a/b: their alleles carry no positional meaning.
class Panel {
 public:
  Panel() = default;

  Panel(std::string name, std::vector<LocusSpec> loci)
      : name_(std::move(name)), loci_(std::move(loci)) {
    if (loci_.empty()) throw InputError("panel '" + name_ + "' has no loci");
    std::unordered_map<std::string, std::size_t> seen;
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < loci_.size(); ++i) {
      const auto& l = loci_[i];
      if (l.name.empty()) throw InputError("panel '" + name_ + "' has an unnamed locus");
      if (!(l.mu >= 0.0 && l.mu < 1.0))
        throw InputError("locus '" + l.name + "': mutation rate must lie in [0,1)");
      if (!seen.emplace(l.name, i).second)
        throw InputError("panel '" + name_ + "': duplicate locus name '" + l.name + "'");
      if (l.duplicate_group) groups[*l.duplicate_group].push_back(i);
    }
    partner_.assign(loci_.size(), kNoPartner);
    for (const auto& [group, members] : groups) {
      if (members.size() != 2)
        throw InputError("duplicate group '" + group + "' must contain exactly two loci, found " +
                         std::to_string(members.size()));
      partner_[members[0]] = members[1];
      partner_[members[1]] = members[0];
    }
    index_ = std::move(seen);
  }

  const std::string& name() const noexcept { return name_; }
  const std::vector<LocusSpec>& loci() const noexcept { return loci_; }
  std::size_t size() const noexcept { return loci_.size(); }
  const LocusSpec& locus(std::size_t i) const { return loci_.at(i); }

  std::optional<std::size_t> index_of(std::string_view locus_name) const {
    auto it = index_.find(std::string(locus_name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// The other member of i's duplicate pair, if any.
  std::optional<std::size_t> partner(std::size_t i) const {
    if (partner_.at(i) == kNoPartner) return std::nullopt;
    return partner_[i];
  }

  bool has_duplicates() const noexcept {
    return std::any_of(partner_.begin(), partner_.end(),
                       [](std::size_t p) { return p != kNoPartner; });
  }

 private:
  static constexpr std::size_t kNoPartner = std::numeric_limits<std::size_t>::max();

  std::string name_;
  std::vector<LocusSpec> loci_;
  std::vector<std::size_t> partner_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// One allele per panel locus; kMissing marks an unobserved locus.
class Haplotype {
 public:
  Haplotype() = default;

  explicit Haplotype(std::vector<Allele> alleles) : alleles_(std::move(alleles)) {
    if (observed_count() == 0) throw InputError("haplotype has no observed loci");
  }

  std::size_t size() const noexcept { return alleles_.size(); }
  bool observed(std::size_t i) const { return alleles_.at(i) != kMissing; }
  Allele operator[](std::size_t i) const { return alleles_[i]; }
  std::optional<Allele> at(std::size_t i) const {
    if (!observed(i)) return std::nullopt;
    return alleles_[i];
  }
  std::span<const Allele> alleles() const noexcept { return alleles_; }

  std::size_t observed_count() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(alleles_.begin(), alleles_.end(), [](Allele a) { return a != kMissing; }));
  }
  bool complete() const noexcept { return observed_count() == alleles_.size(); }

  friend bool operator==(const Haplotype&, const Haplotype&) = default;
  friend auto operator<=>(const Haplotype& a, const Haplotype& b) { return a.alleles_ <=> b.alleles_; }

 private:
  std::vector<Allele> alleles_;
};

/// Immutable multiset of haplotypes over one panel.
class HaplotypeDatabase {
 public:
  HaplotypeDatabase() = default;

  HaplotypeDatabase(const Panel& panel, std::vector<Haplotype> rows) : rows_(std::move(rows)) {
    num_loci_ = panel.size();
    for (std::size_t r = 0; r < rows_.size(); ++r) {
      if (rows_[r].size() != num_loci_)
        throw InputError("database row " + std::to_string(r + 1) + " has " +
                         std::to_string(rows_[r].size()) + " loci, panel has " +
                         std::to_string(num_loci_));
    }
  }

  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  std::size_t num_loci() const noexcept { return num_loci_; }
  const Haplotype& operator[](std::size_t i) const { return rows_[i]; }
  const std::vector<Haplotype>& rows() const noexcept { return rows_; }
  auto begin() const noexcept { return rows_.begin(); }
  auto end() const noexcept { return rows_.end(); }

  bool all_complete() const {
    return std::all_of(rows_.begin(), rows_.end(), [](const Haplotype& h) { return h.complete(); });
  }

 private:
  std::vector<Haplotype> rows_;
  std::size_t num_loci_ = 0;
};

struct DatabaseSummary {
  std::size_t n = 0;
  std::size_t k_q = 0;
  double kappa = 0.0;  // fraction of singleton profiles
  std::size_t singleton_count = 0;
  std::size_t doubleton_count = 0;

  /// Builds a summary from counts, checking the count invariants.
  static DatabaseSummary from_counts(std::size_t n, std::size_t k_q, std::size_t singletons,
                                     std::size_t doubletons = 0) {
    if (n == 0) throw InputError("database size n must be at least 1");
    if (k_q > n) throw InputError("k_q exceeds database size");
    if (singletons > n || singletons + 2 * doubletons > n)
      throw InputError("singleton/doubleton counts exceed database size");
    return {n, k_q, static_cast<double>(singletons) / static_cast<double>(n), singletons, doubletons};
  }
};

/// How to treat unordered duplicated loci (DYS385a/b style) when comparing.
enum class DuplicatePolicy {
  kMatchBoth,  // unordered agreement counts as a match at both loci
  kIgnore,     // strict: the pair is dropped from comparison
};

inline std::string_view to_string(DuplicatePolicy p) {
  return p == DuplicatePolicy::kMatchBoth ? "match-both" : "ignore-duplicated";
}

/// Byte mask over panel loci; empty means "all loci".
using LocusMask = std::vector<std::uint8_t>;

inline LocusMask make_locus_mask(const Panel& panel, std::span<const std::size_t> subset) {
  if (subset.empty()) throw InputError("locus subset is empty");
  LocusMask mask(panel.size(), 0);
  for (std::size_t i : subset) {
    if (i >= panel.size()) throw InputError("locus subset index out of range");
    mask[i] = 1;
  }
  return mask;
}

inline LocusMask make_locus_mask(const Panel& panel, std::span<const std::string> names) {
  std::vector<std::size_t> idx;
  for (const auto& n : names) {
    auto i = panel.index_of(n);
    if (!i) throw InputError("locus '" + n + "' is not in panel '" + panel.name() + "'");
    idx.push_back(*i);
  }
  return make_locus_mask(panel, std::span<const std::size_t>(idx));
}

/// Profile mutation rate 1 - prod(1 - mu_l) over the panel or a subset of it.
inline double panel_mutation_rate(const Panel& panel, const LocusMask& mask = {}) {
  if (!mask.empty() && std::none_of(mask.begin(), mask.end(), [](auto m) { return m != 0; }))
    throw InputError("locus subset is empty");
  double log_keep = 0.0;
  for (std::size_t i = 0; i < panel.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    log_keep += std::log1p(-panel.locus(i).mu);
  }
  return -std::expm1(log_keep);
}

inline double panel_mutation_rate(const Panel& panel, std::span<const std::size_t> subset) {
  return panel_mutation_rate(panel, make_locus_mask(panel, subset));
}

struct MatchTally {
  bool agree = true;
  std::size_t compared = 0;
};

/// Allocation-free comparison kernel shared by haplotype_match and the simulator.
///
/// With kEarlyExit the scan stops at the first disagreement and `compared`
/// is only a lower bound.
template <bool kEarlyExit = false>
MatchTally compare_alleles(std::span<const Allele> a, std::span<const Allele> b, const Panel& panel,
                           const LocusMask& mask = {},
                           DuplicatePolicy policy = DuplicatePolicy::kMatchBoth) {
  MatchTally t;
  const std::size_t L = panel.size();
  for (std::size_t i = 0; i < L; ++i) {
    if (!mask.empty() && !mask[i]) continue;
    if (auto p = panel.partner(i)) {
      const std::size_t j = *p;
      if (j < i || policy == DuplicatePolicy::kIgnore) continue;
      if (!mask.empty() && !mask[j]) continue;
      if (a[i] == kMissing || a[j] == kMissing || b[i] == kMissing || b[j] == kMissing) continue;
      const bool same = (a[i] == b[i] && a[j] == b[j]) || (a[i] == b[j] && a[j] == b[i]);
      t.compared += 2;
      if (!same) {
        t.agree = false;
        if constexpr (kEarlyExit) return t;
      }
      continue;
    }
    if (a[i] == kMissing || b[i] == kMissing) continue;
    ++t.compared;
    if (a[i] != b[i]) {
      t.agree = false;
      if constexpr (kEarlyExit) return t;
    }
  }
  return t;
}

struct MatchResult {
  bool match = false;
  std::vector<std::size_t> compared;  // locus indices that entered the comparison
  std::vector<std::size_t> excluded;  // missing, masked or dropped duplicated loci
  DuplicatePolicy policy = DuplicatePolicy::kMatchBoth;
};

inline void check_conforms(const Haplotype& h, const Panel& panel) {
  if (h.size() != panel.size())
    throw InputError("haplotype has " + std::to_string(h.size()) + " loci but panel '" +
                     panel.name() + "' has " + std::to_string(panel.size()));
}

/// Compares two haplotypes on the loci observed in both. Throws when no
/// locus is comparable.
inline MatchResult haplotype_match(const Haplotype& a, const Haplotype& b, const Panel& panel,
                                   DuplicatePolicy policy = DuplicatePolicy::kMatchBoth,
                                   const LocusMask& mask = {}) {
  check_conforms(a, panel);
  check_conforms(b, panel);
  MatchResult r;
  r.policy = policy;
  r.match = true;
  for (std::size_t i = 0; i < panel.size(); ++i) {
    bool usable = mask.empty() || mask[i];
    bool ok = true;
    if (auto p = panel.partner(i)) {
      const std::size_t j = *p;
      usable = usable && policy != DuplicatePolicy::kIgnore && (mask.empty() || mask[j]) &&
               a.observed(i) && a.observed(j) && b.observed(i) && b.observed(j);
      if (usable) ok = (a[i] == b[i] && a[j] == b[j]) || (a[i] == b[j] && a[j] == b[i]);
    } else {
      usable = usable && a.observed(i) && b.observed(i);
      if (usable) ok = a[i] == b[i];
    }
    (usable ? r.compared : r.excluded).push_back(i);
    if (usable && !ok) r.match = false;
  }
  if (r.compared.empty()) throw InputError("no locus is comparable between the two haplotypes");
  return r;
}

/// Counts k_q (matches to q on q's observed loci) and the singleton spectrum.
inline DatabaseSummary summarize_database(const HaplotypeDatabase& db, const Haplotype& q,
                                          const Panel& panel,
                                          DuplicatePolicy policy = DuplicatePolicy::kMatchBoth) {
  if (db.empty()) throw InputError("database is empty");
  if (db.num_loci() != panel.size()) throw InputError("database does not conform to panel");
  check_conforms(q, panel);
  std::size_t k_q = 0;
  for (const auto& h : db) {
    const auto t = compare_alleles<true>(q.alleles(), h.alleles(), panel, {}, policy);
    if (t.agree && t.compared > 0) ++k_q;
  }
  std::map<std::span<const Allele>, std::size_t,
           decltype([](std::span<const Allele> x, std::span<const Allele> y) {
             return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
           })>
      counts;
  for (const auto& h : db) ++counts[h.alleles()];
  std::size_t singles = 0, doubles = 0;
  for (const auto& [profile, c] : counts) {
    if (c == 1) ++singles;
    if (c == 2) ++doubles;
  }
  return DatabaseSummary::from_counts(db.size(), k_q, singles, doubles);
}

}  // namespace lineage
