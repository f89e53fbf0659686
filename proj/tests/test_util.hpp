#pragma once

#include <random>
#include <string>
#include <vector>

#include "lineage/core.hpp"

namespace lineage::testing {

inline Panel toy_panel(std::size_t loci, double mu = 0.01, bool with_pair = false) {
  std::vector<LocusSpec> v;
  for (std::size_t i = 0; i < loci; ++i) v.push_back({"L" + std::to_string(i), mu, std::nullopt});
  if (with_pair && loci >= 2) {
    v[0].name = "DYS385a";
    v[1].name = "DYS385b";
    v[0].duplicate_group = v[1].duplicate_group = "DYS385";
  }
  return Panel("toy", std::move(v));
}

inline Haplotype random_haplotype(std::size_t loci, std::mt19937_64& rng, int lo = 10, int hi = 14,
                                  double missing = 0.0) {
  std::uniform_int_distribution<int> a(lo, hi);
  std::bernoulli_distribution drop(missing);
  std::vector<Allele> v(loci);
  for (auto& x : v) x = drop(rng) ? kMissing : a(rng);
  if (std::all_of(v.begin(), v.end(), [](Allele x) { return x == kMissing; })) v[0] = a(rng);
  return Haplotype(std::move(v));
}

}  // namespace lineage::testing
