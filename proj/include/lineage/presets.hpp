#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "lineage/core.hpp"

namespace lineage {

/// Splits a panel-total rate evenly: mu_l = 1 - (1 - mu)^(1/L), so that the
/// composed rate over the L loci equals mu.
inline double uniform_locus_rate(double total_mu, std::size_t num_loci) {
  if (num_loci == 0) throw InputError("cannot split a rate over zero loci");
  if (!(total_mu >= 0.0 && total_mu < 1.0)) throw InputError("total mutation rate must lie in [0,1)");
  return -std::expm1(std::log1p(-total_mu) / static_cast<double>(num_loci));
}

namespace detail {

inline std::vector<LocusSpec> uniform_loci(const std::vector<std::string>& names, double total_mu) {
  const double mu = uniform_locus_rate(total_mu, names.size());
  std::vector<LocusSpec> loci;
  loci.reserve(names.size());
  for (const auto& n : names) {
    LocusSpec l{n, mu, std::nullopt};
    if (n == "DYS385a" || n == "DYS385b") l.duplicate_group = "DYS385";
    if (n == "DYF387S1a" || n == "DYF387S1b") l.duplicate_group = "DYF387S1";
    loci.push_back(std::move(l));
  }
  return loci;
}

inline const std::vector<std::string>& powerplex_y_loci() {
  static const std::vector<std::string> v{"DYS19",  "DYS385a", "DYS385b", "DYS389I",
                                          "DYS389II", "DYS390", "DYS391",  "DYS392",
                                          "DYS393", "DYS437",  "DYS438",  "DYS439"};
  return v;
}

inline std::vector<std::string> yfiler_loci() {
  auto v = powerplex_y_loci();
  for (const char* n : {"DYS448", "DYS456", "DYS458", "DYS635", "Y-GATA-H4"}) v.emplace_back(n);
  return v;
}

inline std::vector<std::string> powerplex_y23_loci() {
  auto v = yfiler_loci();
  for (const char* n : {"DYS481", "DYS533", "DYS549", "DYS570", "DYS576", "DYS643"}) v.emplace_back(n);
  return v;
}

inline std::vector<std::string> yfiler_plus_loci() {
  auto v = yfiler_loci();
  for (const char* n : {"DYS449", "DYS460", "DYS481", "DYS518", "DYS533", "DYS570", "DYS576",
                        "DYS627", "DYF387S1a", "DYF387S1b"})
    v.emplace_back(n);
  return v;
}

inline std::vector<std::string> numbered_loci(std::string_view prefix, std::size_t n) {
  std::vector<std::string> v;
  for (std::size_t i = 1; i <= n; ++i) v.push_back(std::string(prefix) + std::to_string(i));
  return v;
}

}  // namespace detail

/// Profile mutation rates per generation for the shipped kits.
inline constexpr double kPowerPlexYRate = 0.025;
inline constexpr double kYfilerRate = 0.044;
inline constexpr double kPowerPlexY23Rate = 0.083;
inline constexpr double kYfilerPlusRate = 0.135;
inline constexpr double kMitogenomeRate = 1.0 / 70.0;
inline constexpr std::size_t kMitoPanelLoci = 20;

inline Panel uniform_panel(std::string name, const std::vector<std::string>& loci, double total_mu) {
  return Panel(std::move(name), detail::uniform_loci(loci, total_mu));
}

inline std::vector<std::string> preset_names() {
  return {"PowerPlexY",    "Yfiler",         "PowerPlexY23",    "YfilerPlus",
          "Mito16070-low", "Mito16070-mid",  "Mito16070-high",  "Mito16494-low",
          "Mito16494-mid", "Mito16494-high", "Mitogenome",      "NestedYLadder"};
}

/// 27 loci whose 12/17/23/27-locus prefixes carry the PowerPlex Y, Yfiler,
/// PowerPlex Y23 and Yfiler Plus totals, so nested subsets can be compared on
/// one simulated population. Uses Yfiler Plus locus names; the 23-locus tier
/// stands in for PowerPlex Y23 (whose DYS549/DYS643 are not in Yfiler Plus).
inline Panel nested_y_ladder() {
  const std::vector<std::string> names{
      "DYS19",  "DYS385a", "DYS385b", "DYS389I", "DYS389II", "DYS390",   "DYS391",
      "DYS392", "DYS393",  "DYS437",  "DYS438",  "DYS439",   "DYS448",   "DYS456",
      "DYS458", "DYS635",  "Y-GATA-H4", "DYS481", "DYS533",  "DYS570",   "DYS576",
      "DYS627", "DYS460",  "DYS518",  "DYS449",  "DYF387S1a", "DYF387S1b"};
  const std::array<std::size_t, 4> tiers{12, 17, 23, 27};
  const std::array<double, 4> totals{kPowerPlexYRate, kYfilerRate, kPowerPlexY23Rate, kYfilerPlusRate};
  std::vector<LocusSpec> loci;
  std::size_t start = 0;
  double prev_keep = 1.0;
  for (std::size_t t = 0; t < tiers.size(); ++t) {
    const double keep = 1.0 - totals[t];
    const std::size_t count = tiers[t] - start;
    // per-locus keep probability so that this tier's loci multiply to keep/prev_keep
    const double mu = -std::expm1(std::log(keep / prev_keep) / static_cast<double>(count));
    for (std::size_t i = start; i < tiers[t]; ++i) {
      LocusSpec l{names[i], mu, std::nullopt};
      if (names[i].starts_with("DYS385")) l.duplicate_group = "DYS385";
      if (names[i].starts_with("DYF387S1")) l.duplicate_group = "DYF387S1";
      loci.push_back(std::move(l));
    }
    start = tiers[t];
    prev_keep = keep;
  }
  return Panel("NestedYLadder", std::move(loci));
}

/// Looks up a built-in panel by name. Throws InputError for unknown names.
inline Panel preset(std::string_view name) {
  using namespace detail;
  if (name == "PowerPlexY") return uniform_panel("PowerPlexY", powerplex_y_loci(), kPowerPlexYRate);
  if (name == "Yfiler") return uniform_panel("Yfiler", yfiler_loci(), kYfilerRate);
  if (name == "PowerPlexY23") return uniform_panel("PowerPlexY23", powerplex_y23_loci(), kPowerPlexY23Rate);
  if (name == "YfilerPlus") return uniform_panel("YfilerPlus", yfiler_plus_loci(), kYfilerPlusRate);
  if (name == "NestedYLadder") return nested_y_ladder();
  struct Mito {
    std::string_view name;
    double rate;
  };
  // Mitogenome ranges: 16,070 sites 0.3-1.9%, 16,494 sites 0.4-2.3% per generation.
  static constexpr std::array<Mito, 7> mito{{{"Mito16070-low", 0.003},
                                             {"Mito16070-mid", 0.011},
                                             {"Mito16070-high", 0.019},
                                             {"Mito16494-low", 0.004},
                                             {"Mito16494-mid", 0.0135},
                                             {"Mito16494-high", 0.023},
                                             {"Mitogenome", kMitogenomeRate}}};
  for (const auto& m : mito) {
    if (m.name == name)
      return uniform_panel(std::string(name), numbered_loci("mt", kMitoPanelLoci), m.rate);
  }
  throw InputError("unknown panel preset '" + std::string(name) + "'");
}

}  // namespace lineage
