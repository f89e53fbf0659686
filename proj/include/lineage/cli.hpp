#pragma once

// Command implementations behind the `lineage` tool. Kept in the library so
// reports and output files can be regenerated and checked from tests.

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lineage/core.hpp"
#include "lineage/disclap.hpp"
#include "lineage/estimators.hpp"
#include "lineage/io.hpp"
#include "lineage/mixtures.hpp"
#include "lineage/sim.hpp"

namespace lineage::cli {

using nlohmann::json;

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kInputError = 2,
  kNotApplicable = 3,
  kSimulationError = 4,
};

inline std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

// ---------------------------------------------------------------- regime

enum class Regime { kLowRate, kIntermediate, kHighRate };

/// Low below 0.05 per generation, high above 0.1.
inline Regime classify_regime(double mu) {
  if (mu < 0.05) return Regime::kLowRate;
  if (mu > 0.1) return Regime::kHighRate;
  return Regime::kIntermediate;
}

inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::kLowRate: return "low-rate";
    case Regime::kHighRate: return "high-rate";
    default: return "intermediate";
  }
}

inline std::string regime_advice(Regime r) {
  switch (r) {
    case Regime::kLowRate:
      return "Low profile mutation rate: matching individuals are typically numerous and separated from Q by "
             "tens of generations or more, so population match-probability estimates (e.g. the discrete "
             "Laplace model, possibly with a theta adjustment) may be acceptable if relatedness is explained.";
    case Regime::kHighRate:
      return "High profile mutation rate: most matching individuals are close relatives of Q. Report the "
             "simulated distribution of the number of matching individuals and their meiosis distances "
             "(`lineage simulate`) rather than a database-based match probability.";
    default:
      return "Intermediate profile mutation rate: present database-based estimates together with the simulated "
             "distribution of the number of matching individuals (`lineage simulate`).";
  }
}

// ---------------------------------------------------------------- evidence report

struct ReportRow {
  std::string method;
  std::string quantity;  // "match-probability", "likelihood-ratio" or "expected-count"
  std::optional<double> value;
  json parameters = json::object();
  std::string recommended_by;
  std::optional<std::string> error;
  bool not_applicable = false;
};

struct EvidenceReport {
  json inputs = json::object();
  std::vector<ReportRow> rows;
  double profile_mu = 0.0;
  Regime regime = Regime::kIntermediate;
  std::vector<std::string> caveats;

  bool has_row_errors() const {
    for (const auto& r : rows)
      if (r.error) return true;
    return false;
  }
  bool only_not_applicable_errors() const {
    for (const auto& r : rows)
      if (r.error && !r.not_applicable) return false;
    return true;
  }
};

struct EvaluateOptions {
  std::string database;
  std::string query;
  std::string panel;
  std::vector<std::string> estimators;  // empty = freq,kappa,add1,add2,ucl
  std::optional<double> theta;
  double confidence = 0.95;
  std::optional<std::string> gdist;
  std::set<unsigned> exclude_g;
  std::optional<std::string> model;  // fitted discrete Laplace model
  std::optional<std::size_t> population_size;
  std::optional<std::size_t> kq;            // observed/estimated K_q for N/K_q
  std::optional<double> kq_bound;           // conservative K_q bound for autosomal combination
  std::optional<double> autosomal_match_probability;
  bool strict_duplicates = false;
};

inline const std::vector<std::string>& known_estimators() {
  static const std::vector<std::string> v{"freq", "kappa", "add1", "add2", "ucl", "disclap",
                                          "theta", "gdist", "kq-lr", "autosomal"};
  return v;
}

inline std::string recommended_by(const std::string& method) {
  static const std::map<std::string, std::string> table{
      {"frequency", "SWGDAM 2014 (Y), SWGDAM 2019 (mtDNA), used with theta"},
      {"kappa", "ISFG Polish Speaking Working Group"},
      {"augmented-2", "UK Forensic Regulator; ISFG 2014 (mtDNA)"},
      {"ucl", "SWGDAM 2014 (Y), SWGDAM 2019 (mtDNA); ISFG 2014 (mtDNA)"},
      {"discrete-laplace", "ISFG 2020 (Y); Germany; Philippines"},
  };
  auto it = table.find(method);
  return it == table.end() ? "" : it->second;
}

namespace detail {

template <class Fn>
ReportRow guarded_row(std::string method, std::string quantity, Fn&& fn) {
  ReportRow row{std::move(method), std::move(quantity), std::nullopt, json::object(), "", std::nullopt, false};
  row.recommended_by = recommended_by(row.method);
  try {
    fn(row);
  } catch (const NotApplicableError& e) {
    row.error = e.what();
    row.not_applicable = true;
  } catch (const Error& e) {
    row.error = e.what();
  }
  return row;
}

inline json haplotype_json(const Haplotype& h, const Panel& p) {
  json j = json::object();
  for (std::size_t i = 0; i < p.size(); ++i) j[p.locus(i).name] = h.observed(i) ? json(h[i]) : json(nullptr);
  return j;
}

}  // namespace detail

/// Builds the evidence report. File/argument problems throw; per-estimator
/// problems land in the affected row.
inline EvidenceReport run_evaluate(const EvaluateOptions& o) {
  std::vector<std::string> est = o.estimators;
  if (est.empty()) est = {"freq", "kappa", "add1", "add2", "ucl"};
  for (const auto& e : est)
    if (std::find(known_estimators().begin(), known_estimators().end(), e) == known_estimators().end())
      throw InputError("unknown estimator '" + e + "'");
  auto wants = [&](const char* e) { return std::find(est.begin(), est.end(), e) != est.end(); };
  if (wants("theta") && !o.theta)
    throw InputError("the theta adjustment was requested but --theta was not given (no default is assumed)");
  if (o.theta && !(*o.theta >= 0.0 && *o.theta < 1.0)) throw InputError("--theta must lie in [0,1)");
  if (!(o.confidence > 0.0 && o.confidence < 1.0)) throw InputError("--confidence must lie in (0,1)");
  if (wants("gdist") && !o.gdist) throw InputError("the gdist LR was requested but --gdist was not given");
  if (wants("disclap") && !o.model) throw InputError("the disclap estimate was requested but --model was not given");
  if (wants("kq-lr") && (!o.population_size || !o.kq))
    throw InputError("the N/K_q LR needs --population-size and --kq");
  if (wants("autosomal") && (!o.kq_bound || !o.autosomal_match_probability))
    throw InputError("the autosomal combination needs --kq-bound and --autosomal");

  const Panel panel = io::resolve_panel(o.panel);
  const auto db = io::load_database(o.database, panel);
  const Haplotype q = io::load_query(o.query, panel);
  const auto policy = o.strict_duplicates ? DuplicatePolicy::kIgnore : DuplicatePolicy::kMatchBoth;
  const DatabaseSummary s = summarize_database(db, q, panel, policy);

  LocusMask observed(panel.size(), 0);
  for (std::size_t i = 0; i < panel.size(); ++i) observed[i] = q.observed(i) ? 1 : 0;

  EvidenceReport rep;
  rep.profile_mu = panel_mutation_rate(panel, observed);
  rep.regime = classify_regime(rep.profile_mu);
  rep.inputs = {{"panel", panel.name()},
                {"database", o.database},
                {"query", o.query},
                {"q", detail::haplotype_json(q, panel)},
                {"observed_loci", q.observed_count()},
                {"n", s.n},
                {"k_q", s.k_q},
                {"kappa", s.kappa},
                {"singletons", s.singleton_count},
                {"doubletons", s.doubleton_count},
                {"confidence", o.confidence},
                {"duplicate_policy", std::string(to_string(policy))},
                {"profile_mutation_rate", rep.profile_mu}};
  if (o.theta) rep.inputs["theta"] = *o.theta;

  std::vector<std::pair<std::string, double>> pis;
  auto add_pi = [&](ReportRow row) {
    if (row.value) pis.emplace_back(row.method, *row.value);
    rep.rows.push_back(std::move(row));
  };
  auto pi_row = [&](const char* method, auto&& compute) {
    return detail::guarded_row(method, "match-probability", [&](ReportRow& r) {
      const auto e = compute();
      r.value = e.value;
      r.parameters = {{"k_q", s.k_q}, {"n", s.n}};
      if (e.inputs.confidence) r.parameters["confidence"] = *e.inputs.confidence;
      if (std::string(method) == "kappa") r.parameters["kappa"] = s.kappa;
      if (std::string(method).starts_with("augmented")) r.parameters["augment"] = method[10] - '0';
    });
  };

  // increasing conservativeness at k_q = 0
  if (wants("freq")) add_pi(pi_row("frequency", [&] { return freq_estimate(s, 0); }));
  if (wants("kappa")) add_pi(pi_row("kappa", [&] { return kappa_estimate(s); }));
  if (wants("add1")) add_pi(pi_row("augmented-1", [&] { return freq_estimate(s, 1); }));
  if (wants("add2")) add_pi(pi_row("augmented-2", [&] { return freq_estimate(s, 2); }));
  if (wants("ucl")) add_pi(pi_row("ucl", [&] { return ucl_estimate(s, o.confidence); }));
  if (wants("disclap") || o.model) {
    auto row = detail::guarded_row("discrete-laplace", "match-probability", [&](ReportRow& r) {
      const auto model = io::model_from_json(io::parse_json(io::read_file(*o.model), *o.model), panel);
      r.value = disclap::haplotype_probability(model, q).value;
      r.parameters = {{"model", *o.model}, {"clusters", model.clusters.size()}};
    });
    add_pi(std::move(row));
  }

  if (o.theta) {
    for (const auto& [method, pi] : pis) {
      rep.rows.push_back(detail::guarded_row("theta-adjusted(" + method + ")", "likelihood-ratio", [&](ReportRow& r) {
        r.parameters = {{"theta", *o.theta}, {"pi_q", pi}};
        r.value = theta_adjust(pi, *o.theta).lr;
      }));
    }
  }

  if (o.gdist) {
    rep.rows.push_back(detail::guarded_row("g-distribution", "likelihood-ratio", [&](ReportRow& r) {
      auto g = io::load_gdistribution(*o.gdist);
      if (!o.exclude_g.empty()) g = g.excluding(o.exclude_g);
      json support = json::array();
      for (const auto& e : g.support()) support.push_back({e.g, e.prob});
      r.parameters = {{"mu", rep.profile_mu}, {"gdist", *o.gdist}, {"support", support},
                      {"renormalised", g.renormalised() || !o.exclude_g.empty()}};
      if (!o.exclude_g.empty()) r.parameters["excluded_g"] = o.exclude_g;
      r.value = lr_g_distribution(rep.profile_mu, g).lr;
    }));
  }

  if (o.population_size && o.kq) {
    rep.rows.push_back(detail::guarded_row("population-over-kq", "likelihood-ratio", [&](ReportRow& r) {
      r.parameters = {{"N", *o.population_size}, {"K_q", *o.kq}};
      r.value = lr_from_kq(*o.population_size, *o.kq).lr;
    }));
    rep.caveats.push_back(kWellMixedCaveat);
  }

  if (o.kq_bound && o.autosomal_match_probability) {
    rep.rows.push_back(detail::guarded_row("autosomal-combination", "expected-count", [&](ReportRow& r) {
      r.parameters = {{"kq_bound", *o.kq_bound}, {"autosomal_match_probability", *o.autosomal_match_probability},
                      {"label", "expected number matching both profiles"}};
      r.value = combine_autosomal(*o.kq_bound, *o.autosomal_match_probability);
    }));
  }

  rep.caveats.insert(
      rep.caveats.begin(),
      {"The database may be drawn from a broadly-defined population that is less related to Q than the "
       "alternative sources in this case; database-based estimates can then be anti-conservative.",
       "Lineage-marker matches are dominated by male-line (Y) or female-line (mitogenome) relatives of Q; "
       "match probabilities that treat alternative sources as unrelated to Q can mislead.",
       "theta cannot be directly estimated for lineage markers; any value is a case-specific judgement "
       "(0.03 is a conservative value proposed for autosomal profiles, not a lineage-marker default).",
       regime_advice(rep.regime)});
  if (policy == DuplicatePolicy::kMatchBoth && panel.has_duplicates())
    rep.caveats.push_back(
        "Duplicated loci were compared as unordered pairs and counted as a match at both loci; this can "
        "overstate evidential strength by at most a factor of two.");
  if (policy == DuplicatePolicy::kIgnore && panel.has_duplicates())
    rep.caveats.push_back("Duplicated loci were ignored; this tends to understate evidential strength.");
  if (!q.complete())
    rep.caveats.push_back("q is a partial profile: " + std::to_string(q.observed_count()) + " of " +
                          std::to_string(panel.size()) +
                          " loci observed; matching and the mutation rate use the observed loci only.");
  return rep;
}

inline json report_to_json(const EvidenceReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    json j{{"method", row.method}, {"quantity", row.quantity}, {"parameters", row.parameters}};
    j["value"] = row.value ? json(*row.value) : json(nullptr);
    if (!row.recommended_by.empty()) j["recommended_by"] = row.recommended_by;
    if (row.error) {
      j["error"] = *row.error;
      j["not_applicable"] = row.not_applicable;
    }
    rows.push_back(std::move(j));
  }
  return {{"inputs", r.inputs},
          {"rows", rows},
          {"regime", {{"profile_mutation_rate", r.profile_mu}, {"class", to_string(r.regime)}}},
          {"caveats", r.caveats}};
}

inline std::string report_to_text(const EvidenceReport& r) {
  std::ostringstream out;
  const auto& in = r.inputs;
  out << "Lineage-marker evidence report\n"
      << "  panel: " << in["panel"].get<std::string>() << " (" << in["observed_loci"].get<std::size_t>()
      << " loci observed in q)\n"
      << "  database: n=" << in["n"].get<std::size_t>() << "  k_q=" << in["k_q"].get<std::size_t>()
      << "  kappa=" << fmt(in["kappa"].get<double>()) << "\n"
      << "  duplicated loci: " << in["duplicate_policy"].get<std::string>() << "\n"
      << "  profile mutation rate: " << fmt(r.profile_mu) << " per generation -> " << to_string(r.regime)
      << "\n\n";
  char line[256];
  std::snprintf(line, sizeof line, "  %-36s %-18s %s\n", "method", "quantity", "value");
  out << line;
  for (const auto& row : r.rows) {
    const std::string v = row.value ? fmt(*row.value) : (row.not_applicable ? "n/a" : "error");
    std::snprintf(line, sizeof line, "  %-36s %-18s %s\n", row.method.c_str(), row.quantity.c_str(), v.c_str());
    out << line;
    if (row.error) out << "      " << *row.error << "\n";
  }
  out << "\nCaveats:\n";
  for (const auto& c : r.caveats) out << "  - " << c << "\n";
  return out.str();
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
  std::string config;
  std::optional<std::size_t> condition_n;
  std::optional<std::size_t> condition_kq;
  std::size_t min_accepted = 10;
  std::optional<std::string> mixture;
  std::optional<std::uint64_t> seed;  // overrides the config seed
  std::string out_dir;
};

inline std::string histogram_csv(const std::string& key, const std::map<std::size_t, std::size_t>& h) {
  std::string s = key + ",count\n";
  for (const auto& [k, c] : h) s += std::to_string(k) + "," + std::to_string(c) + "\n";
  return s;
}

inline json quantiles_json(const sim::Quantiles& q) {
  return {{"0.5", q.q50}, {"0.95", q.q95}, {"0.99", q.q99}};
}

struct SimulateResult {
  json summary;
  std::vector<std::filesystem::path> files;
};

/// Runs the K_q simulation and writes kq_histogram.csv, summary.json and
/// meiosis_distance.csv (plus mixture_histogram.csv with a mixture) to out_dir.
inline SimulateResult run_simulate(const SimulateOptions& o) {
  namespace fs = std::filesystem;
  auto cfg = io::load_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.condition_n.has_value() != o.condition_kq.has_value())
    throw InputError("conditioning needs both --condition-n and --condition-kq");
  std::optional<sim::Condition> cond;
  if (o.condition_n) cond = sim::Condition{*o.condition_n, *o.condition_kq, o.min_accepted};
  std::optional<MixtureProfile> mixture;
  if (o.mixture) mixture = io::load_mixture(*o.mixture, cfg.panel);

  const auto outcome = sim::kq_distribution(cfg, cond);

  fs::create_directories(o.out_dir);
  SimulateResult res;
  const fs::path dir(o.out_dir);

  io::write_file(dir / "kq_histogram.csv", histogram_csv("k_q", outcome.kq_histogram));
  res.files.push_back(dir / "kq_histogram.csv");

  std::string gd = "g,prob\n";
  if (!outcome.distance_histogram.empty()) gd = io::format_gdistribution(outcome.to_gdistribution());
  io::write_file(dir / "meiosis_distance.csv", gd);
  res.files.push_back(dir / "meiosis_distance.csv");

  const auto kq = outcome.accepted_kq();
  double mean = 0.0;
  for (auto k : kq) mean += static_cast<double>(k);
  if (!kq.empty()) mean /= static_cast<double>(kq.size());
  std::size_t live = 0;
  for (std::size_t t = cfg.generations - cfg.live_generations; t < cfg.generations; ++t)
    live += cfg.population.size_at(t);

  json summary{
      {"config",
       {{"panel", cfg.panel.name()},
        {"profile_mutation_rate", panel_mutation_rate(cfg.panel, cfg.locus_subset)},
        {"generations", cfg.generations},
        {"population", {{"initial_size", cfg.population.initial_size}, {"growth_rate", cfg.population.growth_rate}}},
        {"offspring_dispersion", cfg.offspring_dispersion},
        {"live_generations", cfg.live_generations},
        {"replicates", cfg.replicates},
        {"seed", cfg.seed},
        {"duplicate_policy", std::string(to_string(cfg.duplicate_policy))}}},
      {"live_population_size", live},
      {"k_q", {{"quantiles", quantiles_json(outcome.quantiles)}, {"mean", mean}}},
      {"replicates_accepted", outcome.accepted},
      {"acceptance_rate", outcome.acceptance_rate},
      {"cross_founder_matchers", outcome.cross_founder},
      {"caveats",
       {"Single panmictic population; population structure and migration are not modelled.",
        "K_q counts live individuals other than Q whose profile matches q; matchers are relatives of Q."}}};
  if (cond) summary["condition"] = {{"n", cond->n}, {"observed_k_q", cond->observed_k_q}};

  if (mixture) {
    const auto mix = sim::simulate_mixture_matches(cfg, mixture->observed_mask());
    io::write_file(dir / "mixture_histogram.csv", histogram_csv("companions", mix.mixture_histogram));
    res.files.push_back(dir / "mixture_histogram.csv");
    summary["mixture"] = {{"companion_quantiles", quantiles_json(mix.mixture_quantiles)},
                          {"single_source_kq_quantiles", quantiles_json(mix.kq_quantiles)},
                          {"observed_loci", std::count(mixture->observed_mask().begin(),
                                                       mixture->observed_mask().end(), 1)}};
  }

  io::write_file(dir / "summary.json", summary.dump(2) + "\n");
  res.files.push_back(dir / "summary.json");
  res.summary = std::move(summary);
  return res;
}

// ---------------------------------------------------------------- disclap

struct DisclapFitOptions {
  std::string database;
  std::string panel;
  std::size_t max_clusters = 5;
  std::uint64_t seed = 1;
  std::size_t restarts = 5;
  std::string model_out;
};

inline json run_disclap_fit(const DisclapFitOptions& o) {
  const Panel panel = io::resolve_panel(o.panel);
  const auto db = io::load_database(o.database, panel);
  const auto sel = disclap::select_clusters_bic(db, panel, o.max_clusters, o.seed, o.restarts);
  const json model = io::model_to_json(sel.model, panel);
  io::write_file(o.model_out, model.dump(2) + "\n");
  return {{"model", o.model_out},
          {"clusters", sel.model.clusters.size()},
          {"bic_by_clusters", sel.bic_by_clusters},
          {"log_likelihood", sel.model.diagnostics.log_likelihood},
          {"note", "Duplicated loci are fitted as two ordered columns as stored in the database."}};
}

struct DisclapQueryOptions {
  std::string model;
  std::string query;
  std::string panel;
  std::optional<double> theta;
};

inline json run_disclap_query(const DisclapQueryOptions& o) {
  const Panel panel = io::resolve_panel(o.panel);
  const auto model = io::model_from_json(io::parse_json(io::read_file(o.model), o.model), panel);
  const Haplotype q = io::load_query(o.query, panel);
  const double pi = disclap::haplotype_probability(model, q).value;
  json out{{"model", o.model}, {"pi_q", pi}};
  if (o.theta) {
    out["theta"] = *o.theta;
    out["lr"] = theta_adjust(pi, *o.theta).lr;
  }
  return out;
}

// ---------------------------------------------------------------- mixture check

struct MixtureCheckOptions {
  std::string mixture;
  std::string query;
  std::string panel;
  std::optional<std::string> database;
};

inline json run_mixture_check(const MixtureCheckOptions& o) {
  const Panel panel = io::resolve_panel(o.panel);
  const auto m = io::load_mixture(o.mixture, panel);
  const Haplotype q = io::load_query(o.query, panel);
  const auto c = mixture_contains(m, q, panel);
  json out{{"contained", c.contained}, {"loci_checked", c.loci_checked}};
  if (!c.contained) return out;
  const auto comp = companion_count(m, q, panel);
  json loci = json::array();
  for (const auto& cl : comp.loci) {
    json names = json::array();
    for (auto l : cl.loci) names.push_back(panel.locus(l).name);
    loci.push_back({{"loci", names}, {"candidates", cl.candidates}});
  }
  out["companion_profiles"] = comp.count;
  out["companion_loci"] = loci;
  if (o.database) {
    const auto db = io::load_database(*o.database, panel);
    const auto rows = companions_in_database(comp, db);
    out["companions_in_database"] = rows.size();
    out["note"] = rows.empty()
                      ? "No feasible companion profile occurs in the database."
                      : "A feasible companion profile occurs in the database; the evaluation may change and is "
                        "not quantified here.";
  }
  return out;
}

}  // namespace lineage::cli
