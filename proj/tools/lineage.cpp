#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lineage/cli.hpp"
#include "lineage/io.hpp"
#include "lineage/presets.hpp"

namespace {

using lineage::cli::ExitCode;
using nlohmann::json;

int emit(const json& j) {
  std::cout << j.dump(2) << "\n";
  return ExitCode::kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weight-of-evidence tools for Y-STR and mitogenome lineage-marker profiles"};
  app.require_subcommand(1);

  // evaluate
  lineage::cli::EvaluateOptions ev;
  std::string estimators;
  std::vector<unsigned> exclude_g;
  std::string report_out;
  bool as_json = false;
  auto* evaluate = app.add_subcommand("evaluate", "Match-probability estimators and likelihood ratios for q");
  evaluate->add_option("--database", ev.database, "Database file (tab or comma delimited)")->required();
  evaluate->add_option("--query", ev.query, "File holding the single profile q")->required();
  evaluate->add_option("--panel", ev.panel, "Panel file, preset name, or name under $LINEAGE_PRESET_DIR")->required();
  evaluate->add_option("--estimators", estimators,
                       "Comma list of freq,kappa,add1,add2,ucl,disclap,theta,gdist,kq-lr,autosomal");
  evaluate->add_option("--theta", ev.theta, "Coancestry theta for the adjusted LR (no default)");
  evaluate->add_option("--confidence", ev.confidence, "Confidence level for the upper limit")->capture_default_str();
  evaluate->add_option("--gdist", ev.gdist, "P(G=g) file (g,prob) for the relatedness-averaged LR");
  evaluate->add_option("--exclude-g", exclude_g, "Meiosis counts ruled out as alternative sources");
  evaluate->add_option("--model", ev.model, "Fitted discrete Laplace model (JSON)");
  evaluate->add_option("--population-size", ev.population_size, "Population size N for N/K_q");
  evaluate->add_option("--kq", ev.kq, "Number K_q of matching individuals for N/K_q");
  evaluate->add_option("--kq-bound", ev.kq_bound, "Conservative K_q bound for the autosomal combination");
  evaluate->add_option("--autosomal", ev.autosomal_match_probability, "Autosomal match probability");
  evaluate->add_flag("--strict-duplicates", ev.strict_duplicates, "Ignore duplicated loci instead of matching both");
  evaluate->add_option("--out", report_out, "Also write the JSON report to this file");
  evaluate->add_flag("--json", as_json, "Print the JSON report instead of the text table");

  // simulate
  lineage::cli::SimulateOptions so;
  auto* simulate = app.add_subcommand("simulate", "Distribution of the number of matching individuals K_q");
  simulate->add_option("--config", so.config, "Simulation config (JSON)")->required();
  simulate->add_option("--condition-n", so.condition_n, "Condition on a sampled database of this size");
  simulate->add_option("--condition-kq", so.condition_kq, "Observed k_q to condition on");
  simulate->add_option("--min-accepted", so.min_accepted, "Minimum accepted replicates when conditioning")
      ->capture_default_str();
  simulate->add_option("--mixture", so.mixture, "Mixture file; adds the companion-count histogram");
  simulate->add_option("--out", so.out_dir, "Output directory")->required();
  simulate->add_option("--seed", so.seed, "Override the config seed");

  // disclap
  auto* disclap = app.add_subcommand("disclap", "Discrete Laplace mixture model");
  disclap->require_subcommand(1);
  lineage::cli::DisclapFitOptions fo;
  auto* fit = disclap->add_subcommand("fit", "Fit and select the number of clusters by BIC");
  fit->add_option("--database", fo.database)->required();
  fit->add_option("--panel", fo.panel)->required();
  fit->add_option("--max-clusters", fo.max_clusters)->capture_default_str();
  fit->add_option("--seed", fo.seed)->capture_default_str();
  fit->add_option("--restarts", fo.restarts)->capture_default_str();
  fit->add_option("--out", fo.model_out, "Model output file (JSON)")->required();
  lineage::cli::DisclapQueryOptions qo;
  auto* query = disclap->add_subcommand("query", "Haplotype probability of q under a fitted model");
  query->add_option("--model", qo.model)->required();
  query->add_option("--query", qo.query)->required();
  query->add_option("--panel", qo.panel)->required();
  query->add_option("--theta", qo.theta, "Also report the theta-adjusted LR");

  // mixture
  auto* mixture = app.add_subcommand("mixture", "Two-contributor mixtures");
  mixture->require_subcommand(1);
  lineage::cli::MixtureCheckOptions mo;
  auto* check = mixture->add_subcommand("check", "Containment and companion-profile enumeration");
  check->add_option("--mixture", mo.mixture)->required();
  check->add_option("--query", mo.query)->required();
  check->add_option("--panel", mo.panel)->required();
  check->add_option("--database", mo.database, "Report feasible companions found in this database");

  // panel
  auto* panel = app.add_subcommand("panel", "Inspect or export panels");
  panel->require_subcommand(1);
  auto* list = panel->add_subcommand("list", "List built-in presets");
  std::string panel_name;
  auto* show = panel->add_subcommand("show", "Print a panel as JSON");
  show->add_option("name", panel_name)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ExitCode::kOk : ExitCode::kInputError;
  }

  try {
    if (*evaluate) {
      for (std::size_t a = 0; a < estimators.size();) {
        auto b = estimators.find(',', a);
        if (b == std::string::npos) b = estimators.size();
        if (b > a) ev.estimators.push_back(estimators.substr(a, b - a));
        a = b + 1;
      }
      ev.exclude_g.insert(exclude_g.begin(), exclude_g.end());
      const auto rep = lineage::cli::run_evaluate(ev);
      const auto j = lineage::cli::report_to_json(rep);
      if (!report_out.empty()) lineage::io::write_file(report_out, j.dump(2) + "\n");
      if (as_json)
        std::cout << j.dump(2) << "\n";
      else
        std::cout << lineage::cli::report_to_text(rep);
      if (rep.has_row_errors())
        return rep.only_not_applicable_errors() ? ExitCode::kNotApplicable : ExitCode::kInputError;
      return ExitCode::kOk;
    }
    if (*simulate) {
      const auto res = lineage::cli::run_simulate(so);
      return emit(res.summary);
    }
    if (*fit) return emit(lineage::cli::run_disclap_fit(fo));
    if (*query) return emit(lineage::cli::run_disclap_query(qo));
    if (*check) return emit(lineage::cli::run_mixture_check(mo));
    if (*list) {
      for (const auto& n : lineage::preset_names()) {
        const auto p = lineage::preset(n);
        std::cout << n << "\t" << p.size() << " loci\tmu=" << lineage::cli::fmt(lineage::panel_mutation_rate(p))
                  << "\n";
      }
      return ExitCode::kOk;
    }
    if (*show) return emit(lineage::io::panel_to_json(lineage::io::resolve_panel(panel_name)));
  } catch (const lineage::SimulationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ExitCode::kSimulationError;
  } catch (const lineage::NotApplicableError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ExitCode::kNotApplicable;
  } catch (const lineage::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ExitCode::kInputError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return ExitCode::kInternal;
  }
  return ExitCode::kOk;
}
