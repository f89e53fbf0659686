#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "lineage/estimators.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const fs::path kData = LINEAGE_TEST_DATA;

struct Run {
  int code;
  std::string out;
};

Run run_in(const std::string& prefix, const std::string& args) {
  const std::string cmd = prefix + std::string(LINEAGE_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

Run run(const std::string& args) { return run_in("", args); }

std::string d(const char* name) { return (kData / name).string(); }

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("lineage_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const json* row(const json& rep, const std::string& method) {
  for (const auto& r : rep["rows"])
    if (r["method"] == method) return &r;
  return nullptr;
}

TEST(Cli, EvaluateDefaultEstimators) {
  const auto r = run("evaluate --database " + d("db_yfilerplus.csv") + " --query " + d("query_yfilerplus.csv") +
                     " --panel YfilerPlus --json");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rep = json::parse(r.out);
  EXPECT_EQ(rep["inputs"]["n"], 100);
  EXPECT_EQ(rep["inputs"]["k_q"], 0);
  std::vector<std::string> methods;
  for (const auto& x : rep["rows"]) methods.push_back(x["method"]);
  EXPECT_EQ(methods, (std::vector<std::string>{"frequency", "kappa", "augmented-1", "augmented-2", "ucl"}));
  EXPECT_NEAR((*row(rep, "augmented-2"))["value"].get<double>(), 0.019608, 5e-7);
  EXPECT_NEAR((*row(rep, "ucl"))["value"].get<double>(), 0.029513, 5e-7);
  EXPECT_EQ((*row(rep, "kappa"))["value"].get<double>(), 0.0);
  EXPECT_FALSE((*row(rep, "ucl"))["recommended_by"].get<std::string>().empty());
  EXPECT_EQ(rep["regime"]["class"], "high-rate");
  bool sim_advice = false;
  for (const auto& c : rep["caveats"]) sim_advice |= c.get<std::string>().find("simulat") != std::string::npos;
  EXPECT_TRUE(sim_advice);
}

TEST(Cli, EvaluateTextReport) {
  const auto r = run("evaluate --database " + d("db_yfilerplus.csv") + " --query " + d("query_yfilerplus.csv") +
                     " --panel YfilerPlus --estimators add2,ucl");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("0.0196078"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("0.029513"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("high-rate"), std::string::npos);
}

TEST(Cli, EvaluateGDistributionAndTheta) {
  const auto r = run("evaluate --database " + d("db_yfilerplus.csv") + " --query " + d("query_yfilerplus.csv") +
                     " --panel YfilerPlus --estimators add2 --gdist " + d("gdist_g1.csv") + " --theta 0.03 --json");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rep = json::parse(r.out);
  EXPECT_NEAR((*row(rep, "g-distribution"))["value"].get<double>(), 1.1561, 5e-5);
  EXPECT_NEAR((*row(rep, "theta-adjusted(augmented-2)"))["value"].get<double>(),
              1.0 / (0.03 + 0.97 * 2.0 / 102.0), 1e-9);
}

TEST(Cli, EvaluateExcludedGRenormalises) {
  const auto r = run("evaluate --database " + d("db_yfilerplus.csv") + " --query " + d("query_yfilerplus.csv") +
                     " --panel YfilerPlus --estimators freq --gdist " + d("gdist_uniform12.csv") +
                     " --exclude-g 1 --json");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto rep = json::parse(r.out);
  EXPECT_NEAR((*row(rep, "g-distribution"))["value"].get<double>(), 1.0 / (0.865 * 0.865), 1e-9);
  EXPECT_TRUE((*row(rep, "g-distribution"))["parameters"]["renormalised"].get<bool>());
}

TEST(Cli, EvaluatePartialProfileUsesObservedLoci) {
  const auto r = run("evaluate --database " + d("db_yfilerplus.csv") + " --query " + d("query_partial.csv") +
                     " --panel YfilerPlus --json");
  ASSERT_EQ(r.code, 0);
  const auto rep = json::parse(r.out);
  EXPECT_EQ(rep["inputs"]["observed_loci"], 22);
  EXPECT_LT(rep["regime"]["profile_mutation_rate"].get<double>(), 0.135);
}

TEST(Cli, KappaNotApplicableExitCode) {
  const auto r = run("evaluate --database " + d("db_with_q.csv") + " --query " + d("query_yfilerplus.csv") +
                     " --panel YfilerPlus --json");
  EXPECT_EQ(r.code, 3);
  const auto rep = json::parse(r.out);
  EXPECT_EQ(rep["inputs"]["k_q"], 2);
  EXPECT_TRUE((*row(rep, "kappa"))["not_applicable"].get<bool>());
  EXPECT_NEAR((*row(rep, "augmented-1"))["value"].get<double>(), 3.0 / 51.0, 1e-12);
}

TEST(Cli, InputErrorsExitTwo) {
  EXPECT_EQ(run("evaluate --database " + d("bad_intermediate.csv") + " --query " + d("query_yfilerplus.csv") +
                " --panel YfilerPlus").code, 2);
  EXPECT_EQ(run("evaluate --database " + d("db_yfilerplus.csv") + " --query " + d("query_yfilerplus.csv") +
                " --panel NoSuchKit").code, 2);
  EXPECT_EQ(run("evaluate --database " + d("db_yfilerplus.csv") + " --query " + d("query_yfilerplus.csv") +
                " --panel YfilerPlus --estimators theta").code, 2);
  EXPECT_EQ(run("evaluate --database " + d("db_yfilerplus.csv") + " --query " + d("query_yfilerplus.csv") +
                " --panel YfilerPlus --estimators bogus").code, 2);
  EXPECT_EQ(run("evaluate --database").code, 2);
  EXPECT_EQ(run("nonsense").code, 2);
}

TEST(Cli, SimulateWritesOutputs) {
  const auto dir = scratch("sim");
  const auto r = run("simulate --config " + d("small_sim.json") + " --out " + dir.string() + " --mixture " +
                     d("mixture_yfilerplus.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* f : {"kq_histogram.csv", "meiosis_distance.csv", "summary.json", "mixture_histogram.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto summary = json::parse(r.out);
  EXPECT_EQ(summary["config"]["replicates"], 8);
  EXPECT_TRUE(summary.contains("mixture"));
}

TEST(Cli, SimulateConditioningFailureExitsFour) {
  const auto dir = scratch("cond");
  const auto r = run("simulate --config " + d("small_sim.json") + " --out " + dir.string() +
                     " --condition-n 50 --condition-kq 50 --min-accepted 3");
  EXPECT_EQ(r.code, 4);
  EXPECT_EQ(run("simulate --config " + d("small_sim.json") + " --out " + dir.string() + " --condition-n 50").code,
            2);
}

TEST(Cli, DisclapFitAndQuery) {
  const auto dir = scratch("disclap");
  const auto model = (dir / "model.json").string();
  const auto fit = run("disclap fit --database " + d("db_yfilerplus.csv") + " --panel YfilerPlus --max-clusters 2 --out " +
                       model);
  ASSERT_EQ(fit.code, 0) << fit.out;
  const auto q1 = run("disclap query --model " + model + " --query " + d("query_yfilerplus.csv") +
                      " --panel YfilerPlus --theta 0.03");
  ASSERT_EQ(q1.code, 0);
  const auto j = json::parse(q1.out);
  const double pi = j["pi_q"];
  EXPECT_GT(pi, 0.0);
  EXPECT_NEAR(j["lr"].get<double>(), 1.0 / (0.03 + 0.97 * pi), 1e-9);
  const auto q2 = run("disclap query --model " + model + " --query " + d("query_yfilerplus.csv") +
                      " --panel YfilerPlus --theta 0.03");
  EXPECT_EQ(q1.out, q2.out);
  EXPECT_EQ(run("disclap query --model " + model + " --query " + d("query_partial.csv") + " --panel YfilerPlus").code, 2);
  const auto ev = run("evaluate --database " + d("db_yfilerplus.csv") + " --query " + d("query_yfilerplus.csv") +
                      " --panel YfilerPlus --estimators disclap --model " + model + " --json");
  ASSERT_EQ(ev.code, 0);
  EXPECT_EQ((*row(json::parse(ev.out), "discrete-laplace"))["value"].get<double>(), pi);
}

TEST(Cli, MixtureCheck) {
  const auto r = run("mixture check --mixture " + d("mixture_yfilerplus.csv") + " --query " +
                     d("query_yfilerplus.csv") + " --panel YfilerPlus --database " + d("db_yfilerplus.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = json::parse(r.out);
  EXPECT_TRUE(j["contained"].get<bool>());
  EXPECT_EQ(j["loci_checked"], 27);
  EXPECT_GE(j["companion_profiles"].get<double>(), 1.0);
  EXPECT_GE(j["companions_in_database"].get<int>(), 1);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const char* kGoldenArgs =
    "evaluate --database db_yfilerplus.csv --query query_yfilerplus.csv --panel YfilerPlus "
    "--estimators freq,kappa,add1,add2,ucl,theta,gdist --theta 0.03 --gdist gdist_uniform12.csv";

TEST(Cli, GoldenReports) {
  const std::string cd = "cd " + kData.string() + " && ";
  const auto text = run_in(cd, kGoldenArgs);
  ASSERT_EQ(text.code, 0);
  EXPECT_EQ(text.out, slurp(kData / "golden_report.txt"));
  const auto js = run_in(cd, std::string(kGoldenArgs) + " --json");
  ASSERT_EQ(js.code, 0);
  EXPECT_EQ(js.out, slurp(kData / "golden_report.json"));
}

// Every number in the report follows from the echoed inputs through library calls.
TEST(Cli, ReportRowsReproducibleFromEchoedInputs) {
  const auto rep = json::parse(slurp(kData / "golden_report.json"));
  const auto& in = rep["inputs"];
  const auto s = lineage::DatabaseSummary::from_counts(in["n"], in["k_q"], in["singletons"], in["doubletons"]);
  EXPECT_EQ(s.kappa, in["kappa"].get<double>());
  const double theta = in["theta"];
  std::map<std::string, double> pis;
  for (const auto& r : rep["rows"]) {
    const std::string m = r["method"];
    const double v = r["value"];
    double expect = -1.0;
    if (m == "frequency") expect = lineage::freq_estimate(s, 0).value;
    if (m == "augmented-1") expect = lineage::freq_estimate(s, 1).value;
    if (m == "augmented-2") expect = lineage::freq_estimate(s, 2).value;
    if (m == "kappa") expect = lineage::kappa_estimate(s).value;
    if (m == "ucl") expect = lineage::ucl_estimate(s, in["confidence"].get<double>()).value;
    if (m.starts_with("theta-adjusted(")) {
      const auto inner = m.substr(15, m.size() - 16);
      expect = lineage::theta_adjust(pis.at(inner), theta).lr;
    }
    if (m == "g-distribution") {
      std::vector<lineage::GDistribution::Entry> e;
      for (const auto& p : r["parameters"]["support"]) e.push_back({p[0].get<unsigned>(), p[1].get<double>()});
      expect = lineage::lr_g_distribution(in["profile_mutation_rate"], lineage::GDistribution(e)).lr;
    }
    EXPECT_EQ(v, expect) << m;
    if (r["quantity"] == "match-probability") pis[m] = v;
  }
}

TEST(Cli, PanelCommands) {
  const auto list = run("panel list");
  EXPECT_EQ(list.code, 0);
  EXPECT_NE(list.out.find("YfilerPlus"), std::string::npos);
  const auto show = run("panel show Yfiler");
  ASSERT_EQ(show.code, 0);
  EXPECT_EQ(json::parse(show.out)["loci"].size(), 17u);
  EXPECT_EQ(run("panel show Nope").code, 2);
}

}  // namespace
