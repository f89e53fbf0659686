#pragma once

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lineage/core.hpp"
#include "lineage/disclap.hpp"
#include "lineage/estimators.hpp"
#include "lineage/mixtures.hpp"
#include "lineage/presets.hpp"
#include "lineage/sim.hpp"

namespace lineage::io {

using nlohmann::json;

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << content;
}

// ---------------------------------------------------------------- panels

inline json panel_to_json(const Panel& p) {
  json loci = json::array();
  for (const auto& l : p.loci()) {
    json j{{"name", l.name}, {"mu", l.mu}};
    if (l.duplicate_group) j["duplicate_group"] = *l.duplicate_group;
    loci.push_back(std::move(j));
  }
  return {{"name", p.name()}, {"loci", std::move(loci)}};
}

inline Panel panel_from_json(const json& j) {
  if (!j.is_object()) throw InputError("panel must be a JSON object");
  if (!j.contains("name") || !j["name"].is_string()) throw InputError("panel: missing string field 'name'");
  if (!j.contains("loci") || !j["loci"].is_array()) throw InputError("panel: missing array field 'loci'");
  std::vector<LocusSpec> loci;
  for (const auto& l : j["loci"]) {
    if (!l.is_object() || !l.contains("name") || !l["name"].is_string())
      throw InputError("panel: every locus needs a string 'name'");
    LocusSpec spec{l["name"].get<std::string>(), 0.0, std::nullopt};
    if (!l.contains("mu") || !l["mu"].is_number())
      throw InputError("panel: locus '" + spec.name + "' needs a numeric 'mu'");
    spec.mu = l["mu"].get<double>();
    if (l.contains("duplicate_group") && !l["duplicate_group"].is_null())
      spec.duplicate_group = l["duplicate_group"].get<std::string>();
    loci.push_back(std::move(spec));
  }
  return Panel(j["name"].get<std::string>(), std::move(loci));
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(what + ": invalid JSON: " + e.what());
  }
}

inline Panel load_panel(const std::filesystem::path& path) {
  return panel_from_json(parse_json(read_file(path), path.string()));
}

inline constexpr const char* kPresetDirEnv = "LINEAGE_PRESET_DIR";

/// Resolves a panel argument: an existing file, a built-in preset name, or
/// <name>.json inside $LINEAGE_PRESET_DIR.
inline Panel resolve_panel(const std::string& spec) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(spec)) return load_panel(spec);
  for (const auto& n : preset_names())
    if (n == spec) return preset(spec);
  if (const char* dir = std::getenv(kPresetDirEnv)) {
    const fs::path p = fs::path(dir) / (spec + ".json");
    if (fs::is_regular_file(p)) return load_panel(p);
  }
  throw InputError("unknown panel '" + spec + "' (not a file, a built-in preset, or in $" +
                   kPresetDirEnv + ")");
}

// ---------------------------------------------------------------- delimited tables

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based file line of each row
};

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r' || s[a] == '"')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r' || s[b - 1] == '"')) --b;
  return std::string(s.substr(a, b - a));
}

inline std::vector<std::string> split(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(delim, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? line.size() - start : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Tab- or comma-delimited text; the delimiter is taken from the first line.
inline Table parse_table(const std::string& text, const std::string& what) {
  std::istringstream in(text);
  std::string line;
  Table t;
  char delim = ',';
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (!have_header) {
      delim = line.find('\t') != std::string::npos ? '\t' : ',';
      t.header = split(line, delim);
      have_header = true;
      continue;
    }
    auto cells = split(line, delim);
    if (cells.size() != t.header.size())
      throw InputError(what + ": line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                       " cells, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
    t.line_numbers.push_back(lineno);
  }
  if (!have_header) throw InputError(what + ": file is empty");
  return t;
}

inline bool is_missing_cell(const std::string& c) { return c.empty() || c == "NA" || c == "na"; }

inline bool is_id_column(const std::string& h) { return h == "id" || h == "ID" || h == "sample_id"; }

// Maps each table column to a panel locus (or npos for an id column).
inline std::vector<std::size_t> column_map(const Table& t, const Panel& panel, const std::string& what) {
  constexpr auto npos = std::string::npos;
  std::vector<std::size_t> map(t.header.size(), npos);
  std::vector<bool> seen(panel.size(), false);
  std::vector<std::string> unknown;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (is_id_column(t.header[c])) continue;
    auto idx = panel.index_of(t.header[c]);
    if (!idx) {
      unknown.push_back(t.header[c]);
      continue;
    }
    if (seen[*idx]) throw InputError(what + ": locus '" + t.header[c] + "' appears twice in the header");
    seen[*idx] = true;
    map[c] = *idx;
  }
  if (!unknown.empty()) {
    std::string s;
    for (const auto& u : unknown) s += (s.empty() ? "" : ", ") + u;
    throw InputError(what + ": unknown locus name(s) not in panel '" + panel.name() + "': " + s);
  }
  std::string missing;
  for (std::size_t i = 0; i < panel.size(); ++i)
    if (!seen[i]) missing += (missing.empty() ? "" : ", ") + panel.locus(i).name;
  if (!missing.empty()) throw InputError(what + ": header is missing panel loci: " + missing);
  return map;
}

inline Allele parse_allele(const std::string& cell, const std::string& what, std::size_t line,
                           std::size_t column, const std::string& locus) {
  auto where = [&] {
    return what + ": line " + std::to_string(line) + ", column " + std::to_string(column) + " (" + locus + ")";
  };
  if (cell.find('.') != std::string::npos)
    throw InputError(where() + ": intermediate allele '" + cell + "' is not supported; alleles must be integers");
  Allele v{};
  const auto* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end || v == kMissing)
    throw InputError(where() + ": '" + cell + "' is not an integer allele");
  return v;
}

inline HaplotypeDatabase parse_database(const std::string& text, const Panel& panel,
                                        const std::string& what = "database") {
  const Table t = parse_table(text, what);
  if (t.rows.empty()) throw InputError(what + ": no data rows");
  const auto map = column_map(t, panel, what);
  std::vector<Haplotype> rows;
  rows.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    std::vector<Allele> alleles(panel.size(), kMissing);
    for (std::size_t c = 0; c < map.size(); ++c) {
      if (map[c] == std::string::npos || is_missing_cell(t.rows[r][c])) continue;
      alleles[map[c]] = parse_allele(t.rows[r][c], what, t.line_numbers[r], c + 1, t.header[c]);
    }
    try {
      rows.emplace_back(std::move(alleles));
    } catch (const InputError& e) {
      throw InputError(what + ": line " + std::to_string(t.line_numbers[r]) + ": " + e.what());
    }
  }
  return HaplotypeDatabase(panel, std::move(rows));
}

inline HaplotypeDatabase load_database(const std::filesystem::path& path, const Panel& panel) {
  return parse_database(read_file(path), panel, path.string());
}

/// A query file holds exactly one profile in database layout.
inline Haplotype load_query(const std::filesystem::path& path, const Panel& panel) {
  auto db = parse_database(read_file(path), panel, path.string());
  if (db.size() != 1)
    throw InputError(path.string() + ": a query file must contain exactly one profile, found " +
                     std::to_string(db.size()));
  return db[0];
}

/// Mixture layout: database columns, cells may hold several alleles joined by '/'.
inline MixtureProfile parse_mixture(const std::string& text, const Panel& panel,
                                    const std::string& what = "mixture") {
  const Table t = parse_table(text, what);
  if (t.rows.size() != 1)
    throw InputError(what + ": a mixture file must contain exactly one row, found " +
                     std::to_string(t.rows.size()));
  const auto map = column_map(t, panel, what);
  std::vector<std::vector<Allele>> sets(panel.size());
  for (std::size_t c = 0; c < map.size(); ++c) {
    const auto& cell = t.rows[0][c];
    if (map[c] == std::string::npos || is_missing_cell(cell)) continue;
    for (const auto& part : split(cell, '/'))
      sets[map[c]].push_back(parse_allele(part, what, t.line_numbers[0], c + 1, t.header[c]));
  }
  return MixtureProfile(panel, std::move(sets));
}

inline MixtureProfile load_mixture(const std::filesystem::path& path, const Panel& panel) {
  return parse_mixture(read_file(path), panel, path.string());
}

inline std::string format_database(const HaplotypeDatabase& db, const Panel& panel) {
  std::string out;
  for (std::size_t i = 0; i < panel.size(); ++i) out += (i ? "," : "") + panel.locus(i).name;
  out += '\n';
  for (const auto& h : db) {
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (i) out += ',';
      if (h.observed(i)) out += std::to_string(h[i]);
      else out += "NA";
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------- G distributions

/// Two columns (g, prob); a non-numeric first line is treated as a header.
inline GDistribution parse_gdistribution(const std::string& text, const std::string& what = "gdist") {
  std::istringstream in(text);
  std::string line;
  std::vector<GDistribution::Entry> entries;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
    const auto cells = split(line, delim);
    if (cells.size() != 2)
      throw InputError(what + ": line " + std::to_string(lineno) + " must have two columns (g, prob)");
    char* end = nullptr;
    const long g = std::strtol(cells[0].c_str(), &end, 10);
    const bool g_ok = !cells[0].empty() && *end == '\0';
    const double p = std::strtod(cells[1].c_str(), &end);
    const bool p_ok = !cells[1].empty() && *end == '\0';
    if (!g_ok || !p_ok) {
      if (entries.empty() && lineno == 1) continue;  // header
      throw InputError(what + ": line " + std::to_string(lineno) + ": cannot parse '" + line + "'");
    }
    if (g < 1) throw InputError(what + ": line " + std::to_string(lineno) + ": g must be >= 1");
    entries.push_back({static_cast<unsigned>(g), p});
  }
  if (entries.empty()) throw InputError(what + ": no (g, prob) rows");
  return GDistribution(std::move(entries));
}

inline GDistribution load_gdistribution(const std::filesystem::path& path) {
  return parse_gdistribution(read_file(path), path.string());
}

inline std::string format_gdistribution(const GDistribution& d) {
  std::ostringstream out;
  out.precision(17);
  out << "g,prob\n";
  for (const auto& e : d.support()) out << e.g << ',' << e.prob << '\n';
  return out.str();
}

// ---------------------------------------------------------------- disclap models

inline json model_to_json(const disclap::Model& m, const Panel& panel) {
  json clusters = json::array();
  for (const auto& c : m.clusters)
    clusters.push_back({{"weight", c.weight}, {"center", c.center}, {"dispersion", c.dispersion}});
  json loci = json::array();
  for (const auto& l : panel.loci()) loci.push_back(l.name);
  const auto& d = m.diagnostics;
  return {{"panel", m.panel_name},
          {"loci", std::move(loci)},
          {"clusters", std::move(clusters)},
          {"diagnostics",
           {{"log_likelihood", d.log_likelihood},
            {"iterations", d.iterations},
            {"bic", d.bic},
            {"n", d.n},
            {"converged", d.converged}}}};
}

/// Loads a model and checks it was fitted on `panel` (same name and locus order).
inline disclap::Model model_from_json(const json& j, const Panel& panel) {
  try {
    disclap::Model m;
    m.panel_name = j.at("panel").get<std::string>();
    const auto loci = j.at("loci").get<std::vector<std::string>>();
    std::vector<std::string> expected;
    for (const auto& l : panel.loci()) expected.push_back(l.name);
    if (m.panel_name != panel.name() || loci != expected)
      throw InputError("model was fitted on panel '" + m.panel_name + "' which does not match panel '" +
                       panel.name() + "'");
    m.num_loci = loci.size();
    for (const auto& c : j.at("clusters")) {
      disclap::Cluster cl{c.at("weight").get<double>(), c.at("center").get<std::vector<Allele>>(),
                          c.at("dispersion").get<std::vector<double>>()};
      if (cl.center.size() != m.num_loci || cl.dispersion.size() != m.num_loci)
        throw InputError("model cluster does not have one center and dispersion per locus");
      m.clusters.push_back(std::move(cl));
    }
    if (m.clusters.empty()) throw InputError("model has no clusters");
    const auto& d = j.at("diagnostics");
    m.diagnostics = {d.at("log_likelihood").get<double>(), d.at("iterations").get<std::size_t>(),
                     d.at("bic").get<double>(), d.at("n").get<std::size_t>(), d.at("converged").get<bool>()};
    return m;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed model file: ") + e.what());
  }
}

// ---------------------------------------------------------------- simulation configs

/// Reads a simulation config. Unknown or ill-typed fields are reported by name.
inline sim::SimConfig config_from_json(const json& j) {
  static const std::vector<std::string> known{
      "generations", "population",       "offspring_dispersion", "panel",   "live_generations",
      "replicates",  "seed",             "max_individuals",      "locus_subset", "duplicate_policy",
      "q_selection", "threads"};
  if (!j.is_object()) throw InputError("config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw InputError("config: unknown field '" + k + "'");

  auto field_uint = [&](const char* name, std::size_t fallback, bool required) -> std::size_t {
    if (!j.contains(name)) {
      if (required) throw InputError(std::string("config: missing required field '") + name + "'");
      return fallback;
    }
    const auto& v = j[name];
    if (!v.is_number_integer() || v.get<long long>() < 0)
      throw InputError(std::string("config: field '") + name + "' must be a non-negative integer");
    return v.get<std::size_t>();
  };

  sim::SimConfig c;
  c.generations = field_uint("generations", 0, true);
  c.live_generations = field_uint("live_generations", 1, false);
  c.replicates = field_uint("replicates", 1, false);
  c.seed = field_uint("seed", 1, false);
  c.max_individuals = field_uint("max_individuals", c.max_individuals, false);
  c.threads = field_uint("threads", 0, false);

  if (!j.contains("population")) throw InputError("config: missing required field 'population'");
  const auto& pop = j["population"];
  if (pop.is_number_integer()) {
    if (pop.get<long long>() < 1) throw InputError("config: field 'population' must be >= 1");
    c.population.initial_size = pop.get<std::size_t>();
  } else if (pop.is_object()) {
    for (const auto& [k, v] : pop.items())
      if (k != "initial_size" && k != "growth_rate")
        throw InputError("config: unknown field 'population." + k + "'");
    if (!pop.contains("initial_size") || !pop["initial_size"].is_number_integer() ||
        pop["initial_size"].get<long long>() < 1)
      throw InputError("config: field 'population.initial_size' must be an integer >= 1");
    c.population.initial_size = pop["initial_size"].get<std::size_t>();
    if (pop.contains("growth_rate")) {
      if (!pop["growth_rate"].is_number()) throw InputError("config: field 'population.growth_rate' must be a number");
      c.population.growth_rate = pop["growth_rate"].get<double>();
    }
  } else {
    throw InputError("config: field 'population' must be an integer or {initial_size, growth_rate}");
  }

  if (j.contains("offspring_dispersion")) {
    if (!j["offspring_dispersion"].is_number())
      throw InputError("config: field 'offspring_dispersion' must be a number");
    c.offspring_dispersion = j["offspring_dispersion"].get<double>();
  }

  if (!j.contains("panel")) throw InputError("config: missing required field 'panel'");
  if (j["panel"].is_string())
    c.panel = resolve_panel(j["panel"].get<std::string>());
  else
    c.panel = panel_from_json(j["panel"]);

  if (j.contains("locus_subset")) {
    if (!j["locus_subset"].is_array()) throw InputError("config: field 'locus_subset' must be an array of locus names");
    const auto names = j["locus_subset"].get<std::vector<std::string>>();
    c.locus_subset = make_locus_mask(c.panel, std::span<const std::string>(names));
  }
  if (j.contains("duplicate_policy")) {
    const auto p = j["duplicate_policy"].get<std::string>();
    if (p == "match-both") c.duplicate_policy = DuplicatePolicy::kMatchBoth;
    else if (p == "ignore-duplicated") c.duplicate_policy = DuplicatePolicy::kIgnore;
    else throw InputError("config: field 'duplicate_policy' must be 'match-both' or 'ignore-duplicated'");
  }
  if (j.contains("q_selection") && j["q_selection"] != "random-individual")
    throw InputError("config: field 'q_selection' supports only 'random-individual'");

  try {
    c.validate();
  } catch (const InputError& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  return c;
}

inline sim::SimConfig load_config(const std::filesystem::path& path) {
  return config_from_json(parse_json(read_file(path), path.string()));
}

}  // namespace lineage::io
