#include "ktraj/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "ktraj/csv.hpp"
#include "ktraj/error.hpp"

namespace ktraj {

namespace detail {
extern const std::string_view kDefaultCodeMapText;
}

namespace {

using boost::property_tree::ptree;

ptree parse_ini(std::string_view text, const std::string& what) {
  std::istringstream in{std::string(text)};
  ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(what + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  return tree;
}

std::string join(const std::vector<std::string>& items, std::string_view sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += sep;
    out += items[i];
  }
  return out;
}

// Keys present in a section that are not in `known`.
void check_keys(const ptree& section, const std::string& name, const std::set<std::string>& known,
                std::vector<std::string>& problems) {
  for (const auto& [key, value] : section) {
    if (known.count(key) == 0) problems.push_back("[" + name + "] unknown key '" + key + "'");
  }
}

const std::array<std::vector<std::string>, kTableCount>& fields_by_table() {
  static const std::array<std::vector<std::string>, kTableCount> fields = {{
      {"patient_id", "birth_date", "sex", "race"},
      {"patient_id", "encounter_id", "admit", "discharge", "disposition"},
      {"patient_id", "code", "value", "unit", "time"},
      {"patient_id", "code", "code_type", "date"},
      {"patient_id", "code", "code_type", "date"},
      {"patient_id", "name", "time"},
      {"patient_id", "date"},
  }};
  return fields;
}

}  // namespace

std::string_view to_string(Table table) {
  switch (table) {
    case Table::demographic: return "demographic";
    case Table::encounter: return "encounter";
    case Table::lab: return "lab";
    case Table::diagnosis: return "diagnosis";
    case Table::procedure: return "procedure";
    case Table::medication: return "medication";
    case Table::death: return "death";
  }
  return "unknown";
}

const std::vector<std::string>& table_fields(Table table) {
  return fields_by_table()[static_cast<std::size_t>(table)];
}

IngestConfig default_ingest_config() {
  IngestConfig config;
  auto set = [&](Table t, std::string file, std::vector<std::string> headers) {
    TableSpec& spec = config.table(t);
    spec.file = std::move(file);
    const auto& fields = table_fields(t);
    for (std::size_t i = 0; i < fields.size(); ++i) spec.columns[fields[i]] = headers[i];
  };
  set(Table::demographic, "demographic.csv", {"PATID", "BIRTH_DATE", "SEX", "RACE"});
  set(Table::encounter, "encounter.csv",
      {"PATID", "ENCOUNTERID", "ADMIT_DATETIME", "DISCHARGE_DATETIME", "DISCHARGE_STATUS"});
  set(Table::lab, "lab_result.csv", {"PATID", "LAB_LOINC", "RESULT_NUM", "RESULT_UNIT", "RESULT_DATETIME"});
  set(Table::diagnosis, "diagnosis.csv", {"PATID", "DX", "DX_TYPE", "DX_DATE"});
  set(Table::procedure, "procedures.csv", {"PATID", "PX", "PX_TYPE", "PX_DATE"});
  set(Table::medication, "medication.csv", {"PATID", "MEDICATION", "MED_DATETIME"});
  set(Table::death, "death.csv", {"PATID", "DEATH_DATE"});
  return config;
}

bool NephrotoxinGroup::matches(std::string_view lower_name) const {
  return std::any_of(patterns.begin(), patterns.end(),
                     [&](const std::string& p) { return lower_name.find(p) != std::string_view::npos; });
}

const CharlsonCategory* CodeMapConfig::find_charlson(std::string_view name) const {
  for (const auto& c : charlson) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

const NephrotoxinGroup* CodeMapConfig::find_nephrotoxin(std::string_view name) const {
  for (const auto& g : nephrotoxins) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

std::vector<std::string> validate_code_map(const CodeMapConfig& config) {
  std::vector<std::string> problems;
  if (config.version.empty()) problems.push_back("missing 'version'");
  const std::pair<const CodeList*, const char*> lists[] = {
      {&config.ventilation, "ventilation"}, {&config.icu, "icu"},
      {&config.krt, "krt"},                 {&config.ckd, "ckd"},
      {&config.eskd, "eskd"},               {&config.aki_history, "aki_history"},
      {&config.transplant, "transplant"},   {&config.hypertension, "hypertension"},
      {&config.coronary_artery_disease, "coronary_artery_disease"}};
  for (const auto& [list, name] : lists) {
    if (list->empty()) problems.push_back(std::string("[lists] '") + name + "' is missing or empty");
  }
  for (const auto& c : config.charlson) {
    if (c.weight != 1 && c.weight != 2 && c.weight != 3 && c.weight != 6) {
      problems.push_back("[charlson] '" + c.name + "' weight " + std::to_string(c.weight) +
                         " is not one of 1, 2, 3, 6");
    }
    if (c.codes.empty()) problems.push_back("[charlson] '" + c.name + "' has no codes");
    for (const auto& s : c.supersedes) {
      if (!config.find_charlson(s)) {
        problems.push_back("[charlson_hierarchy] '" + c.name + "' supersedes unknown category '" + s + "'");
      }
    }
  }
  for (const char* required : {"congestive_heart_failure", "peripheral_vascular_disease",
                               "chronic_pulmonary_disease", "diabetes", "diabetes_complicated"}) {
    if (!config.find_charlson(required)) {
      problems.push_back(std::string("[charlson] required category '") + required + "' missing");
    }
  }
  if (config.nephrotoxins.size() != 6) {
    problems.push_back("[nephrotoxins] expected exactly 6 groups, found " +
                       std::to_string(config.nephrotoxins.size()));
  }
  for (const auto& g : config.nephrotoxins) {
    if (g.patterns.empty()) problems.push_back("[nephrotoxins] '" + g.name + "' has no patterns");
  }
  if (!config.find_nephrotoxin(kVasopressorGroup)) {
    problems.push_back("[nephrotoxins] required group '" + std::string(kVasopressorGroup) + "' missing");
  }
  return problems;
}

CodeMapConfig parse_code_map(std::string_view ini_text) {
  const ptree tree = parse_ini(ini_text, "code map");
  CodeMapConfig config;
  std::vector<std::string> problems;

  const std::set<std::string> top_level = {"version", "lists", "charlson", "charlson_hierarchy", "nephrotoxins"};
  for (const auto& [key, value] : tree) {
    if (top_level.count(key) == 0) problems.push_back("unknown section or key '" + key + "'");
  }
  config.version = std::string(trim(tree.get<std::string>("version", "")));

  static const ptree empty;
  const ptree& lists = tree.get_child("lists", empty);
  check_keys(lists, "lists",
             {"ventilation", "icu", "krt", "ckd", "eskd", "aki_history", "transplant", "hypertension",
              "coronary_artery_disease"},
             problems);
  auto list = [&](const char* name) { return CodeList(name, split_list(lists.get<std::string>(name, ""))); };
  config.ventilation = list("ventilation");
  config.icu = list("icu");
  config.krt = list("krt");
  config.ckd = list("ckd");
  config.eskd = list("eskd");
  config.aki_history = list("aki_history");
  config.transplant = list("transplant");
  config.hypertension = list("hypertension");
  config.coronary_artery_disease = list("coronary_artery_disease");

  for (const auto& [name, node] : tree.get_child("charlson", empty)) {
    const std::string value = node.get_value<std::string>();
    const auto bar = value.find('|');
    CharlsonCategory cat;
    cat.name = name;
    if (bar == std::string::npos) {
      problems.push_back("[charlson] '" + name + "' must be 'weight | codes'");
      continue;
    }
    const auto weight = parse_int(value.substr(0, bar));
    if (!weight) {
      problems.push_back("[charlson] '" + name + "' has a non-integer weight");
      continue;
    }
    cat.weight = static_cast<int>(*weight);
    cat.codes = CodeList(name, split_list(std::string_view(value).substr(bar + 1)));
    config.charlson.push_back(std::move(cat));
  }
  for (const auto& [name, node] : tree.get_child("charlson_hierarchy", empty)) {
    auto it = std::find_if(config.charlson.begin(), config.charlson.end(),
                           [&](const CharlsonCategory& c) { return c.name == name; });
    if (it == config.charlson.end()) {
      problems.push_back("[charlson_hierarchy] unknown category '" + name + "'");
      continue;
    }
    it->supersedes = split_list(node.get_value<std::string>());
  }
  for (const auto& [name, node] : tree.get_child("nephrotoxins", empty)) {
    NephrotoxinGroup group{name, {}};
    for (const auto& p : split_list(node.get_value<std::string>())) group.patterns.push_back(to_lower(p));
    config.nephrotoxins.push_back(std::move(group));
  }

  for (auto& p : validate_code_map(config)) problems.push_back(std::move(p));
  if (!problems.empty()) throw ConfigError("invalid code map: " + join(problems, "; "));
  return config;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CodeMapConfig load_code_map(const std::filesystem::path& path) {
  try {
    return parse_code_map(read_text_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string_view default_code_map_text() { return detail::kDefaultCodeMapText; }

const CodeMapConfig& default_code_map() {
  static const CodeMapConfig config = parse_code_map(detail::kDefaultCodeMapText);
  return config;
}

PipelineConfig parse_pipeline_config(std::string_view ini_text, const std::filesystem::path& base_dir) {
  const ptree tree = parse_ini(ini_text, "config");
  PipelineConfig config;
  config.config_text = std::string(ini_text);
  IngestConfig& ingest = config.ingest;
  std::vector<std::string> problems;
  static const ptree empty;

  std::set<std::string> sections = {"input", "tables", "disposition", "outcomes", "pipeline"};
  for (Table t : kAllTables) sections.insert(std::string(to_string(t)) + "_columns");
  for (const auto& [key, value] : tree) {
    if (sections.count(key) == 0) problems.push_back("unknown section '" + key + "'");
  }

  const ptree& input = tree.get_child("input", empty);
  check_keys(input, "input",
             {"delimiter", "timestamp_format", "error_tolerance", "error_samples", "creatinine_codes",
              "female_values", "male_values", "african_american_values"},
             problems);
  if (auto d = input.get_optional<std::string>("delimiter")) {
    std::string v = *d;
    if (v == "\\t" || v == "tab") v = "\t";
    if (v.size() != 1) {
      problems.push_back("[input] delimiter must be a single character");
    } else {
      ingest.delimiter = v[0];
    }
  }
  if (auto f = input.get_optional<std::string>("timestamp_format")) {
    if (*f == "iso8601") {
      ingest.timestamp_format = TimestampFormat::iso8601;
    } else if (*f == "epoch_seconds") {
      ingest.timestamp_format = TimestampFormat::epoch_seconds;
    } else {
      problems.push_back("[input] timestamp_format must be iso8601 or epoch_seconds");
    }
  }
  if (auto t = input.get_optional<std::string>("error_tolerance")) {
    auto v = parse_double(*t);
    if (!v || *v < 0.0 || *v > 1.0) {
      problems.push_back("[input] error_tolerance must be in [0, 1]");
    } else {
      ingest.error_tolerance = *v;
    }
  }
  if (auto t = input.get_optional<std::string>("error_samples")) {
    auto v = parse_int(*t);
    if (!v || *v < 0) {
      problems.push_back("[input] error_samples must be a non-negative integer");
    } else {
      ingest.error_samples = static_cast<std::size_t>(*v);
    }
  }
  auto list_opt = [&](const char* key, std::vector<std::string>& out) {
    if (auto v = input.get_optional<std::string>(key)) out = split_list(*v);
  };
  list_opt("creatinine_codes", ingest.creatinine_codes);
  list_opt("female_values", ingest.female_values);
  list_opt("male_values", ingest.male_values);
  list_opt("african_american_values", ingest.african_american_values);

  const ptree& tables = tree.get_child("tables", empty);
  {
    std::set<std::string> names;
    for (Table t : kAllTables) names.insert(std::string(to_string(t)));
    check_keys(tables, "tables", names, problems);
  }
  for (Table t : kAllTables) {
    const std::string name(to_string(t));
    TableSpec& spec = ingest.table(t);
    if (auto f = tables.get_optional<std::string>(name)) spec.file = std::string(trim(*f));
    if (spec.file.empty() && (t == Table::demographic || t == Table::encounter || t == Table::lab)) {
      problems.push_back("[tables] '" + name + "' is required");
    }
    const std::string section = name + "_columns";
    const ptree& cols = tree.get_child(section, empty);
    const auto& fields = table_fields(t);
    check_keys(cols, section, std::set<std::string>(fields.begin(), fields.end()), problems);
    for (const auto& [field, node] : cols) {
      const std::string header(trim(node.get_value<std::string>()));
      if (header.empty()) {
        problems.push_back("[" + section + "] '" + field + "' maps to an empty column name");
      } else {
        spec.columns[field] = header;
      }
    }
  }

  const ptree& disp = tree.get_child("disposition", empty);
  check_keys(disp, "disposition", {"expired", "home", "facility"}, problems);
  if (auto v = disp.get_optional<std::string>("expired")) ingest.disposition.expired = split_list(*v);
  if (auto v = disp.get_optional<std::string>("home")) ingest.disposition.home = split_list(*v);
  if (auto v = disp.get_optional<std::string>("facility")) ingest.disposition.facility = split_list(*v);

  const ptree& outcomes = tree.get_child("outcomes", empty);
  check_keys(outcomes, "outcomes", {"mortality_anchor", "administrative_end", "horizon_days"}, problems);
  if (auto a = outcomes.get_optional<std::string>("mortality_anchor")) {
    if (*a == "admission") {
      config.outcomes.mortality_anchor = MortalityAnchor::admission;
    } else if (*a == "discharge") {
      config.outcomes.mortality_anchor = MortalityAnchor::discharge;
    } else {
      problems.push_back("[outcomes] mortality_anchor must be admission or discharge");
    }
  }
  if (auto e = outcomes.get_optional<std::string>("administrative_end"); e && !trim(*e).empty()) {
    if (auto d = parse_date(*e)) {
      config.outcomes.administrative_end = *d;
    } else {
      problems.push_back("[outcomes] administrative_end is not a date");
    }
  }
  if (auto h = outcomes.get_optional<std::string>("horizon_days")) {
    auto v = parse_int(*h);
    if (!v || *v <= 0) {
      problems.push_back("[outcomes] horizon_days must be a positive integer");
    } else {
      config.outcomes.horizon_days = static_cast<int>(*v);
    }
  }

  const ptree& pipeline = tree.get_child("pipeline", empty);
  check_keys(pipeline, "pipeline", {"codemap", "threads"}, problems);
  if (auto t = pipeline.get_optional<std::string>("threads")) {
    auto v = parse_int(*t);
    if (!v || *v < 1) {
      problems.push_back("[pipeline] threads must be >= 1");
    } else {
      config.threads = static_cast<unsigned>(*v);
    }
  }
  if (auto c = pipeline.get_optional<std::string>("codemap"); c && !trim(*c).empty()) {
    std::filesystem::path p{std::string(trim(*c))};
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    try {
      config.codemap_text = read_text_file(p);
      config.codemap = parse_code_map(config.codemap_text);
    } catch (const ConfigError& e) {
      problems.push_back(std::string("[pipeline] codemap: ") + e.what());
    }
  }

  if (!problems.empty()) throw ConfigError("invalid config: " + join(problems, "; "));
  return config;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse_pipeline_config(read_text_file(path), path.parent_path());
}

std::string render_pipeline_config(const PipelineConfig& config) {
  const IngestConfig& in = config.ingest;
  std::ostringstream out;
  out << "# ktraj pipeline configuration\n\n[input]\n";
  out << "delimiter = " << (in.delimiter == '\t' ? std::string("tab") : std::string(1, in.delimiter)) << "\n";
  out << "timestamp_format = "
      << (in.timestamp_format == TimestampFormat::iso8601 ? "iso8601" : "epoch_seconds") << "\n";
  out << "error_tolerance = " << in.error_tolerance << "\n";
  out << "error_samples = " << in.error_samples << "\n";
  out << "creatinine_codes = " << join(in.creatinine_codes) << "\n";
  out << "female_values = " << join(in.female_values) << "\n";
  out << "male_values = " << join(in.male_values) << "\n";
  out << "african_american_values = " << join(in.african_american_values) << "\n\n[tables]\n";
  for (Table t : kAllTables) out << to_string(t) << " = " << in.table(t).file << "\n";
  for (Table t : kAllTables) {
    out << "\n[" << to_string(t) << "_columns]\n";
    for (const auto& field : table_fields(t)) {
      auto it = in.table(t).columns.find(field);
      out << field << " = " << (it == in.table(t).columns.end() ? "" : it->second) << "\n";
    }
  }
  out << "\n[disposition]\nexpired = " << join(in.disposition.expired) << "\nhome = " << join(in.disposition.home)
      << "\nfacility = " << join(in.disposition.facility) << "\n";
  out << "\n[outcomes]\nmortality_anchor = "
      << (config.outcomes.mortality_anchor == MortalityAnchor::admission ? "admission" : "discharge") << "\n";
  out << "administrative_end = "
      << (config.outcomes.administrative_end ? format_date(*config.outcomes.administrative_end) : "") << "\n";
  out << "horizon_days = " << config.outcomes.horizon_days << "\n";
  out << "\n[pipeline]\n# empty = built-in code map\ncodemap =\nthreads = " << config.threads << "\n";
  return out.str();
}

}  // namespace ktraj
