#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ktraj/codes.hpp"
#include "ktraj/datetime.hpp"

namespace ktraj {

enum class Table { demographic, encounter, lab, diagnosis, procedure, medication, death };
inline constexpr std::size_t kTableCount = 7;
inline constexpr std::array<Table, kTableCount> kAllTables = {
    Table::demographic, Table::encounter, Table::lab,  Table::diagnosis,
    Table::procedure,   Table::medication, Table::death};

std::string_view to_string(Table table);

/// Logical fields each table must map to a header column.
const std::vector<std::string>& table_fields(Table table);

struct TableSpec {
  /// File name, resolved against the input directory. Empty = table absent
  /// (only allowed for diagnosis, procedure, medication and death).
  std::string file;
  /// Logical field -> header column name.
  std::map<std::string, std::string> columns;
};

struct DispositionValues {
  std::vector<std::string> expired{"E", "EX", "EXPIRED"};
  std::vector<std::string> home{"A", "HO", "HH", "RH", "HOME", "REHAB"};
  std::vector<std::string> facility{"SN", "IP", "LT", "HS", "NH", "AL", "SH", "FACILITY"};
};

enum class MortalityAnchor { admission, discharge };

struct IngestConfig {
  char delimiter = ',';
  TimestampFormat timestamp_format = TimestampFormat::iso8601;
  /// Fraction of unparseable rows per table tolerated before aborting.
  double error_tolerance = 0.01;
  std::size_t error_samples = 10;
  /// Lab codes (LOINC) identifying serum creatinine.
  std::vector<std::string> creatinine_codes{"2160-0", "38483-4", "21232-4", "35203-9", "14682-9", "77140-2"};
  std::vector<std::string> female_values{"F", "FEMALE"};
  std::vector<std::string> male_values{"M", "MALE"};
  std::vector<std::string> african_american_values{"03", "B", "BLACK", "AFRICAN AMERICAN",
                                                   "BLACK OR AFRICAN AMERICAN"};
  DispositionValues disposition;
  std::array<TableSpec, kTableCount> tables;

  const TableSpec& table(Table t) const { return tables[static_cast<std::size_t>(t)]; }
  TableSpec& table(Table t) { return tables[static_cast<std::size_t>(t)]; }
};

/// Built-in table layout (PCORnet-style column names) used by the generator.
IngestConfig default_ingest_config();

struct OutcomeConfig {
  MortalityAnchor mortality_anchor = MortalityAnchor::admission;
  /// End of death-data coverage. When unset, follow-up ends at the
  /// patient's last recorded activity.
  std::optional<Date> administrative_end;
  int horizon_days = 1095;
};

struct CharlsonCategory {
  std::string name;
  int weight = 0;
  CodeList codes;
  /// Categories this one overrides when both are present.
  std::vector<std::string> supersedes;
};

struct NephrotoxinGroup {
  std::string name;
  /// Lower-case substrings matched against medication name/class.
  std::vector<std::string> patterns;

  bool matches(std::string_view lower_name) const;
};

struct CodeMapConfig {
  std::string version;
  CodeList ventilation;
  CodeList icu;
  CodeList krt;
  CodeList ckd;
  CodeList eskd;
  CodeList aki_history;
  CodeList transplant;
  CodeList hypertension;
  CodeList coronary_artery_disease;
  std::vector<CharlsonCategory> charlson;
  std::vector<NephrotoxinGroup> nephrotoxins;

  const CharlsonCategory* find_charlson(std::string_view name) const;
  const NephrotoxinGroup* find_nephrotoxin(std::string_view name) const;
};

inline constexpr std::string_view kVasopressorGroup = "vasopressors_inotropes";

/// Parses the INI code-map format; throws ConfigError listing every problem.
CodeMapConfig parse_code_map(std::string_view ini_text);
CodeMapConfig load_code_map(const std::filesystem::path& path);
std::string_view default_code_map_text();
const CodeMapConfig& default_code_map();

/// Schema problems (empty when valid).
std::vector<std::string> validate_code_map(const CodeMapConfig& config);

struct PipelineConfig {
  IngestConfig ingest = default_ingest_config();
  OutcomeConfig outcomes;
  CodeMapConfig codemap = default_code_map();
  unsigned threads = 1;
  /// Raw bytes of the config and code-map sources, hashed into the manifest.
  std::string config_text;
  std::string codemap_text{default_code_map_text()};
};

PipelineConfig parse_pipeline_config(std::string_view ini_text,
                                      const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Renders a complete config (defaults filled in) in the format read above.
std::string render_pipeline_config(const PipelineConfig& config);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace ktraj
