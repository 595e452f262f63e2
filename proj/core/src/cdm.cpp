#include "ktraj/cdm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "ktraj/csv.hpp"
#include "ktraj/error.hpp"

namespace ktraj {

std::string_view to_string(Sex sex) {
  switch (sex) {
    case Sex::female: return "female";
    case Sex::male: return "male";
    case Sex::unknown: break;
  }
  return "unknown";
}

std::string_view to_string(Disposition d) {
  switch (d) {
    case Disposition::expired: return "expired";
    case Disposition::home_rehab: return "home_rehab";
    case Disposition::other_facility: return "other_facility";
    case Disposition::unknown: break;
  }
  return "unknown";
}

std::size_t IngestReport::total_errors() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tables) n += t.parse_errors + t.implausible;
  return n;
}

namespace {

// Upper-cased trimmed value, keeping inner spaces (for race/sex/disposition).
std::string upper_trim(std::string_view s) {
  s = trim(s);
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

bool in_value_list(std::string_view value, const std::vector<std::string>& list) {
  const std::string v = upper_trim(value);
  return std::any_of(list.begin(), list.end(), [&](const std::string& s) { return upper_trim(s) == v; });
}

class TableParser {
 public:
  TableParser(const IngestConfig& config, Table table, const std::filesystem::path& dir, IngestReport& report)
      : config_(config), table_(table), name_(to_string(table)), report_(report) {
    const TableSpec& spec = config.table(table);
    const auto path = dir / spec.file;
    if (!std::filesystem::exists(path)) {
      throw DataError("missing file for table '" + name_ + "': " + path.string());
    }
    reader_.emplace(path, config.delimiter);
    for (const auto& field : table_fields(table)) {
      auto it = spec.columns.find(field);
      if (it == spec.columns.end()) {
        throw DataError("table '" + name_ + "': no column mapped for field '" + field + "'");
      }
      auto idx = reader_->column(it->second);
      if (!idx) {
        throw DataError("table '" + name_ + "': mapped column '" + it->second + "' not in header of " +
                        path.string());
      }
      index_[field] = *idx;
    }
    stats_ = &report_.tables[name_];
  }

  bool next() {
    if (!reader_->next()) return false;
    ++stats_->rows;
    return true;
  }

  std::string_view field(const std::string& name) const {
    const auto idx = index_.at(name);
    const auto& f = reader_->fields();
    return idx < f.size() ? trim(f[idx]) : std::string_view{};
  }

  void parse_error(std::string reason) {
    ++stats_->parse_errors;
    sample(std::move(reason));
  }
  void implausible(std::string reason) {
    ++stats_->implausible;
    sample(std::move(reason));
  }
  void orphan() { ++stats_->orphans; }

  void check_tolerance() const {
    if (stats_->rows == 0) return;
    const double fraction = static_cast<double>(stats_->parse_errors) / static_cast<double>(stats_->rows);
    if (fraction > config_.error_tolerance) {
      throw DataError("table '" + name_ + "': " + std::to_string(stats_->parse_errors) + " of " +
                      std::to_string(stats_->rows) + " rows unparseable, above tolerance " +
                      format_double(config_.error_tolerance));
    }
  }

 private:
  void sample(std::string reason) {
    if (report_.samples.size() < config_.error_samples) {
      report_.samples.push_back({name_, reader_->line_number(), std::move(reason)});
    }
  }

  const IngestConfig& config_;
  Table table_;
  std::string name_;
  IngestReport& report_;
  TableLoadStats* stats_ = nullptr;
  std::optional<DelimitedReader> reader_;
  std::unordered_map<std::string, std::size_t> index_;
};

std::optional<double> creatinine_mg_dl(double value, std::string_view unit) {
  const std::string u = to_lower(trim(unit));
  if (u.empty() || u == "mg/dl" || u == "mg/100ml") return value;
  if (u == "umol/l" || u == "µmol/l" || u == "micromol/l" || u == "μmol/l") return value / kUmolPerMgCreatinine;
  return std::nullopt;
}

}  // namespace

CohortStore load_cohort(const IngestConfig& config, const std::filesystem::path& input_dir) {
  IngestReport report;
  std::vector<PatientRecord> patients;
  std::vector<EncounterRecord> encounters;
  std::unordered_map<std::string, std::size_t> patient_index;
  const TimestampFormat fmt = config.timestamp_format;

  std::unordered_set<std::string> creatinine_codes;
  for (const auto& c : config.creatinine_codes) creatinine_codes.insert(upper_trim(c));

  auto patient_for = [&](std::string_view id) -> PatientRecord* {
    auto it = patient_index.find(std::string(id));
    return it == patient_index.end() ? nullptr : &patients[it->second];
  };

  {
    TableParser t(config, Table::demographic, input_dir, report);
    while (t.next()) {
      const auto id = t.field("patient_id");
      if (id.empty()) {
        t.parse_error("empty patient id");
        continue;
      }
      if (patient_index.count(std::string(id))) {
        t.parse_error("duplicate patient id " + std::string(id));
        continue;
      }
      const auto birth = parse_date(t.field("birth_date"), fmt);
      if (!birth) {
        t.parse_error("unparseable birth date '" + std::string(t.field("birth_date")) + "'");
        continue;
      }
      PatientRecord p;
      p.patient_id = std::string(id);
      p.birth_date = birth;
      const auto sex = t.field("sex");
      p.sex = in_value_list(sex, config.female_values) ? Sex::female
              : in_value_list(sex, config.male_values) ? Sex::male
                                                       : Sex::unknown;
      p.african_american = in_value_list(t.field("race"), config.african_american_values);
      patient_index.emplace(p.patient_id, patients.size());
      patients.push_back(std::move(p));
    }
    t.check_tolerance();
  }

  {
    TableParser t(config, Table::encounter, input_dir, report);
    std::unordered_set<std::string> seen;
    while (t.next()) {
      const auto pid = t.field("patient_id");
      const auto eid = t.field("encounter_id");
      if (pid.empty() || eid.empty()) {
        t.parse_error("empty patient or encounter id");
        continue;
      }
      const auto admit = parse_timestamp(t.field("admit"), fmt);
      const auto discharge = parse_timestamp(t.field("discharge"), fmt);
      if (!admit || !discharge) {
        t.parse_error("unparseable admit/discharge timestamp");
        continue;
      }
      if (*discharge < *admit) {
        t.parse_error("discharge before admit for encounter " + std::string(eid));
        continue;
      }
      if (!seen.insert(std::string(eid)).second) {
        t.parse_error("duplicate encounter id " + std::string(eid));
        continue;
      }
      if (!patient_for(pid)) {
        // Encounter without demographics: kept, later excluded on age.
        PatientRecord p;
        p.patient_id = std::string(pid);
        patient_index.emplace(p.patient_id, patients.size());
        patients.push_back(std::move(p));
        t.orphan();
      }
      EncounterRecord e;
      e.patient_id = std::string(pid);
      e.encounter_id = std::string(eid);
      e.admit = *admit;
      e.discharge = *discharge;
      const auto disp = t.field("disposition");
      e.disposition = in_value_list(disp, config.disposition.expired)    ? Disposition::expired
                      : in_value_list(disp, config.disposition.home)     ? Disposition::home_rehab
                      : in_value_list(disp, config.disposition.facility) ? Disposition::other_facility
                                                                         : Disposition::unknown;
      encounters.push_back(std::move(e));
    }
    t.check_tolerance();
  }

  {
    TableParser t(config, Table::lab, input_dir, report);
    while (t.next()) {
      PatientRecord* p = patient_for(t.field("patient_id"));
      if (!p) {
        t.orphan();
        continue;
      }
      const auto time = parse_timestamp(t.field("time"), fmt);
      if (!time) {
        t.parse_error("unparseable lab timestamp '" + std::string(t.field("time")) + "'");
        continue;
      }
      LabObservation obs;
      obs.time = *time;
      if (creatinine_codes.count(upper_trim(t.field("code"))) > 0) {
        obs.analyte = Analyte::serum_creatinine;
        const auto raw = parse_double(t.field("value"));
        if (!raw) {
          t.parse_error("unparseable creatinine value '" + std::string(t.field("value")) + "'");
          continue;
        }
        const auto mg = creatinine_mg_dl(*raw, t.field("unit"));
        if (!mg) {
          t.parse_error("unknown creatinine unit '" + std::string(t.field("unit")) + "'");
          continue;
        }
        if (!(*mg > 0.0 && *mg < kMaxPlausibleCreatinine)) {
          t.implausible("implausible creatinine " + format_double(*mg) + " mg/dL");
          continue;
        }
        obs.value = *mg;
      } else {
        obs.analyte = Analyte::other;
        obs.value = parse_double(t.field("value")).value_or(std::numeric_limits<double>::quiet_NaN());
      }
      p->labs.push_back(obs);
    }
    t.check_tolerance();
  }

  for (Table table : {Table::diagnosis, Table::procedure}) {
    if (config.table(table).file.empty()) continue;
    TableParser t(config, table, input_dir, report);
    const CodeContext context = table == Table::diagnosis ? CodeContext::diagnosis : CodeContext::procedure;
    while (t.next()) {
      PatientRecord* p = patient_for(t.field("patient_id"));
      if (!p) {
        t.orphan();
        continue;
      }
      std::string code = normalize_code(t.field("code"));
      if (code.empty()) {
        t.parse_error("empty code");
        continue;
      }
      const auto date = parse_date(t.field("date"), fmt);
      if (!date) {
        t.parse_error("unparseable code date '" + std::string(t.field("date")) + "'");
        continue;
      }
      p->codes.push_back({*date, context, parse_code_system(t.field("code_type")), std::move(code)});
    }
    t.check_tolerance();
  }

  if (!config.table(Table::medication).file.empty()) {
    TableParser t(config, Table::medication, input_dir, report);
    while (t.next()) {
      PatientRecord* p = patient_for(t.field("patient_id"));
      if (!p) {
        t.orphan();
        continue;
      }
      const auto name = t.field("name");
      const auto time = parse_timestamp(t.field("time"), fmt);
      if (name.empty() || !time) {
        t.parse_error("empty medication name or unparseable timestamp");
        continue;
      }
      p->medications.push_back({*time, to_lower(name)});
    }
    t.check_tolerance();
  }

  if (!config.table(Table::death).file.empty()) {
    TableParser t(config, Table::death, input_dir, report);
    while (t.next()) {
      PatientRecord* p = patient_for(t.field("patient_id"));
      if (!p) {
        t.orphan();
        continue;
      }
      const auto date = parse_date(t.field("date"), fmt);
      if (!date) {
        t.parse_error("unparseable death date '" + std::string(t.field("date")) + "'");
        continue;
      }
      if (!p->death_date || *date < *p->death_date) p->death_date = *date;
    }
    t.check_tolerance();
  }

  return CohortStore::assemble(std::move(patients), std::move(encounters), std::move(report));
}

CreatinineSeries normalize_series(CreatinineSeries points) {
  std::sort(points.begin(), points.end(), [](const CreatininePoint& a, const CreatininePoint& b) {
    return a.time < b.time || (a.time == b.time && a.value > b.value);
  });
  // First of each timestamp group is its maximum.
  points.erase(std::unique(points.begin(), points.end(),
                           [](const CreatininePoint& a, const CreatininePoint& b) { return a.time == b.time; }),
               points.end());
  return points;
}

CohortStore CohortStore::assemble(std::vector<PatientRecord> patients, std::vector<EncounterRecord> encounters,
                                  IngestReport report) {
  std::sort(patients.begin(), patients.end(),
            [](const PatientRecord& a, const PatientRecord& b) { return a.patient_id < b.patient_id; });
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < patients.size(); ++i) {
    if (!index.emplace(patients[i].patient_id, i).second) {
      throw DataError("duplicate patient id " + patients[i].patient_id);
    }
  }
  std::sort(encounters.begin(), encounters.end(), [](const EncounterRecord& a, const EncounterRecord& b) {
    if (a.patient_id != b.patient_id) return a.patient_id < b.patient_id;
    if (a.admit != b.admit) return a.admit < b.admit;
    return a.encounter_id < b.encounter_id;
  });
  {
    std::unordered_set<std::string> ids;
    for (const auto& e : encounters) {
      if (!ids.insert(e.encounter_id).second) throw DataError("duplicate encounter id " + e.encounter_id);
      if (e.discharge < e.admit) throw DataError("discharge before admit for encounter " + e.encounter_id);
    }
  }

  for (auto& p : patients) {
    std::sort(p.labs.begin(), p.labs.end(), [](const LabObservation& a, const LabObservation& b) {
      if (a.time != b.time) return a.time < b.time;
      if (a.analyte != b.analyte) return a.analyte < b.analyte;
      // NaN-safe ordering for non-creatinine values.
      const bool an = std::isnan(a.value), bn = std::isnan(b.value);
      if (an != bn) return bn;
      return !an && a.value < b.value;
    });
    std::sort(p.codes.begin(), p.codes.end(), [](const CodedEvent& a, const CodedEvent& b) {
      if (a.date != b.date) return a.date < b.date;
      if (a.context != b.context) return a.context < b.context;
      if (a.code != b.code) return a.code < b.code;
      return a.system < b.system;
    });
    std::sort(p.medications.begin(), p.medications.end(), [](const MedicationEvent& a, const MedicationEvent& b) {
      return a.time < b.time || (a.time == b.time && a.name < b.name);
    });
    CreatinineSeries cr;
    for (const auto& l : p.labs) {
      if (l.analyte == Analyte::serum_creatinine) cr.push_back({l.time, l.value});
    }
    p.creatinine = normalize_series(std::move(cr));
    p.encounters.clear();

    std::optional<Date> last = p.death_date;
    auto bump = [&](Date d) {
      if (!last || d > *last) last = d;
    };
    if (!p.labs.empty()) bump(to_date(p.labs.back().time));
    if (!p.codes.empty()) bump(p.codes.back().date);
    if (!p.medications.empty()) bump(to_date(p.medications.back().time));
    p.last_activity = last;
  }

  for (std::size_t i = 0; i < encounters.size(); ++i) {
    auto& e = encounters[i];
    auto it = index.find(e.patient_id);
    if (it == index.end()) throw DataError("encounter " + e.encounter_id + " references unknown patient");
    e.patient_index = it->second;
    PatientRecord& p = patients[e.patient_index];
    p.encounters.push_back(i);
    if (!p.last_activity || to_date(e.discharge) > *p.last_activity) p.last_activity = to_date(e.discharge);

    auto lab_lo = std::lower_bound(p.labs.begin(), p.labs.end(), e.admit,
                                   [](const LabObservation& l, TimePoint t) { return l.time < t; });
    auto lab_hi = std::upper_bound(p.labs.begin(), p.labs.end(), e.discharge,
                                   [](TimePoint t, const LabObservation& l) { return t < l.time; });
    e.labs = {static_cast<std::size_t>(lab_lo - p.labs.begin()), static_cast<std::size_t>(lab_hi - p.labs.begin())};

    const Date first = to_date(e.admit), last = to_date(e.discharge);
    auto code_lo = std::lower_bound(p.codes.begin(), p.codes.end(), first,
                                    [](const CodedEvent& c, Date d) { return c.date < d; });
    auto code_hi = std::upper_bound(p.codes.begin(), p.codes.end(), last,
                                    [](Date d, const CodedEvent& c) { return d < c.date; });
    e.codes = {static_cast<std::size_t>(code_lo - p.codes.begin()),
               static_cast<std::size_t>(code_hi - p.codes.begin())};

    auto med_lo = std::lower_bound(p.medications.begin(), p.medications.end(), e.admit,
                                   [](const MedicationEvent& m, TimePoint t) { return m.time < t; });
    auto med_hi = std::upper_bound(p.medications.begin(), p.medications.end(), e.discharge,
                                   [](TimePoint t, const MedicationEvent& m) { return t < m.time; });
    e.medications = {static_cast<std::size_t>(med_lo - p.medications.begin()),
                     static_cast<std::size_t>(med_hi - p.medications.begin())};
  }

  CohortStore store;
  store.patients_ = std::move(patients);
  store.encounters_ = std::move(encounters);
  store.report_ = std::move(report);
  return store;
}

std::span<const LabObservation> CohortStore::in_stay_labs(const EncounterRecord& e) const {
  const auto& v = patients_[e.patient_index].labs;
  return std::span<const LabObservation>(v).subspan(e.labs.begin, e.labs.size());
}

std::span<const CodedEvent> CohortStore::in_stay_codes(const EncounterRecord& e) const {
  const auto& v = patients_[e.patient_index].codes;
  return std::span<const CodedEvent>(v).subspan(e.codes.begin, e.codes.size());
}

std::span<const MedicationEvent> CohortStore::in_stay_medications(const EncounterRecord& e) const {
  const auto& v = patients_[e.patient_index].medications;
  return std::span<const MedicationEvent>(v).subspan(e.medications.begin, e.medications.size());
}

std::string CohortStore::serialize() const {
  std::ostringstream out;
  for (const auto& p : patients_) {
    out << "P|" << p.patient_id << '|' << (p.birth_date ? format_date(*p.birth_date) : "") << '|'
        << to_string(p.sex) << '|' << p.african_american << '|' << (p.death_date ? format_date(*p.death_date) : "")
        << '|' << (p.last_activity ? format_date(*p.last_activity) : "") << '\n';
    for (const auto& l : p.labs) {
      out << " L|" << format_timestamp(l.time) << '|' << static_cast<int>(l.analyte) << '|' << format_double(l.value)
          << '\n';
    }
    for (const auto& c : p.codes) {
      out << " C|" << format_date(c.date) << '|' << static_cast<int>(c.context) << '|' << to_string(c.system) << '|'
          << c.code << '\n';
    }
    for (const auto& m : p.medications) out << " M|" << format_timestamp(m.time) << '|' << m.name << '\n';
  }
  for (const auto& e : encounters_) {
    out << "E|" << e.encounter_id << '|' << e.patient_id << '|' << format_timestamp(e.admit) << '|'
        << format_timestamp(e.discharge) << '|' << to_string(e.disposition) << '|' << e.labs.begin << '-'
        << e.labs.end << '|' << e.codes.begin << '-' << e.codes.end << '|' << e.medications.begin << '-'
        << e.medications.end << '\n';
  }
  for (const auto& [name, t] : report_.tables) {
    out << "T|" << name << '|' << t.rows << '|' << t.parse_errors << '|' << t.implausible << '|' << t.orphans << '\n';
  }
  for (const auto& s : report_.samples) out << "S|" << s.table << '|' << s.line << '|' << s.reason << '\n';
  return out.str();
}

std::optional<int> age_at_admission(const CohortStore& store, const EncounterRecord& e) {
  const auto& p = store.patient_of(e);
  if (!p.birth_date) return std::nullopt;
  return age_in_years(*p.birth_date, to_date(e.admit));
}

TimePoint creatinine_window_end(const EncounterRecord& e) {
  return std::max(e.discharge, e.admit + kCreatinineAvailabilityWindow);
}

FilteredCohort apply_cohort_filters(const CohortStore& store, std::span<const std::size_t> candidates) {
  FilteredCohort out;
  std::vector<std::size_t> sorted(candidates.begin(), candidates.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  out.tally.considered = sorted.size();
  for (std::size_t i : sorted) {
    const auto& e = store.encounters().at(i);
    const auto age = age_at_admission(store, e);
    if (!age || *age < kAdultAge) {
      ++out.tally.excluded_age;
      continue;
    }
    const auto& cr = store.patient_of(e).creatinine;
    const TimePoint end = creatinine_window_end(e);
    auto it = std::lower_bound(cr.begin(), cr.end(), e.admit,
                               [](const CreatininePoint& c, TimePoint t) { return c.time < t; });
    if (it == cr.end() || it->time > end) {
      ++out.tally.excluded_no_creatinine;
      continue;
    }
    out.encounters.push_back(i);
  }
  out.tally.included = out.encounters.size();
  return out;
}

FilteredCohort apply_cohort_filters(const CohortStore& store) {
  std::vector<std::size_t> all(store.encounters().size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return apply_cohort_filters(store, all);
}

CreatinineSeries creatinine_series(const CohortStore& store, const EncounterRecord& e) {
  const auto& cr = store.patient_of(e).creatinine;
  const TimePoint end = creatinine_window_end(e);
  auto lo = std::lower_bound(cr.begin(), cr.end(), e.admit,
                             [](const CreatininePoint& c, TimePoint t) { return c.time < t; });
  auto hi = std::upper_bound(lo, cr.end(), end, [](TimePoint t, const CreatininePoint& c) { return t < c.time; });
  return CreatinineSeries(lo, hi);
}

std::string tally_to_json(const ExclusionTally& tally) {
  nlohmann::ordered_json j;
  j["considered"] = tally.considered;
  j["exclusions"] = nlohmann::ordered_json::array(
      {{{"reason", "age"}, {"count", tally.excluded_age}},
       {{"reason", "no-creatinine"}, {"count", tally.excluded_no_creatinine}}});
  j["included"] = tally.included;
  return j.dump(2) + "\n";
}

}  // namespace ktraj
