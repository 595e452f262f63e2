#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>

#include <fmt/format.h>

#include "ktraj/pipeline.hpp"

namespace testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            fmt::format("ktraj-{}-{}-{}", tag, static_cast<long>(::getpid()), counter++);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline ktraj::TimePoint ts(const char* text) { return *ktraj::parse_timestamp(text); }
inline ktraj::Date day(const char* text) { return *ktraj::parse_date(text); }

inline void write(const std::filesystem::path& p, const std::string& text) { ktraj::write_text_file(p, text); }

/// Minimal CDM directory: every table with its header, plus the given rows.
struct CdmFiles {
  std::string demographic;
  std::string encounter;
  std::string lab;
  std::string diagnosis;
  std::string procedures;
  std::string medication;
  std::string death;

  void write_to(const std::filesystem::path& dir) const {
    write(dir / "demographic.csv", "PATID,BIRTH_DATE,SEX,RACE\n" + demographic);
    write(dir / "encounter.csv", "PATID,ENCOUNTERID,ADMIT_DATETIME,DISCHARGE_DATETIME,DISCHARGE_STATUS\n" + encounter);
    write(dir / "lab_result.csv", "PATID,LAB_LOINC,RESULT_NUM,RESULT_UNIT,RESULT_DATETIME\n" + lab);
    write(dir / "diagnosis.csv", "PATID,DX,DX_TYPE,DX_DATE\n" + diagnosis);
    write(dir / "procedures.csv", "PATID,PX,PX_TYPE,PX_DATE\n" + procedures);
    write(dir / "medication.csv", "PATID,MEDICATION,MED_DATETIME\n" + medication);
    write(dir / "death.csv", "PATID,DEATH_DATE\n" + death);
  }
};

}  // namespace testing
