#include <doctest.h>

#include <cmath>

#include "ktraj/codes.hpp"
#include "ktraj/config.hpp"
#include "ktraj/csv.hpp"
#include "ktraj/datetime.hpp"
#include "ktraj/error.hpp"
#include "support.hpp"

using namespace ktraj;

TEST_CASE("timestamps parse in the accepted layouts") {
  const auto a = parse_timestamp("2020-02-29T13:45:10");
  REQUIRE(a);
  CHECK(format_timestamp(*a) == "2020-02-29T13:45:10");
  CHECK(parse_timestamp("2020-02-29 13:45:10") == a);
  CHECK(parse_timestamp("2020-02-29T13:45:10.873Z") == a);
  CHECK(format_timestamp(*parse_timestamp("2020-02-29T13:45")) == "2020-02-29T13:45:00");
  CHECK(format_timestamp(*parse_timestamp("2020-02-29")) == "2020-02-29T00:00:00");
  CHECK_FALSE(parse_timestamp("2021-02-29"));
  CHECK_FALSE(parse_timestamp("2020-13-01"));
  CHECK_FALSE(parse_timestamp("yesterday"));
  CHECK_FALSE(parse_timestamp(""));
  CHECK(parse_timestamp("86400", TimestampFormat::epoch_seconds) == parse_timestamp("1970-01-02"));
  CHECK(format_date(*parse_date("2019-07-04T23:59:00")) == "2019-07-04");
}

TEST_CASE("age counts completed years") {
  const Date birth = testing::day("2000-03-15");
  CHECK(age_in_years(birth, testing::day("2018-03-14")) == 17);
  CHECK(age_in_years(birth, testing::day("2018-03-15")) == 18);
  CHECK(age_in_years(testing::day("2000-02-29"), testing::day("2018-02-28")) == 17);
  CHECK(age_in_years(testing::day("2000-02-29"), testing::day("2018-03-01")) == 18);
}

TEST_CASE("delimited reader handles quoting and blank lines") {
  testing::TempDir dir("csv");
  testing::write(dir / "a.csv", "x,y,z\n1,\"a,b\",\"say \"\"hi\"\"\"\n\n2,,\"multi\nline\"\n");
  DelimitedReader r(dir / "a.csv", ',');
  CHECK(r.header() == std::vector<std::string>{"x", "y", "z"});
  CHECK(r.column("z") == 2u);
  CHECK_FALSE(r.column("w"));
  REQUIRE(r.next());
  CHECK(r.fields()[1] == "a,b");
  CHECK(r.fields()[2] == "say \"hi\"");
  REQUIRE(r.next());
  CHECK(r.fields()[0] == "2");
  CHECK(r.fields()[1].empty());
  CHECK(r.fields()[2] == "multi\nline");
  CHECK_FALSE(r.next());

  auto t = DelimitedReader::from_text("a\tb\n1\t2\n", '\t');
  REQUIRE(t.next());
  CHECK(t.fields()[1] == "2");
}

TEST_CASE("number formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5}) {
    CHECK(*parse_double(format_double(v)) == v);
  }
  CHECK(format_double(std::nan("")) == "NA");
  CHECK(format_double(2.0) == "2");
  CHECK_FALSE(parse_double("1.2.3"));
  CHECK_FALSE(parse_double(""));
  CHECK(parse_int(" 42 ") == 42);
  CHECK(csv_escape("a,b") == "\"a,b\"");
  CHECK(csv_escape("plain") == "plain");
  CHECK(split_list(" a, b ,,c ") == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("code lists match exact codes, prefixes and contexts") {
  CHECK(normalize_code(" n17.9 ") == "N179");
  CodeList list("x", {"N17*", "584.9", "px:39.95", "dx:996.73"});
  CHECK(list.matches("N170"));
  CHECK(list.matches("5849"));
  CHECK_FALSE(list.matches("5848"));
  CHECK(list.matches("3995", CodeContext::procedure));
  CHECK_FALSE(list.matches("3995", CodeContext::diagnosis));
  CHECK(list.matches("99673", CodeContext::diagnosis));
  CHECK_FALSE(list.matches("99673", CodeContext::procedure));
  const auto [code, ctx] = CodeList("y", {"px:5A1D*"}).representative();
  CHECK(CodeList("y", {"px:5A1D*"}).matches(code, ctx));
}

TEST_CASE("default code map is valid and complete") {
  const auto& codes = default_code_map();
  CHECK(validate_code_map(codes).empty());
  CHECK_FALSE(codes.version.empty());
  CHECK_FALSE(codes.krt.empty());
  CHECK(codes.find_nephrotoxin(kVasopressorGroup) != nullptr);
  for (const char* c : {"congestive_heart_failure", "diabetes", "renal_disease"}) {
    CHECK_MESSAGE(codes.find_charlson(c) != nullptr, c);
  }
}

TEST_CASE("pipeline config round-trips through its rendered form") {
  PipelineConfig config = parse_pipeline_config(
      "[input]\nerror_tolerance = 0.05\ndelimiter = tab\n[outcomes]\nmortality_anchor = discharge\n"
      "administrative_end = 2022-12-31\n[pipeline]\nthreads = 3\n");
  CHECK(config.ingest.error_tolerance == 0.05);
  CHECK(config.ingest.delimiter == '\t');
  CHECK(config.outcomes.mortality_anchor == MortalityAnchor::discharge);
  CHECK(config.outcomes.administrative_end == testing::day("2022-12-31"));
  CHECK(config.threads == 3);
  const PipelineConfig again = parse_pipeline_config(render_pipeline_config(config));
  CHECK(render_pipeline_config(again) == render_pipeline_config(config));
}

TEST_CASE("config errors name every problem") {
  try {
    parse_pipeline_config("[input]\nbogus = 1\nerror_tolerance = 2\n[nowhere]\nx = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    CHECK(what.find("bogus") != std::string::npos);
    CHECK(what.find("error_tolerance") != std::string::npos);
    CHECK(what.find("nowhere") != std::string::npos);
  }
  CHECK_THROWS_AS(load_pipeline_config("/nonexistent/ktraj.ini"), ConfigError);
  CHECK_THROWS_AS(parse_code_map("[lists]\nkrt =\n"), ConfigError);
}
