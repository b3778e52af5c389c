#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "mlran/errors.hpp"
#include "mlran/report.hpp"
#include "oracles.hpp"

using namespace mlran;

namespace {
void put(const std::filesystem::path& p, std::string_view text) {
  std::ofstream(p, std::ios::binary) << text;
}
}  // namespace

TEST_SUITE("report") {
  TEST_CASE("apistats only leaves every other section empty") {
    const auto r = parse_report(R"({"behavior": {"apistats": {"1234": {"LdrGetProcedureAddress": 5}}}})");
    REQUIRE(r.api_stats.size() == 1);
    CHECK(r.api_stats.at("1234").at("LdrGetProcedureAddress") == 5);
    CHECK(r.summary.empty());
    CHECK(r.strings.empty());
    CHECK(r.network.connects_ip.empty());
    CHECK(r.network.connects_host.empty());
    CHECK(r.network.resolves_host.empty());
    CHECK(r.dropped.empty());
    CHECK(r.signatures.empty());
  }

  TEST_CASE("signature order is preserved") {
    const auto r = parse_report(R"({"signatures": ["packer_entropy", "allocates_rwx"]})");
    CHECK(r.signatures == std::vector<std::string>{"packer_entropy", "allocates_rwx"});
  }

  TEST_CASE("signature objects contribute their name") {
    const auto r = parse_report(R"({"signatures": [{"name": "antiemu_wine", "severity": 2}, 7, {"x": 1}]})");
    CHECK(r.signatures == std::vector<std::string>{"antiemu_wine"});
  }

  TEST_CASE("syntax errors raise MalformedDocument") {
    CHECK_THROWS_AS(parse_report("{not json"), MalformedDocument);
    CHECK_THROWS_AS(parse_report(""), MalformedDocument);
  }

  TEST_CASE("parse_report is total on valid JSON of any shape") {
    for (const char* doc : {"null", "[]", "42", "\"s\"", "{}", R"({"behavior": 3})", R"({"behavior": {"summary": []}})",
                            R"({"strings": {"a": 1}})", R"({"dropped": [1, "x", {"extension": 5}]})",
                            R"({"behavior": {"apistats": {"1": {"A": -3, "B": "x", "C": 2.5}}}})"}) {
      CAPTURE(doc);
      CHECK_NOTHROW(parse_report(doc));
    }
  }

  TEST_CASE("negative counts clamp to zero") {
    const auto r = parse_report(R"({"behavior": {"apistats": {"1": {"A": -3, "B": 4, "C": 2.5}}}})");
    CHECK(r.api_stats.at("1").at("A") == 0);
    CHECK(r.api_stats.at("1").at("B") == 4);
    CHECK(r.api_stats.at("1").at("C") == 2);
  }

  TEST_CASE("strings are kept byte for byte") {
    const auto r = parse_report(R"({"strings": ["  Mixed Case  ", "tab\there", "café", ""]})");
    REQUIRE(r.strings.size() == 4);
    CHECK(r.strings[0] == "  Mixed Case  ");
    CHECK(r.strings[1] == "tab\there");
    CHECK(r.strings[2] == "caf\xc3\xa9");
    CHECK(r.strings[3].empty());
  }

  TEST_CASE("network keys are read from both locations") {
    const auto r = parse_report(
        R"({"network": {"connects_ip": ["1.2.3.4"]}, "behavior": {"summary": {"resolves_host": ["yahoo.com"]}}})");
    CHECK(r.network.connects_ip == std::vector<std::string>{"1.2.3.4"});
    CHECK(r.network.resolves_host == std::vector<std::string>{"yahoo.com"});
  }

  TEST_CASE("dropped records keep extension and type") {
    const auto r = parse_report(R"({"dropped": [{"extension": ".exe", "type": "zip_archive_data"}]})");
    REQUIRE(r.dropped.size() == 1);
    CHECK(r.dropped[0].extension == ".exe");
    CHECK(r.dropped[0].type == "zip_archive_data");
  }

  TEST_CASE("filename rules") {
    CHECK(is_report_filename("12.json"));
    CHECK(is_report_filename("12"));
    CHECK(is_report_filename("abc.json"));
    CHECK_FALSE(is_report_filename("notes.txt"));
    CHECK_FALSE(is_report_filename(".json"));
    CHECK_FALSE(is_report_filename(""));
    CHECK(sample_id_from_filename("12.json") == "12");
    CHECK(sample_id_from_filename("12") == "12");
    CHECK(sample_id_from_filename("abc.json") == "abc");
  }

  TEST_CASE("sample id ordering") {
    CHECK(sample_id_less("3", "12"));
    CHECK_FALSE(sample_id_less("12", "3"));
    CHECK(sample_id_less("999", "a"));
    CHECK(sample_id_less("abc", "abd"));
    CHECK(sample_id_less("03", "3"));
    CHECK_FALSE(sample_id_less("3", "03"));
    CHECK(sample_id_less("99999999999999999999", "100000000000000000000"));
  }

  TEST_CASE("directory loading orders ids numerically") {
    oracle::TempDir dir("report");
    put(dir.path() / "12.json", "{}");
    put(dir.path() / "3.json", "{}");
    const auto batch = load_report_dir(dir.path());
    REQUIRE(batch.reports.size() == 2);
    CHECK(batch.reports[0].sample_id == "3");
    CHECK(batch.reports[1].sample_id == "12");
    CHECK(batch.skipped.empty());
  }

  TEST_CASE("empty directory gives an empty batch") {
    oracle::TempDir dir("report");
    const auto batch = load_report_dir(dir.path());
    CHECK(batch.reports.empty());
    CHECK(batch.skipped.empty());
  }

  TEST_CASE("malformed files go to the skip list") {
    oracle::TempDir dir("report");
    put(dir.path() / "1.json", "{}");
    put(dir.path() / "2.json", "{broken");
    put(dir.path() / "3", R"({"strings": ["x"]})");
    put(dir.path() / "readme.md", "ignored");
    const auto batch = load_report_dir(dir.path(), 2);
    CHECK(batch.reports.size() == 2);
    REQUIRE(batch.skipped.size() == 1);
    CHECK(batch.skipped[0].filename == "2.json");
    const auto text = format_skip_list(batch.skipped);
    CHECK(text.rfind("2.json\t", 0) == 0);
    CHECK(text.back() == '\n');
    CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  }

  TEST_CASE("duplicate ids are fatal") {
    oracle::TempDir dir("report");
    put(dir.path() / "7", "{}");
    put(dir.path() / "7.json", "{}");
    CHECK_THROWS_AS(load_report_dir(dir.path()), DuplicateSampleId);
  }

  TEST_CASE("missing directory is fatal") {
    CHECK_THROWS_AS(load_report_dir("/nonexistent/mlran/reports"), DirectoryNotFound);
  }

  TEST_CASE("order depends on the filename set alone") {
    oracle::TempDir a("report"), b("report");
    for (const char* n : {"5.json", "x.json", "40", "7.json"}) put(a.path() / n, "{}");
    for (const char* n : {"7.json", "40", "x.json", "5.json"}) put(b.path() / n, "{}");
    const auto ba = load_report_dir(a.path(), 1);
    const auto bb = load_report_dir(b.path(), 3);
    REQUIRE(ba.reports.size() == bb.reports.size());
    for (std::size_t i = 0; i < ba.reports.size(); ++i) CHECK(ba.reports[i].sample_id == bb.reports[i].sample_id);
    CHECK(ba.reports[0].sample_id == "5");
    CHECK(ba.reports[3].sample_id == "x");
  }
}
