#include <fstream>

#include "doctest.h"
#include "medgan/errors.hpp"
#include "medgan/image_io.hpp"
#include "medgan/study.hpp"
#include "suites.hpp"

using namespace medgan;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fixture_dir() {
  const fs::path d = fs::temp_directory_path() / "medgan-test-study";
  fs::remove_all(d);
  for (const char* f : {"gt.png", "a.png", "b.png"}) write_png(d / f, GrayImage(4, 4, 10));
  return d;
}

json manifest(int n) {
  json m = {{"seed", 5}, {"triads", json::array()}};
  for (int i = 0; i < n; ++i) {
    m["triads"].push_back({{"trial_id", "t" + std::to_string(i)},
                           {"target", "gt.png"},
                           {"candidates", {{{"method", "medgan"}, {"image", "a.png"}}, {{"method", "cgan"}, {"image", "b.png"}}}}});
  }
  return m;
}

json response(const std::string& rater, const std::string& trial, int choice = 0, json scores = {2, 3, 4}) {
  return {{"rater", rater}, {"trial_id", trial}, {"real_choice", choice}, {"scores", scores}};
}

std::string field_of(StudyService& s, const json& body) {
  try {
    s.submit(body);
  } catch (const ValidationError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST_CASE("HTTP session, validation, report and randomization") {
  const auto r = suites::study(fs::temp_directory_path() / "medgan-test-study-suite");
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("orderings") {
  const auto& orders = presentation_orders();
  std::set<std::array<int, 3>> distinct(orders.begin(), orders.end());
  CHECK(distinct.size() == 6);
  CHECK(ordering_index(1, "r", "t") == ordering_index(1, "r", "t"));
  std::set<std::size_t> seen;
  for (int i = 0; i < 60; ++i) seen.insert(ordering_index(1, "r", "t" + std::to_string(i)));
  CHECK(seen.size() == 6);
}

TEST_CASE("60-triad manifest exposes 60 trials without provenance") {
  const auto dir = fixture_dir();
  StudyService s(StudyManifest::from_json(manifest(60), dir), dir / "results.ndjson");
  CHECK(s.total() == 60);
  std::size_t served = 0;
  for (;;) {
    const json t = s.next_trial("rater-a");
    if (t.at("done").get<bool>()) break;
    const std::string dump = t.dump();
    CHECK(dump.find("\"medgan\"") == std::string::npos);
    CHECK(dump.find("ground-truth") == std::string::npos);
    CHECK(dump.find(".png") == std::string::npos);
    for (const auto& img : t.at("images")) {
      const std::string url = img.at("url");
      CHECK(s.image_for_token(url.substr(url.rfind('/') + 1)).has_value());
    }
    s.submit(response("rater-a", t.at("trial_id")));
    ++served;
  }
  CHECK(served == 60);
  CHECK(s.records().size() == 60);
}

TEST_CASE("field-level validation") {
  const auto dir = fixture_dir();
  StudyService s(StudyManifest::from_json(manifest(2), dir), dir / "results.ndjson");
  CHECK(field_of(s, json::array()) == "body");
  CHECK(field_of(s, response("", "t0")) == "rater");
  CHECK(field_of(s, response("r", "t9")) == "trial_id");
  CHECK(field_of(s, response("r", "t0", 3)) == "real_choice");
  CHECK(field_of(s, response("r", "t0", -1)) == "real_choice");
  CHECK(field_of(s, response("r", "t0", 0, {1, 2})) == "scores");
  CHECK(field_of(s, response("r", "t0", 0, {1, 0, 2})) == "scores[1]");
  CHECK(field_of(s, response("r", "t0", 0, {1, 2, "4"})) == "scores[2]");
  CHECK_THROWS_AS(s.next_trial(""), ValidationError);
  CHECK(s.records().empty());
}

TEST_CASE("duplicates are rejected and state survives a restart") {
  const auto dir = fixture_dir();
  {
    StudyService s(StudyManifest::from_json(manifest(2), dir), dir / "results.ndjson");
    s.submit(response("r", "t0", 1, {4, 4, 4}));
    CHECK_THROWS_AS(s.submit(response("r", "t0", 2, {1, 1, 1})), DuplicateResponseError);
    CHECK(s.submit(response("other", "t0")).rater == "other");
  }
  StudyService again(StudyManifest::from_json(manifest(2), dir), dir / "results.ndjson");
  CHECK(again.records().size() == 2);
  CHECK_THROWS_AS(again.submit(response("r", "t0")), DuplicateResponseError);
  CHECK(again.next_trial("r").at("trial_id") == "t1");
  const auto stored = load_study_records(dir / "results.ndjson");
  CHECK(stored.front().scores == std::array<int, 3>{4, 4, 4});
}

TEST_CASE("records map slots back to methods") {
  const auto dir = fixture_dir();
  StudyService s(StudyManifest::from_json(manifest(1), dir), dir / "results.ndjson");
  const auto r = s.submit(response("r", "t0", 2));
  const auto& order = presentation_orders()[r.ordering];
  const std::array<std::string, 3> labels{kGroundTruth, "medgan", "cgan"};
  for (std::size_t i = 0; i < 3; ++i) CHECK(r.slots[i] == labels[static_cast<std::size_t>(order[i])]);
  CHECK(r.chosen() == r.slots[2]);
  CHECK(StudyRecord::from_json(r.to_json()).to_json() == r.to_json());
}

TEST_CASE("report statistics") {
  std::vector<StudyRecord> recs(3);
  recs[0].slots = {"medgan", kGroundTruth, "cgan"};
  recs[0].scores = {3, 4, 1};
  recs[0].real_choice = 1;
  recs[1].slots = {kGroundTruth, "medgan", "cgan"};
  recs[1].scores = {4, 4, 2};
  recs[1].real_choice = 1;
  recs[2].slots = {"cgan", "medgan", kGroundTruth};
  recs[2].scores = {2, 3, 4};
  recs[2].real_choice = 2;
  const auto rows = study_report(recs);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].method == kGroundTruth);
  CHECK(rows[0].real_pct == doctest::Approx(200.0 / 3));
  CHECK(rows[1].method == "cgan");
  CHECK(rows[1].real_pct == 0.0);
  CHECK(rows[2].mean == doctest::Approx(10.0 / 3));
  CHECK(rows[2].sd == doctest::Approx(0.4714).epsilon(1e-4));
  CHECK(rows[2].real_pct == doctest::Approx(100.0 / 3));
  const auto j = study_report_json(rows);
  CHECK(j.at("sd_convention").get<std::string>().find("population") != std::string::npos);
  CHECK(chi_square_uniform({10, 10, 10}) == 0.0);
  CHECK(chi_square_uniform({20, 0}) == doctest::Approx(20.0));
}

TEST_CASE("manifest errors") {
  CHECK_THROWS_AS(StudyManifest::from_json(json{{"triads", {{{"trial_id", "x"}}}}}), ConfigError);
  json dup = manifest(2);
  dup["triads"][1]["trial_id"] = "t0";
  CHECK_THROWS_AS(StudyManifest::from_json(dup), ConfigError);
}
