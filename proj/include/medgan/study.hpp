#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

namespace medgan {

inline constexpr const char* kTrialSchema = "medgan-study-trial/1";
inline constexpr const char* kResponseSchema = "medgan-study-response/1";

// One triad: the ground-truth image plus two method outputs.
struct StudyTriad {
  std::string trial_id;
  std::filesystem::path target;
  std::array<std::string, 2> methods;
  std::array<std::filesystem::path, 2> images;
};

// {"seed": 17, "triads": [{"trial_id": "t01", "target": "gt/1.png",
//   "candidates": [{"method": "medgan", "image": "..."}, {"method": "pix2pix", "image": "..."}]}]}
struct StudyManifest {
  std::uint64_t seed = 0;
  std::vector<StudyTriad> triads;

  // Relative image paths are resolved against base_dir. Throws ConfigError.
  static StudyManifest from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static StudyManifest load(const std::filesystem::path& path);
};

// Label of the ground-truth image in records and reports.
inline constexpr const char* kGroundTruth = "ground-truth";

// The six presentation orders of (ground truth, candidate A, candidate B);
// entry k lists, per displayed slot, the index into that triple.
const std::array<std::array<int, 3>, 6>& presentation_orders();
// Seeded choice of an order for one (rater, trial).
std::size_t ordering_index(std::uint64_t seed, const std::string& rater, const std::string& trial_id);

struct StudyRecord {
  std::string trial_id;
  std::string rater;
  std::uint64_t seed = 0;
  std::size_t ordering = 0;
  std::array<std::string, 3> slots;  // provenance label shown in each slot
  int real_choice = 0;               // slot chosen as the real image
  std::array<int, 3> scores{};       // per slot, 1..4
  std::string presented_at;
  std::string submitted_at;

  std::string chosen() const { return slots.at(static_cast<std::size_t>(real_choice)); }
  nlohmann::json to_json() const;
  static StudyRecord from_json(const nlohmann::json& j);
};

class DuplicateResponseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Study state independent of any transport. Thread-safe; results are appended
// to an NDJSON file and reloaded on construction.
class StudyService {
 public:
  StudyService(StudyManifest manifest, std::filesystem::path results_file);

  std::size_t total() const noexcept { return manifest_.triads.size(); }
  // Next unanswered trial for the rater, without provenance; {"done": true}
  // once every trial has a response. Throws ValidationError for an empty rater.
  nlohmann::json next_trial(const std::string& rater);
  // Validates and stores a response. Throws ValidationError (field-level) or
  // DuplicateResponseError when (rater, trial) already has a record.
  StudyRecord submit(const nlohmann::json& response);
  std::optional<std::filesystem::path> image_for_token(const std::string& token) const;
  std::vector<StudyRecord> records() const;

 private:
  const StudyTriad* find(const std::string& trial_id) const;
  std::string token(const std::string& rater, const std::string& trial_id, std::size_t slot) const;
  std::size_t answered_count_unlocked(const std::string& rater) const;

  StudyManifest manifest_;
  std::filesystem::path results_file_;
  mutable std::mutex mu_;
  std::vector<StudyRecord> records_;
  std::set<std::pair<std::string, std::string>> answered_;
  std::map<std::pair<std::string, std::string>, std::string> presented_at_;
  std::map<std::string, std::filesystem::path> tokens_;
};

std::vector<StudyRecord> load_study_records(const std::filesystem::path& ndjson);

struct StudyReportRow {
  std::string method;
  std::size_t ratings = 0;
  double mean = 0;
  double sd = 0;        // population standard deviation
  double real_pct = 0;  // share of presented trials where this image was chosen as real
};

// Rows sorted with the ground truth first, then by method name.
std::vector<StudyReportRow> study_report(const std::vector<StudyRecord>& records);
std::string study_report_table(const std::vector<StudyReportRow>& rows);
nlohmann::json study_report_json(const std::vector<StudyReportRow>& rows);

// Pearson chi-square statistic of observed counts against a uniform expectation.
double chi_square_uniform(const std::vector<std::size_t>& counts);

// HTTP front for a StudyService: GET /api/trial/next?rater=, POST
// /api/response, GET /api/image/<token>, and static files for everything else.
class StudyServer {
 public:
  StudyServer(StudyService& service, std::filesystem::path static_dir = {});
  ~StudyServer();
  StudyServer(const StudyServer&) = delete;
  StudyServer& operator=(const StudyServer&) = delete;

  // port 0 binds any free port; returns the bound port.
  int bind(const std::string& host, int port);
  void listen();  // blocking
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace medgan
