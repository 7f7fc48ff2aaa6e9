#include "medgan/study.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "medgan/digest.hpp"
#include "medgan/errors.hpp"
#include "medgan/rng.hpp"

namespace medgan {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  std::ostringstream os;
  os << buf << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
  return os.str();
}

fs::path resolve(const fs::path& p, const fs::path& base) { return p.is_absolute() || base.empty() ? p : base / p; }

int require_int(const json& body, const std::string& field, int lo, int hi) {
  if (!body.contains(field)) throw ValidationError(field, "is required");
  const json& v = body.at(field);
  if (!v.is_number_integer()) throw ValidationError(field, "must be an integer");
  const auto x = v.get<long long>();
  if (x < lo || x > hi) {
    throw ValidationError(field, "must be between " + std::to_string(lo) + " and " + std::to_string(hi));
  }
  return static_cast<int>(x);
}

}  // namespace

StudyManifest StudyManifest::from_json(const json& j, const fs::path& base_dir) {
  StudyManifest m;
  try {
    m.seed = j.value("seed", std::uint64_t{0});
    std::set<std::string> ids;
    for (const auto& t : j.at("triads")) {
      StudyTriad triad;
      triad.trial_id = t.at("trial_id").get<std::string>();
      if (!ids.insert(triad.trial_id).second) throw ConfigError("study manifest: duplicate trial_id '" + triad.trial_id + "'");
      triad.target = resolve(t.at("target").get<std::string>(), base_dir);
      const auto& cands = t.at("candidates");
      if (cands.size() != 2) throw ConfigError("study manifest: trial '" + triad.trial_id + "' needs exactly 2 candidates");
      for (std::size_t k = 0; k < 2; ++k) {
        triad.methods[k] = cands[k].at("method").get<std::string>();
        triad.images[k] = resolve(cands[k].at("image").get<std::string>(), base_dir);
        if (triad.methods[k] == kGroundTruth) throw ConfigError("study manifest: method name '" + triad.methods[k] + "' is reserved");
      }
      if (triad.methods[0] == triad.methods[1]) {
        throw ConfigError("study manifest: trial '" + triad.trial_id + "' compares a method with itself");
      }
      m.triads.push_back(std::move(triad));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed study manifest: ") + e.what());
  }
  if (m.triads.empty()) throw ConfigError("study manifest lists no triads");
  return m;
}

StudyManifest StudyManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open study manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

const std::array<std::array<int, 3>, 6>& presentation_orders() {
  static const std::array<std::array<int, 3>, 6> orders{
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  return orders;
}

std::size_t ordering_index(std::uint64_t seed, const std::string& rater, const std::string& trial_id) {
  return static_cast<std::size_t>(derive_seed(derive_seed(seed, rater), trial_id) % 6);
}

json StudyRecord::to_json() const {
  json scores_by = json::object();
  for (std::size_t s = 0; s < 3; ++s) scores_by[slots[s]] = scores[s];
  return {{"schema", kResponseSchema},
          {"trial_id", trial_id},
          {"rater", rater},
          {"seed", seed},
          {"ordering", ordering},
          {"slots", slots},
          {"real_choice", real_choice},
          {"chosen", chosen()},
          {"scores", scores},
          {"scores_by_source", scores_by},
          {"presented_at", presented_at},
          {"submitted_at", submitted_at}};
}

StudyRecord StudyRecord::from_json(const json& j) {
  StudyRecord r;
  r.trial_id = j.at("trial_id");
  r.rater = j.at("rater");
  r.seed = j.value("seed", std::uint64_t{0});
  r.ordering = j.value("ordering", std::size_t{0});
  r.slots = j.at("slots").get<std::array<std::string, 3>>();
  r.real_choice = j.at("real_choice");
  r.scores = j.at("scores").get<std::array<int, 3>>();
  r.presented_at = j.value("presented_at", "");
  r.submitted_at = j.value("submitted_at", "");
  if (r.real_choice < 0 || r.real_choice > 2) throw ValidationError("real_choice", "must be 0, 1 or 2");
  for (int s : r.scores) {
    if (s < 1 || s > 4) throw ValidationError("scores", "each score must be between 1 and 4");
  }
  return r;
}

std::vector<StudyRecord> load_study_records(const fs::path& ndjson) {
  std::vector<StudyRecord> out;
  std::ifstream in(ndjson);
  if (!in) throw ConfigError("cannot open study results " + ndjson.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(StudyRecord::from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw FormatError(ndjson.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

StudyService::StudyService(StudyManifest manifest, fs::path results_file)
    : manifest_(std::move(manifest)), results_file_(std::move(results_file)) {
  if (fs::exists(results_file_)) {
    for (auto& r : load_study_records(results_file_)) {
      answered_.emplace(r.rater, r.trial_id);
      records_.push_back(std::move(r));
    }
  } else if (results_file_.has_parent_path()) {
    fs::create_directories(results_file_.parent_path());
  }
}

const StudyTriad* StudyService::find(const std::string& trial_id) const {
  for (const auto& t : manifest_.triads) {
    if (t.trial_id == trial_id) return &t;
  }
  return nullptr;
}

std::string StudyService::token(const std::string& rater, const std::string& trial_id, std::size_t slot) const {
  const std::string key = std::to_string(manifest_.seed) + '\n' + rater + '\n' + trial_id + '\n' + std::to_string(slot);
  return sha256_hex(key).substr(0, 32);
}

json StudyService::next_trial(const std::string& rater) {
  if (rater.empty()) throw ValidationError("rater", "is required");
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < manifest_.triads.size(); ++i) {
    const StudyTriad& t = manifest_.triads[i];
    if (answered_.count({rater, t.trial_id})) continue;
    const auto& order = presentation_orders()[ordering_index(manifest_.seed, rater, t.trial_id)];
    const std::array<const fs::path*, 3> sources{&t.target, &t.images[0], &t.images[1]};
    json images = json::array();
    for (std::size_t slot = 0; slot < 3; ++slot) {
      const std::string tok = token(rater, t.trial_id, slot);
      tokens_[tok] = *sources[static_cast<std::size_t>(order[slot])];
      images.push_back({{"slot", slot}, {"url", "/api/image/" + tok}});
    }
    presented_at_.try_emplace({rater, t.trial_id}, utc_now());
    return {{"schema", kTrialSchema},
            {"done", false},
            {"trial_id", t.trial_id},
            {"index", i + 1},
            {"completed", answered_count_unlocked(rater)},
            {"total", manifest_.triads.size()},
            {"images", images}};
  }
  return {{"schema", kTrialSchema}, {"done", true}, {"total", manifest_.triads.size()}};
}

StudyRecord StudyService::submit(const json& body) {
  if (!body.is_object()) throw ValidationError("body", "must be a JSON object");
  if (!body.contains("rater") || !body.at("rater").is_string() || body.at("rater").get<std::string>().empty()) {
    throw ValidationError("rater", "must be a non-empty string");
  }
  if (!body.contains("trial_id") || !body.at("trial_id").is_string()) {
    throw ValidationError("trial_id", "must be a string");
  }
  const std::string rater = body.at("rater"), trial_id = body.at("trial_id");
  const StudyTriad* t = find(trial_id);
  if (!t) throw ValidationError("trial_id", "unknown trial '" + trial_id + "'");
  const int choice = require_int(body, "real_choice", 0, 2);
  if (!body.contains("scores") || !body.at("scores").is_array() || body.at("scores").size() != 3) {
    throw ValidationError("scores", "must be an array of 3 integers");
  }
  std::array<int, 3> scores{};
  for (std::size_t s = 0; s < 3; ++s) {
    const json& v = body.at("scores")[s];
    if (!v.is_number_integer() || v.get<long long>() < 1 || v.get<long long>() > 4) {
      throw ValidationError("scores[" + std::to_string(s) + "]", "must be an integer between 1 and 4");
    }
    scores[s] = v.get<int>();
  }

  StudyRecord r;
  r.trial_id = trial_id;
  r.rater = rater;
  r.seed = manifest_.seed;
  r.ordering = ordering_index(manifest_.seed, rater, trial_id);
  const std::array<std::string, 3> labels{kGroundTruth, t->methods[0], t->methods[1]};
  const auto& order = presentation_orders()[r.ordering];
  for (std::size_t s = 0; s < 3; ++s) r.slots[s] = labels[static_cast<std::size_t>(order[s])];
  r.real_choice = choice;
  r.scores = scores;
  r.submitted_at = utc_now();

  std::lock_guard lock(mu_);
  if (answered_.count({rater, trial_id})) {
    throw DuplicateResponseError("rater '" + rater + "' already answered trial '" + trial_id + "'");
  }
  auto it = presented_at_.find({rater, trial_id});
  r.presented_at = it != presented_at_.end() ? it->second : r.submitted_at;
  std::ofstream out(results_file_, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + results_file_.string());
  out << r.to_json().dump() << '\n';
  out.flush();
  answered_.emplace(rater, trial_id);
  records_.push_back(r);
  return r;
}

std::optional<fs::path> StudyService::image_for_token(const std::string& token) const {
  std::lock_guard lock(mu_);
  auto it = tokens_.find(token);
  if (it == tokens_.end()) return std::nullopt;
  return it->second;
}

std::vector<StudyRecord> StudyService::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::size_t StudyService::answered_count_unlocked(const std::string& rater) const {
  std::size_t n = 0;
  for (const auto& [r, t] : answered_) n += r == rater;
  return n;
}

std::vector<StudyReportRow> study_report(const std::vector<StudyRecord>& records) {
  struct Acc {
    std::vector<int> scores;
    std::size_t presented = 0;
    std::size_t chosen = 0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& r : records) {
    for (std::size_t s = 0; s < 3; ++s) {
      Acc& a = acc[r.slots[s]];
      a.scores.push_back(r.scores[s]);
      ++a.presented;
    }
    ++acc[r.chosen()].chosen;
  }
  std::vector<StudyReportRow> rows;
  for (const auto& [method, a] : acc) {
    StudyReportRow row;
    row.method = method;
    row.ratings = a.scores.size();
    double sum = 0;
    for (int s : a.scores) sum += s;
    row.mean = sum / static_cast<double>(a.scores.size());
    double ss = 0;
    for (int s : a.scores) ss += (s - row.mean) * (s - row.mean);
    row.sd = std::sqrt(ss / static_cast<double>(a.scores.size()));
    row.real_pct = 100.0 * static_cast<double>(a.chosen) / static_cast<double>(a.presented);
    rows.push_back(row);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) {
    return (x.method == kGroundTruth) > (y.method == kGroundTruth);
  });
  return rows;
}

std::string study_report_table(const std::vector<StudyReportRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(20) << "method" << std::right << std::setw(8) << "n" << std::setw(10) << "mean"
     << std::setw(10) << "SD" << std::setw(10) << "real %" << "\n";
  os << std::fixed;
  for (const auto& r : rows) {
    os << std::left << std::setw(20) << r.method << std::right << std::setw(8) << r.ratings << std::setprecision(4)
       << std::setw(10) << r.mean << std::setw(10) << r.sd << std::setprecision(2) << std::setw(10) << r.real_pct
       << "\n";
  }
  return os.str();
}

json study_report_json(const std::vector<StudyReportRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"method", r.method}, {"ratings", r.ratings}, {"mean", r.mean}, {"sd", r.sd}, {"real_pct", r.real_pct}});
  }
  return {{"rows", out}, {"sd_convention", "population (divide by n)"}, {"real_pct_basis", "trials where the image was shown"}};
}

double chi_square_uniform(const std::vector<std::size_t>& counts) {
  double total = 0;
  for (auto c : counts) total += static_cast<double>(c);
  if (counts.empty() || total == 0) return 0.0;
  const double expected = total / static_cast<double>(counts.size());
  double chi = 0;
  for (auto c : counts) chi += (static_cast<double>(c) - expected) * (static_cast<double>(c) - expected) / expected;
  return chi;
}

}  // namespace medgan
