#pragma once

// Review service: cases built from verdict records and explanation
// documents, plus an append-only reviewer verdict log. Every verdict is
// written and fsync'ed before it is acknowledged; the in-memory index is
// rebuilt from the log at startup.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aimguard/trajectory.hpp"

namespace httplib {
class Server;
}

namespace aimguard::service {

// First 16 hex digits of sha256(match_id '\0' player_id).
std::string case_id(std::string_view match_id, std::string_view player_id);

enum class CaseStatus { kPending, kReviewed };
std::string_view status_name(CaseStatus status);

struct ReviewVerdict {
  std::string case_id;
  std::string reviewer_id;
  std::string decision;  // cheater | legitimate | inconclusive
  int confidence = 0;    // 1..5
  double review_seconds = 0.0;
  std::string timestamp;

  nlohmann::json to_json() const;
  static ReviewVerdict from_json(const nlohmann::json& j);
};

// Throws ValidationError with the offending field.
ReviewVerdict validate_verdict(const std::string& case_id, const nlohmann::json& body);

struct CaseRecord {
  std::string case_id;
  std::string match_id;
  std::string player_id;
  double probability = 0.0;
  bool verdict = false;
  double threshold = 0.0;
  std::vector<std::pair<std::int64_t, double>> eliminations;  // (elim tick, score)
  std::optional<std::string> explanation;                     // file name inside the explanation dir
  std::string created_at;
  std::vector<ReviewVerdict> reviews;

  CaseStatus status() const { return reviews.empty() ? CaseStatus::kPending : CaseStatus::kReviewed; }
  nlohmann::json agreement() const;
  nlohmann::json to_json() const;
};

struct CaseFilter {
  std::optional<CaseStatus> status;
  std::optional<double> min_p;
  std::optional<bool> flagged;
  std::size_t page = 1;  // 1-based
  std::size_t page_size = 50;
};

struct CasePage {
  std::vector<CaseRecord> cases;
  std::size_t total = 0;
};

class CaseStore {
 public:
  // `verdict_records`: predict output (excluded players are skipped).
  // `explanation_dir` may be empty. The verdict log lives in
  // `store_dir/verdicts.jsonl` and is replayed here.
  CaseStore(const std::vector<nlohmann::json>& verdict_records, std::filesystem::path explanation_dir,
            std::filesystem::path store_dir, trajectory::ScreenSize screen = {});
  ~CaseStore();
  CaseStore(const CaseStore&) = delete;
  CaseStore& operator=(const CaseStore&) = delete;

  // Sorted by probability (descending), then case id.
  CasePage list(const CaseFilter& filter) const;
  CaseRecord get(const std::string& id) const;
  // Explanation file bytes, unmodified.
  std::string explanation(const std::string& id) const;
  nlohmann::json frames(const std::string& id) const;
  ReviewVerdict post_verdict(const std::string& id, const nlohmann::json& body);
  // Verdict log bytes (JSONL).
  std::string audit() const;

  std::size_t size() const;
  std::size_t verdict_count() const;
  std::size_t skipped_log_lines() const { return skipped_lines_; }
  const std::filesystem::path& log_path() const { return log_path_; }

 private:
  const CaseRecord& find(const std::string& id) const;

  mutable std::shared_mutex mutex_;
  std::map<std::string, CaseRecord> cases_;
  std::vector<ReviewVerdict> orphan_reviews_;  // logged verdicts for cases not loaded
  std::filesystem::path explanation_dir_;
  std::filesystem::path log_path_;
  trajectory::ScreenSize screen_;
  int log_fd_ = -1;
  std::size_t verdicts_ = 0;
  std::size_t skipped_lines_ = 0;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 = any free port
  std::optional<std::string> token;  // required in X-Aimguard-Token when set
  std::optional<std::filesystem::path> static_dir;
};

class ReviewServer {
 public:
  ReviewServer(CaseStore& store, ServerOptions options);
  ~ReviewServer();

  // Binds and returns the port (useful with port 0).
  int bind();
  // Blocks until stop().
  bool listen();
  void stop();
  void wait_until_ready() const;

 private:
  CaseStore& store_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace aimguard::service
