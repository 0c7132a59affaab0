#include "aimguard/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <mutex>

#include <fmt/format.h>
#include <httplib.h>

#include "aimguard/error.hpp"
#include "aimguard/features.hpp"
#include "aimguard/util.hpp"

namespace aimguard::service {

namespace {

constexpr std::size_t kMaxPageSize = 500;
constexpr std::size_t kMaxReviewerId = 128;

Error validation(const std::string& field, const std::string& reason) {
  return Error(ErrorKind::kValidation, fmt::format("{}: {}", field, reason));
}

void write_all(int fd, const std::string& data) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorKind::kIo, fmt::format("verdict log write failed: {}", std::strerror(errno)));
    }
    done += static_cast<std::size_t>(n);
  }
}

void fsync_dir(const std::filesystem::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

}  // namespace

std::string case_id(std::string_view match_id, std::string_view player_id) {
  std::string key(match_id);
  key.push_back('\0');
  key.append(player_id);
  return util::sha256_hex(key).substr(0, 16);
}

std::string_view status_name(CaseStatus status) { return status == CaseStatus::kReviewed ? "reviewed" : "pending"; }

nlohmann::json ReviewVerdict::to_json() const {
  return {{"case_id", case_id},
          {"reviewer_id", reviewer_id},
          {"decision", decision},
          {"confidence", confidence},
          {"review_seconds", review_seconds},
          {"timestamp", timestamp}};
}

ReviewVerdict ReviewVerdict::from_json(const nlohmann::json& j) {
  ReviewVerdict v;
  v.case_id = j.at("case_id").get<std::string>();
  v.reviewer_id = j.at("reviewer_id").get<std::string>();
  v.decision = j.at("decision").get<std::string>();
  v.confidence = j.at("confidence").get<int>();
  v.review_seconds = j.at("review_seconds").get<double>();
  v.timestamp = j.at("timestamp").get<std::string>();
  return v;
}

ReviewVerdict validate_verdict(const std::string& id, const nlohmann::json& body) {
  if (!body.is_object()) throw validation("body", "expected a JSON object");
  ReviewVerdict v;
  v.case_id = id;

  const auto reviewer = body.find("reviewer_id");
  if (reviewer == body.end() || !reviewer->is_string()) throw validation("reviewer_id", "required string");
  v.reviewer_id = reviewer->get<std::string>();
  if (v.reviewer_id.empty() || v.reviewer_id.size() > kMaxReviewerId) {
    throw validation("reviewer_id", "must be 1-128 characters");
  }

  const auto decision = body.find("decision");
  if (decision == body.end() || !decision->is_string()) throw validation("decision", "required string");
  v.decision = decision->get<std::string>();
  if (v.decision != "cheater" && v.decision != "legitimate" && v.decision != "inconclusive") {
    throw validation("decision", "must be cheater, legitimate or inconclusive");
  }

  const auto confidence = body.find("confidence");
  if (confidence == body.end() || !confidence->is_number_integer()) throw validation("confidence", "required integer");
  const auto c = confidence->get<std::int64_t>();
  if (c < 1 || c > 5) throw validation("confidence", "must be between 1 and 5");
  v.confidence = static_cast<int>(c);

  const auto seconds = body.find("review_seconds");
  if (seconds == body.end() || !seconds->is_number()) throw validation("review_seconds", "required number");
  v.review_seconds = seconds->get<double>();
  if (!std::isfinite(v.review_seconds) || v.review_seconds < 0.0) {
    throw validation("review_seconds", "must be a finite number >= 0");
  }
  v.timestamp = util::utc_timestamp();
  return v;
}

nlohmann::json CaseRecord::agreement() const {
  std::map<std::string, int> counts{{"cheater", 0}, {"legitimate", 0}, {"inconclusive", 0}};
  for (const auto& r : reviews) ++counts[r.decision];
  const bool unanimous =
      !reviews.empty() && std::all_of(reviews.begin(), reviews.end(),
                                      [&](const ReviewVerdict& r) { return r.decision == reviews.front().decision; });
  return {{"reviews", reviews.size()},
          {"cheater", counts["cheater"]},
          {"legitimate", counts["legitimate"]},
          {"inconclusive", counts["inconclusive"]},
          {"unanimous", unanimous}};
}

nlohmann::json CaseRecord::to_json() const {
  nlohmann::json elims = nlohmann::json::array();
  for (const auto& [tick, score] : eliminations) elims.push_back({{"elim_tick", tick}, {"score", score}});
  nlohmann::json reviews_json = nlohmann::json::array();
  for (const auto& r : reviews) reviews_json.push_back(r.to_json());
  return {{"case_id", case_id},
          {"match_id", match_id},
          {"player_id", player_id},
          {"probability", probability},
          {"verdict", verdict},
          {"threshold", threshold},
          {"eliminations", elims},
          {"explanation", explanation ? nlohmann::json(*explanation) : nlohmann::json(nullptr)},
          {"status", status_name(status())},
          {"created_at", created_at},
          {"verdicts", reviews_json},
          {"agreement", agreement()}};
}

// ---------------------------------------------------------------------------

CaseStore::CaseStore(const std::vector<nlohmann::json>& records, std::filesystem::path explanation_dir,
                     std::filesystem::path store_dir, trajectory::ScreenSize screen)
    : explanation_dir_(std::move(explanation_dir)), screen_(screen) {
  const auto now = util::utc_timestamp();
  for (const auto& r : records) {
    if (!r.contains("verdict") || r.at("verdict").is_null()) continue;
    CaseRecord c;
    c.match_id = r.at("match_id").get<std::string>();
    c.player_id = r.at("player_id").get<std::string>();
    c.case_id = case_id(c.match_id, c.player_id);
    c.probability = r.at("probability").get<double>();
    c.verdict = r.at("verdict").get<bool>();
    c.threshold = r.value("threshold", 0.0);
    const auto scores = r.value("elimination_scores", std::vector<double>{});
    const auto ticks = r.value("elimination_ticks", std::vector<std::int64_t>{});
    for (std::size_t i = 0; i < scores.size(); ++i) {
      c.eliminations.emplace_back(i < ticks.size() ? ticks[i] : 0, scores[i]);
    }
    if (!explanation_dir_.empty()) {
      const auto file = c.case_id + ".json";
      if (std::filesystem::exists(explanation_dir_ / file)) c.explanation = file;
    }
    c.created_at = now;
    const auto id = c.case_id;
    if (!cases_.emplace(id, std::move(c)).second) {
      throw Error(ErrorKind::kConflict, fmt::format("duplicate case for {}/{}", r.at("match_id").get<std::string>(),
                                                    r.at("player_id").get<std::string>()));
    }
  }

  std::filesystem::create_directories(store_dir);
  log_path_ = store_dir / "verdicts.jsonl";
  const bool fresh = !std::filesystem::exists(log_path_);
  if (!fresh) {
    const auto text = util::read_file(log_path_);
    std::size_t start = 0;
    std::optional<std::size_t> torn_at;
    while (start < text.size()) {
      const auto end = text.find('\n', start);
      if (end == std::string::npos) {
        // Torn final write, never acknowledged. Cut it off so the next
        // append starts on a fresh line.
        ++skipped_lines_;
        torn_at = start;
        break;
      }
      const auto line = text.substr(start, end - start);
      start = end + 1;
      if (util::trim(line).empty()) continue;
      try {
        auto v = ReviewVerdict::from_json(nlohmann::json::parse(line));
        ++verdicts_;
        auto it = cases_.find(v.case_id);
        if (it == cases_.end()) {
          orphan_reviews_.push_back(std::move(v));
        } else {
          it->second.reviews.push_back(std::move(v));
        }
      } catch (const std::exception&) {
        ++skipped_lines_;
      }
    }
    if (torn_at) {
      std::error_code ec;
      std::filesystem::resize_file(log_path_, *torn_at, ec);
      if (ec) throw Error(ErrorKind::kIo, fmt::format("cannot truncate {}: {}", log_path_.string(), ec.message()));
    }
  }
  log_fd_ = ::open(log_path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (log_fd_ < 0) {
    throw Error(ErrorKind::kIo, fmt::format("cannot open {}: {}", log_path_.string(), std::strerror(errno)));
  }
  if (fresh) fsync_dir(store_dir);
  if (skipped_lines_ > 0) ::fsync(log_fd_);
}

CaseStore::~CaseStore() {
  if (log_fd_ >= 0) ::close(log_fd_);
}

const CaseRecord& CaseStore::find(const std::string& id) const {
  const auto it = cases_.find(id);
  if (it == cases_.end()) throw Error(ErrorKind::kNotFound, fmt::format("case {} not found", id));
  return it->second;
}

CasePage CaseStore::list(const CaseFilter& filter) const {
  if (filter.page == 0 || filter.page_size == 0 || filter.page_size > kMaxPageSize) {
    throw validation("page", fmt::format("page >= 1 and 1 <= page_size <= {}", kMaxPageSize));
  }
  std::shared_lock lock(mutex_);
  std::vector<const CaseRecord*> hits;
  for (const auto& [_, c] : cases_) {
    if (filter.status && c.status() != *filter.status) continue;
    if (filter.min_p && c.probability < *filter.min_p) continue;
    if (filter.flagged && c.verdict != *filter.flagged) continue;
    hits.push_back(&c);
  }
  std::sort(hits.begin(), hits.end(), [](const CaseRecord* a, const CaseRecord* b) {
    if (a->probability != b->probability) return a->probability > b->probability;
    return a->case_id < b->case_id;
  });
  CasePage page;
  page.total = hits.size();
  const std::size_t first = (filter.page - 1) * filter.page_size;
  for (std::size_t i = first; i < hits.size() && i < first + filter.page_size; ++i) page.cases.push_back(*hits[i]);
  return page;
}

CaseRecord CaseStore::get(const std::string& id) const {
  std::shared_lock lock(mutex_);
  return find(id);
}

std::string CaseStore::explanation(const std::string& id) const {
  std::filesystem::path path;
  {
    std::shared_lock lock(mutex_);
    const auto& c = find(id);
    if (!c.explanation) throw Error(ErrorKind::kNotFound, fmt::format("case {} has no explanation", id));
    path = explanation_dir_ / *c.explanation;
  }
  return util::read_file(path);
}

nlohmann::json CaseStore::frames(const std::string& id) const {
  const auto doc = nlohmann::json::parse(explanation(id));
  nlohmann::json out = nlohmann::json::array();
  for (const auto& el : doc.at("eliminations")) {
    std::vector<trajectory::ScreenPoint> points;
    std::vector<std::pair<std::string, std::vector<double>>> attribution;
    for (const auto name : features::kFeatureNames) attribution.emplace_back(std::string(name), std::vector<double>{});
    const auto elim_tick = el.at("elim_tick").get<std::int64_t>();
    std::size_t elim_index = 0;
    for (const auto& t : el.at("ticks")) {
      trajectory::ScreenPoint p;
      p.tick = t.at("t").get<std::int64_t>();
      p.x = t.at("x").get<double>();
      p.y = t.at("y").get<double>();
      p.fired = t.at("fired").get<bool>();
      p.eliminated = t.at("eliminated").get<bool>();
      if (p.tick == elim_tick) elim_index = points.size();
      points.push_back(p);
      for (auto& [name, values] : attribution) values.push_back(t.at("values").at(name).get<double>());
    }
    auto frames = trajectory::frame_list(points, elim_index, screen_.width, screen_.height, attribution);
    frames["elimination_id"] = el.at("elimination_id");
    out.push_back(std::move(frames));
  }
  return {{"case_id", id}, {"eliminations", out}};
}

ReviewVerdict CaseStore::post_verdict(const std::string& id, const nlohmann::json& body) {
  {
    std::shared_lock lock(mutex_);
    find(id);
  }
  auto verdict = validate_verdict(id, body);
  std::unique_lock lock(mutex_);
  auto& c = cases_.at(id);
  for (const auto& r : c.reviews) {
    if (r.reviewer_id == verdict.reviewer_id) {
      throw Error(ErrorKind::kConflict,
                  fmt::format("reviewer {} already submitted a verdict for case {}", verdict.reviewer_id, id));
    }
  }
  write_all(log_fd_, verdict.to_json().dump() + "\n");
  if (::fsync(log_fd_) != 0) {
    throw Error(ErrorKind::kIo, fmt::format("fsync failed: {}", std::strerror(errno)));
  }
  c.reviews.push_back(verdict);
  ++verdicts_;
  return verdict;
}

std::string CaseStore::audit() const {
  std::shared_lock lock(mutex_);
  return util::read_file(log_path_);
}

std::size_t CaseStore::size() const {
  std::shared_lock lock(mutex_);
  return cases_.size();
}

std::size_t CaseStore::verdict_count() const {
  std::shared_lock lock(mutex_);
  return verdicts_;
}

// ---------------------------------------------------------------------------

namespace {

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotFound:
      return 404;
    case ErrorKind::kConflict:
      return 409;
    case ErrorKind::kValidation:
      return 400;
    default:
      return 500;
  }
}

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind, std::string_view message) {
  send_json(res, status, {{"error", kind}, {"message", message}});
}

template <typename Fn>
auto guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, http_status(e.kind()), to_string(e.kind()), e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, "ValidationError", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "InternalError", e.what());
    }
  };
}

CaseFilter parse_filter(const httplib::Request& req) {
  CaseFilter f;
  if (req.has_param("status")) {
    const auto s = req.get_param_value("status");
    if (s == "pending") {
      f.status = CaseStatus::kPending;
    } else if (s == "reviewed") {
      f.status = CaseStatus::kReviewed;
    } else if (!s.empty()) {
      throw validation("status", "must be pending or reviewed");
    }
  }
  if (req.has_param("min_p") && !req.get_param_value("min_p").empty()) {
    const auto v = util::parse_double(req.get_param_value("min_p"));
    if (!v) throw validation("min_p", "must be a number");
    f.min_p = *v;
  }
  if (req.has_param("flagged") && !req.get_param_value("flagged").empty()) {
    const auto v = util::parse_bool(req.get_param_value("flagged"));
    if (!v) throw validation("flagged", "must be true or false");
    f.flagged = *v;
  }
  const auto positive = [&](const char* name, std::size_t& out) {
    if (!req.has_param(name) || req.get_param_value(name).empty()) return;
    const auto v = util::parse_int(req.get_param_value(name));
    if (!v || *v < 1) throw validation(name, "must be a positive integer");
    out = static_cast<std::size_t>(*v);
  };
  positive("page", f.page);
  positive("page_size", f.page_size);
  return f;
}

}  // namespace

ReviewServer::ReviewServer(CaseStore& store, ServerOptions options)
    : store_(store), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  if (options_.token) {
    s.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (req.path.rfind("/api/", 0) != 0) return httplib::Server::HandlerResponse::Unhandled;
      if (req.get_header_value("X-Aimguard-Token") == *options_.token) return httplib::Server::HandlerResponse::Unhandled;
      send_error(res, 401, "Unauthorized", "missing or wrong X-Aimguard-Token");
      return httplib::Server::HandlerResponse::Handled;
    });
  }

  s.Get("/api/cases", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto page = store_.list(parse_filter(req));
          nlohmann::json body = nlohmann::json::array();
          for (const auto& c : page.cases) body.push_back(c.to_json());
          res.set_header("X-Total-Count", std::to_string(page.total));
          send_json(res, 200, body);
        }));
  s.Get(R"(/api/cases/([0-9a-f]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, store_.get(req.matches[1]).to_json());
        }));
  s.Get(R"(/api/cases/([0-9a-f]+)/explanation)",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          res.status = 200;
          res.set_content(store_.explanation(req.matches[1]), "application/json");
        }));
  s.Get(R"(/api/cases/([0-9a-f]+)/frames)", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, store_.frames(req.matches[1]));
        }));
  s.Post(R"(/api/cases/([0-9a-f]+)/verdicts)",
         guarded([this](const httplib::Request& req, httplib::Response& res) {
           nlohmann::json body;
           try {
             body = nlohmann::json::parse(req.body);
           } catch (const nlohmann::json::exception&) {
             throw validation("body", "malformed JSON");
           }
           send_json(res, 201, store_.post_verdict(req.matches[1], body).to_json());
         }));
  s.Get("/api/audit", guarded([this](const httplib::Request&, httplib::Response& res) {
          res.status = 200;
          res.set_content(store_.audit(), "application/x-ndjson");
        }));
  s.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}, {"cases", store_.size()}, {"verdicts", store_.verdict_count()}});
  });
  if (options_.static_dir) s.set_mount_point("/", options_.static_dir->string());
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::bind() {
  if (options_.port == 0) return server_->bind_to_any_port(options_.host);
  if (!server_->bind_to_port(options_.host, options_.port)) return -1;
  return options_.port;
}

bool ReviewServer::listen() { return server_->listen_after_bind(); }

void ReviewServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void ReviewServer::wait_until_ready() const { server_->wait_until_ready(); }

}  // namespace aimguard::service
