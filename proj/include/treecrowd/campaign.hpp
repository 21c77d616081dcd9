#ifndef TREECROWD_CAMPAIGN_HPP
#define TREECROWD_CAMPAIGN_HPP

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "treecrowd/crowdsim.hpp"
#include "treecrowd/error.hpp"
#include "treecrowd/evaluator.hpp"
#include "treecrowd/integrator.hpp"
#include "treecrowd/records.hpp"

namespace treecrowd {

// --- qualification ---------------------------------------------------------------

struct QualificationVerdict {
  bool pass = false;
  std::string reason;
};

/// A qualification answer passes only when it has exactly as many stems as
/// the ground truth and every ground-truth stem is matched one-to-one within
/// 1 m position and 2 m height.
inline QualificationVerdict validate_qualification(const std::vector<CylinderAnnotation>& annotations,
                                                   const std::vector<GroundTruthStem>& gt,
                                                   MatchThresholds thresholds = {}) {
  if (annotations.size() != gt.size())
    return {false, fmt::format("expected {} stems, got {}", gt.size(), annotations.size())};
  const auto m = match_one_to_one(gt, annotations, thresholds);
  if (m.tp() != gt.size())
    return {false, fmt::format("{} of {} stems outside {} m / {} m tolerance", m.fn(), gt.size(),
                               thresholds.d_pos, thresholds.d_h)};
  return {true, "ok"};
}

inline QualificationVerdict validate_qualification(const Submission& submission,
                                                   const std::vector<GroundTruthStem>& gt) {
  return validate_qualification(submission.annotations, gt);
}

// --- domain types ----------------------------------------------------------------

struct QualificationTile {
  std::string tile_id;
  std::vector<GroundTruthStem> gt;
};

struct Campaign {
  std::string campaign_id;
  std::vector<std::string> payload_tiles;
  std::vector<QualificationTile> qualification_tiles;
  std::size_t replication_k = 10;
  double unit_price = 0.10;
  double fee_rate = 0.10;

  void validate() const {
    if (campaign_id.empty()) throw InvalidArgument("campaign_id must not be empty");
    if (replication_k < 1) throw InvalidArgument("replication_k must be >= 1");
    if (qualification_tiles.empty())
      throw InvalidArgument("a campaign needs at least one qualification tile");
    if (payload_tiles.empty()) throw InvalidArgument("a campaign needs payload tiles");
    std::set<std::string> ids(payload_tiles.begin(), payload_tiles.end());
    if (ids.size() != payload_tiles.size()) throw InvalidArgument("duplicate payload tile ids");
  }
};

enum class JobState { reserved, submitted, accepted, rejected, expired };

inline const char* to_string(JobState s) {
  switch (s) {
  case JobState::reserved: return "reserved";
  case JobState::submitted: return "submitted";
  case JobState::accepted: return "accepted";
  case JobState::rejected: return "rejected";
  case JobState::expired: return "expired";
  }
  return "?";
}

struct Job {
  std::string job_id;
  std::string worker_id;
  std::string qualification_tile_id;
  std::string payload_tile_id;
  JobState state = JobState::reserved;
  Timestamp lease_expiry = 0;
  std::size_t alternatives_used = 0;
  std::vector<std::string> no_stems_tiles; ///< payload tiles the worker declared empty
  bool payload_no_stems = false;           ///< alternatives exhausted: payload answer is "no stems"
  std::string reason;                      ///< verdict reason once decided
};

struct TileProgress {
  std::string tile_id;
  std::size_t accepted_count = 0;
  std::set<std::string> accepted_workers;
};

struct LedgerEntry {
  std::string job_id;
  std::string worker_id;
  double amount = 0.0;

  friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

struct CampaignStatus {
  std::string campaign_id;
  std::vector<std::pair<std::string, std::size_t>> accepted_per_tile;
  std::size_t accepted_jobs = 0;
  std::size_t rejected_jobs = 0;
  std::size_t expired_jobs = 0;
  std::size_t live_reservations = 0;
  double owed = 0.0;
  bool complete = false;

  friend bool operator==(const CampaignStatus&, const CampaignStatus&) = default;
};

enum class ProtocolCode { unknown_job, expired_lease, not_reserved, unknown_campaign, invalid_submission };

inline const char* to_string(ProtocolCode c) {
  switch (c) {
  case ProtocolCode::unknown_job: return "unknown_job";
  case ProtocolCode::expired_lease: return "expired_lease";
  case ProtocolCode::not_reserved: return "not_reserved";
  case ProtocolCode::unknown_campaign: return "unknown_campaign";
  case ProtocolCode::invalid_submission: return "invalid_submission";
  }
  return "?";
}

class ProtocolError : public Error {
public:
  ProtocolError(ProtocolCode code, const std::string& what)
      : Error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ProtocolCode code() const noexcept { return code_; }

private:
  ProtocolCode code_;
};

/// Payload answer of a submission: annotations, or nullopt for "no stems".
using PayloadAnswer = std::optional<std::vector<CylinderAnnotation>>;

struct SubmitResult {
  bool accepted = false;
  std::string reason;
};

// --- event log -------------------------------------------------------------------

struct Event {
  std::uint64_t seq = 0;
  Timestamp timestamp = 0;
  std::string kind;
  nlohmann::json payload;
};

/// Append-only, one JSON object per line. Every append is flushed and
/// fsync'ed before it returns. On open, a torn trailing line (crash during an
/// append) is cut off.
class EventLog {
public:
  EventLog() = default;

  explicit EventLog(std::filesystem::path path) : path_(std::move(path)) {
    std::string text;
    if (std::filesystem::exists(path_)) text = detail::read_file(path_);
    std::size_t pos = 0, good_end = 0;
    while (pos < text.size()) {
      const auto nl = text.find('\n', pos);
      if (nl == std::string::npos) break; // unterminated: torn
      const auto line = std::string_view(text).substr(pos, nl - pos);
      try {
        const auto j = nlohmann::json::parse(line);
        Event e{j.at("seq").get<std::uint64_t>(), j.at("timestamp").get<Timestamp>(),
                j.at("kind").get<std::string>(), j.at("payload")};
        if (e.seq != events_.size() + 1) throw ParseError("event sequence gap", events_.size() + 1);
        events_.push_back(std::move(e));
      } catch (const nlohmann::json::exception&) {
        break;
      }
      pos = nl + 1;
      good_end = pos;
    }
    if (good_end != text.size()) {
      // Any bytes after the last complete record are discarded.
      std::filesystem::resize_file(path_, good_end);
    }
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("cannot open event log " + path_.string());
  }

  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;
  EventLog(EventLog&& o) noexcept { *this = std::move(o); }
  EventLog& operator=(EventLog&& o) noexcept {
    std::swap(path_, o.path_);
    std::swap(fd_, o.fd_);
    std::swap(events_, o.events_);
    return *this;
  }
  ~EventLog() {
    if (fd_ >= 0) ::close(fd_);
  }

  const std::vector<Event>& events() const { return events_; }
  bool persistent() const { return fd_ >= 0; }

  const Event& append(Timestamp timestamp, std::string kind, nlohmann::json payload) {
    Event e{events_.size() + 1, timestamp, std::move(kind), std::move(payload)};
    if (fd_ >= 0) {
      nlohmann::ordered_json j;
      j["seq"] = e.seq;
      j["timestamp"] = e.timestamp;
      j["kind"] = e.kind;
      j["payload"] = e.payload;
      const auto line = j.dump() + "\n";
      std::size_t written = 0;
      while (written < line.size()) {
        const auto n = ::write(fd_, line.data() + written, line.size() - written);
        if (n < 0) throw IoError("event log write failed");
        written += static_cast<std::size_t>(n);
      }
      if (::fsync(fd_) != 0) throw IoError("event log fsync failed");
    }
    events_.push_back(std::move(e));
    return events_.back();
  }

private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::vector<Event> events_;
};

// --- service ---------------------------------------------------------------------

struct ServiceOptions {
  std::chrono::milliseconds lease{std::chrono::minutes(30)};
  std::size_t max_alternatives = 3;
  std::uint64_t seed = 0;
};

using Clock = std::function<Timestamp()>;

inline Timestamp system_now() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

inline nlohmann::ordered_json to_record(const Campaign& c) {
  nlohmann::ordered_json j;
  j["campaign_id"] = c.campaign_id;
  j["payload_tiles"] = c.payload_tiles;
  j["qualification_tiles"] = nlohmann::ordered_json::array();
  for (const auto& q : c.qualification_tiles) {
    nlohmann::ordered_json gt = nlohmann::ordered_json::array();
    for (const auto& g : q.gt) gt.push_back(to_record(g));
    j["qualification_tiles"].push_back({{"tile_id", q.tile_id}, {"gt", gt}});
  }
  j["replication_k"] = c.replication_k;
  j["unit_price"] = c.unit_price;
  j["fee_rate"] = c.fee_rate;
  return j;
}

inline Campaign campaign_from_record(const nlohmann::json& j) {
  Campaign c;
  c.campaign_id = j.at("campaign_id").get<std::string>();
  c.payload_tiles = j.at("payload_tiles").get<std::vector<std::string>>();
  for (const auto& q : j.at("qualification_tiles")) {
    QualificationTile t;
    t.tile_id = q.at("tile_id").get<std::string>();
    for (const auto& g : q.at("gt")) t.gt.push_back(gt_from_record(g));
    c.qualification_tiles.push_back(std::move(t));
  }
  c.replication_k = j.value("replication_k", std::size_t{10});
  c.unit_price = j.value("unit_price", 0.10);
  c.fee_rate = j.value("fee_rate", 0.10);
  c.validate();
  return c;
}

inline nlohmann::ordered_json to_record(const Job& job) {
  nlohmann::ordered_json j;
  j["job_id"] = job.job_id;
  j["worker_id"] = job.worker_id;
  j["qualification_tile_id"] = job.qualification_tile_id;
  j["payload_tile_id"] = job.payload_tile_id;
  j["state"] = to_string(job.state);
  j["lease_expiry"] = job.lease_expiry;
  j["alternatives_used"] = job.alternatives_used;
  j["no_stems_tiles"] = job.no_stems_tiles;
  j["payload_no_stems"] = job.payload_no_stems;
  if (!job.reason.empty()) j["reason"] = job.reason;
  return j;
}

inline nlohmann::ordered_json to_record(const CampaignStatus& s) {
  nlohmann::ordered_json j;
  j["campaign_id"] = s.campaign_id;
  j["tiles"] = nlohmann::ordered_json::array();
  for (const auto& [id, n] : s.accepted_per_tile) j["tiles"].push_back({{"tile_id", id}, {"accepted", n}});
  j["accepted_jobs"] = s.accepted_jobs;
  j["rejected_jobs"] = s.rejected_jobs;
  j["expired_jobs"] = s.expired_jobs;
  j["live_reservations"] = s.live_reservations;
  j["owed"] = s.owed;
  j["complete"] = s.complete;
  return j;
}

/// Job dispensing with qualification gating and k-fold replication.
///
/// All state lives in an in-memory projection that is rebuilt purely from
/// the event log; every mutation is appended (and made durable) before it is
/// applied. Mutations are serialised by one mutex.
class CampaignService {
public:
  CampaignService(Campaign campaign, ServiceOptions options = {},
                  std::optional<std::filesystem::path> log_path = std::nullopt,
                  Clock clock = system_now)
      : campaign_(std::move(campaign)), options_(options), clock_(std::move(clock)) {
    campaign_.validate();
    for (const auto& q : campaign_.qualification_tiles) qual_gt_[q.tile_id] = q.gt;
    for (const auto& t : campaign_.payload_tiles) progress_[t].tile_id = t;
    if (log_path) log_ = EventLog(*log_path);
    if (log_.events().empty()) {
      log_.append(clock_(), "campaign_created", to_record(campaign_));
    } else {
      const auto& first = log_.events().front();
      if (first.kind != "campaign_created" ||
          first.payload.at("campaign_id").get<std::string>() != campaign_.campaign_id)
        throw InvalidArgument("event log belongs to a different campaign");
    }
    for (const auto& e : log_.events()) apply(e);
  }

  /// Restores a service purely from an existing log.
  static Campaign campaign_in_log(const std::filesystem::path& log_path) {
    EventLog log(log_path);
    if (log.events().empty()) throw InvalidArgument("event log is empty");
    return campaign_from_record(log.events().front().payload);
  }

  const Campaign& campaign() const { return campaign_; }
  const ServiceOptions& options() const { return options_; }

  /// Reserves the least-covered payload tile this worker can still work on,
  /// paired with a qualification tile. nullopt when no work is available.
  std::optional<Job> next_job(const std::string& worker_id) {
    std::lock_guard lock(mutex_);
    const auto now = clock_();
    expire_stale(now);
    const auto tile = pick_payload(worker_id, {});
    if (!tile) return std::nullopt;
    const auto job_id = fmt::format("job-{:06}", jobs_.size() + 1);
    SimRng rng(derive_seed(options_.seed, job_id));
    const auto& qual = campaign_.qualification_tiles[rng.index(campaign_.qualification_tiles.size())];
    nlohmann::ordered_json p;
    p["job_id"] = job_id;
    p["worker_id"] = worker_id;
    p["qualification_tile_id"] = qual.tile_id;
    p["payload_tile_id"] = *tile;
    p["lease_expiry"] = now + options_.lease.count();
    record(now, "job_reserved", p);
    return jobs_.at(job_id);
  }

  /// The worker declared the current payload tile empty. Swaps in another
  /// payload tile, or once the swap budget is spent (or nothing else is
  /// available) fixes "no stems" as the payload answer.
  Job request_alternative(const std::string& job_id) {
    std::lock_guard lock(mutex_);
    const auto now = clock_();
    const auto& job = live_job(job_id, now);
    if (job.payload_no_stems) return job;
    std::optional<std::string> next;
    if (job.alternatives_used < options_.max_alternatives) {
      auto excluded = job.no_stems_tiles;
      excluded.push_back(job.payload_tile_id);
      next = pick_payload(job.worker_id, excluded);
    }
    nlohmann::ordered_json p;
    p["job_id"] = job_id;
    p["asserted_tile"] = job.payload_tile_id;
    p["new_payload_tile"] = next ? nlohmann::ordered_json(*next) : nlohmann::ordered_json(nullptr);
    record(now, "job_alternative", p);
    return jobs_.at(job_id);
  }

  /// Gates the payload on the qualification answer. Accepted payloads are
  /// stored for integration and owed one unit price.
  SubmitResult submit_job(const std::string& job_id,
                          const std::vector<CylinderAnnotation>& qualification,
                          const PayloadAnswer& payload) {
    std::lock_guard lock(mutex_);
    const auto now = clock_();
    const auto& job = live_job(job_id, now);
    if (job.payload_no_stems && payload && !payload->empty())
      throw ProtocolError(ProtocolCode::invalid_submission,
                          "payload of " + job_id + " is fixed to no stems");
    if (payload) {
      Submission ps;
      ps.annotations = *payload;
      try {
        ps.validate();
      } catch (const InvalidArgument& e) {
        throw ProtocolError(ProtocolCode::invalid_submission, e.what());
      }
    }
    const auto verdict = validate_qualification(qualification, qual_gt_.at(job.qualification_tile_id));
    nlohmann::ordered_json p;
    p["job_id"] = job_id;
    if (!verdict.pass) {
      p["reason"] = verdict.reason;
      record(now, "job_rejected", p);
      return {false, verdict.reason};
    }
    const bool no_stems = job.payload_no_stems || !payload || payload->empty();
    if (no_stems) p["payload"] = "no_stems";
    else p["payload"] = annotations_to_record(*payload);
    p["submitted_at"] = now;
    record(now, "job_accepted", p);
    return {true, verdict.reason};
  }

  CampaignStatus status() const {
    std::lock_guard lock(mutex_);
    CampaignStatus s;
    s.campaign_id = campaign_.campaign_id;
    s.complete = true;
    for (const auto& t : campaign_.payload_tiles) {
      const auto n = progress_.at(t).accepted_count;
      s.accepted_per_tile.emplace_back(t, n);
      if (n < campaign_.replication_k) s.complete = false;
    }
    for (const auto& [id, job] : jobs_) {
      switch (job.state) {
      case JobState::accepted: ++s.accepted_jobs; break;
      case JobState::rejected: ++s.rejected_jobs; break;
      case JobState::expired: ++s.expired_jobs; break;
      case JobState::reserved: ++s.live_reservations; break;
      case JobState::submitted: break;
      }
    }
    for (const auto& e : ledger_) s.owed += e.amount;
    return s;
  }

  CampaignStatus campaign_status(const std::string& campaign_id) const {
    if (campaign_id != campaign_.campaign_id)
      throw ProtocolError(ProtocolCode::unknown_campaign, campaign_id);
    return status();
  }

  Job job(const std::string& job_id) const {
    std::lock_guard lock(mutex_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) throw ProtocolError(ProtocolCode::unknown_job, job_id);
    return it->second;
  }

  std::vector<Job> jobs() const {
    std::lock_guard lock(mutex_);
    std::vector<Job> out;
    for (const auto& [id, j] : jobs_) out.push_back(j);
    return out;
  }

  std::vector<Submission> accepted_submissions() const {
    std::lock_guard lock(mutex_);
    return accepted_;
  }

  std::vector<LedgerEntry> ledger() const {
    std::lock_guard lock(mutex_);
    return ledger_;
  }

  std::vector<Event> events() const {
    std::lock_guard lock(mutex_);
    return log_.events();
  }

  std::vector<IntegratedStem> integrate(const IntegrationParams& params = {}) const {
    return integrate_campaign(accepted_submissions(), params);
  }

private:
  void record(Timestamp now, std::string kind, const nlohmann::ordered_json& payload) {
    const auto& e = log_.append(now, std::move(kind), nlohmann::json::parse(payload.dump()));
    apply(e);
  }

  Job& live_job(const std::string& job_id, Timestamp now) {
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) throw ProtocolError(ProtocolCode::unknown_job, job_id);
    auto& job = it->second;
    if (job.state == JobState::expired)
      throw ProtocolError(ProtocolCode::expired_lease, job_id);
    if (job.state != JobState::reserved)
      throw ProtocolError(ProtocolCode::not_reserved,
                          job_id + " is " + to_string(job.state));
    if (now > job.lease_expiry) {
      record(now, "job_expired", {{"job_id", job_id}});
      throw ProtocolError(ProtocolCode::expired_lease, job_id);
    }
    return job;
  }

  void expire_stale(Timestamp now) {
    std::vector<std::string> stale;
    for (const auto& [id, job] : jobs_)
      if (job.state == JobState::reserved && now > job.lease_expiry) stale.push_back(id);
    for (const auto& id : stale) record(now, "job_expired", {{"job_id", id}});
  }

  std::size_t live_on(const std::string& tile) const {
    std::size_t n = 0;
    for (const auto& [id, job] : jobs_)
      if (job.state == JobState::reserved && job.payload_tile_id == tile) ++n;
    return n;
  }

  bool worker_holds(const std::string& worker, const std::string& tile) const {
    for (const auto& [id, job] : jobs_) {
      if (job.state != JobState::reserved || job.worker_id != worker) continue;
      if (job.payload_tile_id == tile) return true;
      if (std::find(job.no_stems_tiles.begin(), job.no_stems_tiles.end(), tile) != job.no_stems_tiles.end())
        return true;
    }
    return false;
  }

  std::optional<std::string> pick_payload(const std::string& worker,
                                          const std::vector<std::string>& excluded) const {
    std::optional<std::string> best;
    std::size_t best_count = 0;
    for (const auto& [tile, prog] : progress_) { // std::map: ascending tile id
      if (std::find(excluded.begin(), excluded.end(), tile) != excluded.end()) continue;
      if (prog.accepted_workers.count(worker)) continue;
      if (prog.accepted_count + live_on(tile) >= campaign_.replication_k) continue;
      if (worker_holds(worker, tile)) continue;
      if (!best || prog.accepted_count < best_count) {
        best = tile;
        best_count = prog.accepted_count;
      }
    }
    return best;
  }

  void credit(const std::string& tile, const std::string& worker, Submission sub) {
    auto& prog = progress_.at(tile);
    if (prog.accepted_workers.count(worker) || prog.accepted_count >= campaign_.replication_k) return;
    prog.accepted_workers.insert(worker);
    ++prog.accepted_count;
    accepted_.push_back(std::move(sub));
  }

  /// The only place the projection changes.
  void apply(const Event& e) {
    const auto& p = e.payload;
    if (e.kind == "campaign_created") return;
    if (e.kind == "job_reserved") {
      Job j;
      j.job_id = p.at("job_id").get<std::string>();
      j.worker_id = p.at("worker_id").get<std::string>();
      j.qualification_tile_id = p.at("qualification_tile_id").get<std::string>();
      j.payload_tile_id = p.at("payload_tile_id").get<std::string>();
      j.lease_expiry = p.at("lease_expiry").get<Timestamp>();
      jobs_[j.job_id] = j;
      return;
    }
    auto& job = jobs_.at(p.at("job_id").get<std::string>());
    if (e.kind == "job_alternative") {
      job.no_stems_tiles.push_back(p.at("asserted_tile").get<std::string>());
      if (p.at("new_payload_tile").is_null()) {
        job.payload_no_stems = true;
      } else {
        job.payload_tile_id = p.at("new_payload_tile").get<std::string>();
        ++job.alternatives_used;
      }
    } else if (e.kind == "job_expired") {
      job.state = JobState::expired;
    } else if (e.kind == "job_rejected") {
      job.state = JobState::rejected;
      job.reason = p.at("reason").get<std::string>();
    } else if (e.kind == "job_accepted") {
      job.state = JobState::accepted;
      job.reason = "ok";
      const auto at = p.at("submitted_at").get<Timestamp>();
      Submission s;
      s.worker_id = job.worker_id;
      s.tile_id = job.payload_tile_id;
      s.submitted_at = at;
      if (p.at("payload").is_string()) s.no_stems = true;
      else s.annotations = annotations_from_record(p.at("payload"));
      credit(job.payload_tile_id, job.worker_id, std::move(s));
      for (const auto& t : job.no_stems_tiles) {
        if (t == job.payload_tile_id) continue;
        credit(t, job.worker_id, Submission{job.worker_id, t, {}, true, at});
      }
      ledger_.push_back({job.job_id, job.worker_id, campaign_.unit_price});
    } else {
      throw ParseError("unknown event kind '" + e.kind + "'", e.seq);
    }
  }

  Campaign campaign_;
  ServiceOptions options_;
  Clock clock_;
  EventLog log_;
  mutable std::mutex mutex_;

  std::map<std::string, std::vector<GroundTruthStem>> qual_gt_;
  std::map<std::string, TileProgress> progress_;
  std::map<std::string, Job> jobs_;
  std::vector<Submission> accepted_;
  std::vector<LedgerEntry> ledger_;
};

} // namespace treecrowd

#endif // TREECROWD_CAMPAIGN_HPP
