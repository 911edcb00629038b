/**
 * @file pref_service.hpp
 * @brief Pending-query queue and the HTTP endpoints a human labeler uses.
 *
 * Endpoints (JSON):
 *   GET  /queries?limit=N   oldest pending queries, FIFO
 *   POST /labels            {"id": <id>, "label": 0 | 0.5 | 1}
 *   GET  /status            run step, buffer sizes, latest EU/HV
 *
 * The wire schema is in docs/wire_schema.md.
 */
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "pbmorl/envs.hpp"
#include "pbmorl/replay.hpp"
#include "pbmorl/teacher.hpp"

namespace pbmorl {

enum class QueryStatus { Pending, Answered, Expired };

inline const char* to_string(QueryStatus s) {
  switch (s) {
    case QueryStatus::Pending: return "pending";
    case QueryStatus::Answered: return "answered";
    case QueryStatus::Expired: return "expired";
  }
  return "pending";
}

struct QueueConfig {
  std::size_t capacity = 10'000;           // pending queries
  std::chrono::milliseconds expiry{0};     // 0: never
};

struct QueryEnvelope {
  TeacherQuery query;
  QueryStatus status = QueryStatus::Pending;
  std::optional<double> label;
  std::int64_t created_unix_ms = 0;
};

/**
 * @brief FIFO of teacher queries; answered labels go to a PreferenceBuffer.
 *
 * All members are safe to call from the trainer and the HTTP threads.
 */
class QueryQueue {
 public:
  using Clock = std::chrono::steady_clock;

  QueryQueue(QueueConfig cfg, PreferenceBuffer& prefs, std::function<Clock::time_point()> now = Clock::now)
      : cfg_(cfg), prefs_(prefs), now_(std::move(now)) {
    if (cfg_.capacity == 0) throw Error(Errc::ConfigError, "queue capacity must be positive");
  }

  /// Assigns a fresh id (ids are never reused) and appends the query.
  QueryId enqueue(TeacherQuery q) {
    std::lock_guard lock(mutex_);
    expire_locked();
    if (pending_ >= cfg_.capacity) {
      throw Error(Errc::QueueFull, "queue holds " + std::to_string(pending_) + " pending queries");
    }
    q.id = next_id_++;
    q.created_at = now_();
    const QueryId id = q.id;
    const std::int64_t wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                     std::chrono::system_clock::now().time_since_epoch())
                                     .count();
    order_.push_back(id);
    entries_.emplace(id, QueryEnvelope{std::move(q), QueryStatus::Pending, std::nullopt, wall_ms});
    ++pending_;
    return id;
  }

  /// Up to `limit` oldest pending queries.
  [[nodiscard]] std::vector<QueryEnvelope> fetch_pending(std::size_t limit) {
    std::lock_guard lock(mutex_);
    expire_locked();
    std::vector<QueryEnvelope> out;
    for (auto id : order_) {
      if (out.size() >= limit) break;
      out.push_back(entries_.at(id));
    }
    return out;
  }

  /// Records the label; re-sending the same label for an answered query is a no-op.
  void submit_label(QueryId id, double label) {
    if (!is_valid_label(label)) throw Error(Errc::BadLabel, "label must be 0, 0.5 or 1");
    std::unique_lock lock(mutex_);
    expire_locked();
    auto it = entries_.find(id);
    if (it == entries_.end()) throw Error(Errc::UnknownQuery, "no query " + std::to_string(id));
    auto& e = it->second;
    if (e.status == QueryStatus::Expired) throw Error(Errc::UnknownQuery, "query " + std::to_string(id) + " expired");
    if (e.status == QueryStatus::Answered) {
      if (*e.label == label) return;
      throw Error(Errc::AlreadyAnswered, "query " + std::to_string(id) + " already answered");
    }
    prefs_.push(make_preference(e.query.first, e.query.second, e.query.weight, label));
    e.status = QueryStatus::Answered;
    e.label = label;
    // Segments are not needed once the record is stored.
    e.query.first = {};
    e.query.second = {};
    order_.erase(std::find(order_.begin(), order_.end(), id));
    --pending_;
    ++answered_;
    lock.unlock();
    changed_.notify_all();
  }

  /// Blocks until none of `ids` is pending or the timeout passes; true if all settled.
  bool wait_settled(std::span<const QueryId> ids, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    auto settled = [&] {
      expire_locked();
      for (auto id : ids) {
        auto it = entries_.find(id);
        if (it != entries_.end() && it->second.status == QueryStatus::Pending) return false;
      }
      return true;
    };
    return changed_.wait_for(lock, timeout, settled);
  }

  [[nodiscard]] std::optional<TeacherQuery> find(QueryId id) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(id);
    if (it == entries_.end() || it->second.status != QueryStatus::Pending) return std::nullopt;
    return it->second.query;
  }

  [[nodiscard]] std::optional<QueryStatus> status(QueryId id) {
    std::lock_guard lock(mutex_);
    expire_locked();
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second.status;
  }

  struct Counts {
    std::size_t pending = 0;
    std::size_t answered = 0;
    std::size_t expired = 0;
  };
  [[nodiscard]] Counts counts() {
    std::lock_guard lock(mutex_);
    expire_locked();
    return {pending_, answered_, expired_};
  }

 private:
  void expire_locked() {
    if (cfg_.expiry.count() <= 0) return;
    const auto now = now_();
    while (!order_.empty()) {
      auto& e = entries_.at(order_.front());
      if (now - e.query.created_at < cfg_.expiry) break;
      e.status = QueryStatus::Expired;
      e.query.first = {};
      e.query.second = {};
      order_.pop_front();
      --pending_;
      ++expired_;
    }
  }

  QueueConfig cfg_;
  PreferenceBuffer& prefs_;
  std::function<Clock::time_point()> now_;
  mutable std::mutex mutex_;
  std::condition_variable changed_;
  std::map<QueryId, QueryEnvelope> entries_;
  std::deque<QueryId> order_;  // pending ids, oldest first
  QueryId next_id_ = 1;
  std::size_t pending_ = 0;
  std::size_t answered_ = 0;
  std::size_t expired_ = 0;
};

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

inline nlohmann::json render_segment(const Segment& seg, const Environment& env) {
  const auto& names = env.spec().action_names;
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& st : seg.steps) {
    nlohmann::json s{{"state", env.describe_state(st.state)},
                     {"action", st.action < names.size() ? names[st.action] : std::to_string(st.action)}};
    if (auto cell = env.grid_position(st.state)) s["cell"] = {cell->row, cell->col};
    steps.push_back(std::move(s));
  }
  return {{"episode", seg.episode_id}, {"start_step", seg.start_step}, {"steps", std::move(steps)}};
}

inline nlohmann::json envelope_json(const QueryEnvelope& e, const Environment& env) {
  nlohmann::json j{{"id", e.query.id},
                   {"env", env.spec().name},
                   {"weight", e.query.weight.values()},
                   {"created_at_ms", e.created_unix_ms},
                   {"status", to_string(e.status)}};
  if (e.status == QueryStatus::Pending) {
    j["first"] = render_segment(e.query.first, env);
    j["second"] = render_segment(e.query.second, env);
  }
  if (e.label) j["label"] = *e.label;
  return j;
}

/// Mutex-guarded status document published by the trainer.
class StatusBoard {
 public:
  void merge(const nlohmann::json& patch) {
    std::lock_guard lock(mutex_);
    doc_.update(patch);
  }
  [[nodiscard]] nlohmann::json get() const {
    std::lock_guard lock(mutex_);
    return doc_;
  }

 private:
  mutable std::mutex mutex_;
  nlohmann::json doc_ = nlohmann::json::object();
};

// ---------------------------------------------------------------------------
// HTTP server
// ---------------------------------------------------------------------------

inline int http_status(Errc code) {
  switch (code) {
    case Errc::UnknownQuery: return 404;
    case Errc::AlreadyAnswered: return 409;
    case Errc::QueueFull: return 503;
    default: return 400;
  }
}

class PreferenceServer {
 public:
  PreferenceServer(QueryQueue& queue, const Environment& env, const PreferenceBuffer& prefs,
                   const StatusBoard* status = nullptr)
      : queue_(queue), env_(env.clone()), prefs_(prefs), status_(status) {
    routes();
  }
  PreferenceServer(const PreferenceServer&) = delete;
  PreferenceServer& operator=(const PreferenceServer&) = delete;
  ~PreferenceServer() { stop(); }

  /// Serves files under `dir` at / (the labeling UI build).
  bool mount_static(const std::string& dir) { return server_.set_mount_point("/", dir); }

  /// Binds and starts the listener thread. Port 0 picks a free port.
  void start(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(Errc::ConfigError, "cannot bind " + host + ":" + std::to_string(port));
    port_ = bound;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  [[nodiscard]] int port() const noexcept { return port_; }

 private:
  static void reply(httplib::Response& res, int code, const nlohmann::json& body) {
    res.status = code;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(body.dump(), "application/json");
  }

  static void fail(httplib::Response& res, const Error& e) {
    reply(res, http_status(e.code()), {{"error", std::string(to_string(e.code()))}, {"message", e.what()}});
  }

  void routes() {
    server_.Get("/queries", [this](const httplib::Request& req, httplib::Response& res) {
      std::size_t limit = kDefaultLimit;
      if (req.has_param("limit")) {
        try {
          const long v = std::stol(req.get_param_value("limit"));
          if (v < 0) throw std::invalid_argument("negative");
          limit = static_cast<std::size_t>(v);
        } catch (const std::exception&) {
          reply(res, 400, {{"error", "BadRequest"}, {"message", "limit must be a non-negative integer"}});
          return;
        }
      }
      nlohmann::json out = nlohmann::json::array();
      for (const auto& e : queue_.fetch_pending(limit)) out.push_back(envelope_json(e, *env_));
      reply(res, 200, out);
    });

    server_.Post("/labels", [this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception&) {
        reply(res, 400, {{"error", "ParseError"}, {"message", "body is not JSON"}});
        return;
      }
      if (!body.is_object() || !body.contains("id") || !body.contains("label") ||
          !body["id"].is_number_unsigned() || !body["label"].is_number()) {
        reply(res, 400, {{"error", "BadRequest"}, {"message", "expected {\"id\": <unsigned>, \"label\": <number>}"}});
        return;
      }
      const auto id = body["id"].get<QueryId>();
      try {
        queue_.submit_label(id, body["label"].get<double>());
      } catch (const Error& e) {
        fail(res, e);
        return;
      }
      reply(res, 200, {{"ok", true}, {"id", id}});
    });

    server_.Get("/status", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json s = status_ ? status_->get() : nlohmann::json::object();
      const auto c = queue_.counts();
      s["env"] = env_->spec().name;
      s["queries"] = {{"pending", c.pending}, {"answered", c.answered}, {"expired", c.expired}};
      s["preference_records"] = prefs_.size();
      reply(res, 200, s);
    });

    server_.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
  }

  static constexpr std::size_t kDefaultLimit = 50;

  QueryQueue& queue_;
  std::unique_ptr<Environment> env_;
  const PreferenceBuffer& prefs_;
  const StatusBoard* status_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
};

// ---------------------------------------------------------------------------
// Overseer backed by the queue
// ---------------------------------------------------------------------------

/**
 * @brief Posts each round's queries to the queue.
 *
 * With `wait` zero the trainer never blocks and trains on whatever labels
 * have arrived. A positive `wait` blocks each round until its queries are
 * answered or expired, or the wait runs out.
 */
class QueueOverseer final : public Overseer {
 public:
  explicit QueueOverseer(QueryQueue& queue, std::chrono::milliseconds wait = std::chrono::milliseconds{0})
      : queue_(queue), wait_(wait) {}

  void submit(std::vector<TeacherQuery> queries, PreferenceBuffer&) override {
    std::vector<QueryId> ids;
    ids.reserve(queries.size());
    for (auto& q : queries) {
      try {
        ids.push_back(queue_.enqueue(std::move(q)));
      } catch (const Error& e) {
        if (e.code() != Errc::QueueFull) throw;
        dropped_ += queries.size() - ids.size();
        break;
      }
    }
    if (wait_.count() > 0) queue_.wait_settled(ids, wait_);
  }

  [[nodiscard]] bool synchronous() const noexcept override { return false; }
  [[nodiscard]] std::size_t dropped() const noexcept { return dropped_; }

 private:
  QueryQueue& queue_;
  std::chrono::milliseconds wait_;
  std::size_t dropped_ = 0;
};

}  // namespace pbmorl
