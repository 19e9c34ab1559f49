#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "dlot/config.hpp"
#include "dlot/journal.hpp"
#include "dlot/scheduler.hpp"
#include "dlot/session.hpp"
#include "dlot/time.hpp"

namespace dlot::service {

/// Idempotency key: at most one accepted observation per key per session.
struct SubmissionKey {
    std::string observer_id;
    std::uint64_t prompt_index = 0;
    std::string subject_id;

    auto operator<=>(const SubmissionKey&) const = default;
};

struct SubmissionRequest {
    std::uint64_t prompt_index = 0;
    std::string subject_id;
    Selections selections;
    ObservationStatus status = ObservationStatus::kLogged;  // logged or skipped
    std::optional<std::string> client_sent_at;              // informational only
};

enum class RejectReason {
    kBadToken,
    kNotRunning,
    kUnknownPrompt,
    kLate,
    kSubjectMismatch,
    kInvalidSelection,
    kKeyConflict,
    kReadOnly,
};

const char* to_string(RejectReason reason);

struct SubmitResult {
    bool accepted = false;
    std::uint64_t seq = 0;
    Timestamp logged_at{};
    bool duplicate = false;  // retransmission answered with the original ack
    RejectReason reason = RejectReason::kBadToken;
    std::string message;
};

/// A JSON event pushed to connected observers. `terminal` marks the last one.
struct StreamEvent {
    std::string json;
    bool terminal = false;
};

using EventSink = std::function<void(const StreamEvent&)>;

struct HostStats {
    std::size_t observations = 0;
    std::size_t idempotency_keys = 0;
    std::size_t open_prompt_resolutions = 0;
    std::size_t subscribers = 0;
    std::size_t tokens = 0;
    std::uint64_t journal_entries = 0;
};

/// Owns one session: its journal writer, scheduler, reducer state, observer
/// credentials and event subscribers. Every mutation runs under one mutex, so
/// journal records and state transitions form a single total order.
class SessionHost {
public:
    /// Validated config; journals the config snapshot into `<dir>/<session_id>.dlotj`.
    static std::shared_ptr<SessionHost> create(SessionConfig config, const std::filesystem::path& dir, Clock clock,
                                               Durability durability = Durability::kSyncEachAppend);

    /// Rebuilds a host from an existing journal without advancing time.
    static std::shared_ptr<SessionHost> recover(const std::filesystem::path& journal_path, Clock clock,
                                                Durability durability = Durability::kSyncEachAppend);

    SessionHost(const SessionHost&) = delete;
    SessionHost& operator=(const SessionHost&) = delete;

    const std::string& session_id() const { return session_id_; }

    /// Issues a bearer token for an observer listed in the config. Throws
    /// kUnknownObserver or kConflict (already registered).
    std::string register_observer(const std::string& observer_id);

    /// created -> running at the current clock reading.
    Timestamp start();

    /// Advances the scheduler to the current clock reading, journaling prompt
    /// events and missed observations and pushing them to subscribers.
    void tick();

    SubmitResult submit(const std::string& token, const SubmissionRequest& request);

    /// running -> ended; seals the journal and closes every stream.
    Timestamp end();

    /// Registers a stream consumer. The sink immediately receives the replay
    /// message (the open prompt, or a heartbeat when none is open) and is then
    /// called under the host lock for every event, so it must not block.
    /// Throws kUnauthorized on a bad token.
    std::uint64_t subscribe(const std::string& token, EventSink sink);
    void unsubscribe(std::uint64_t subscription);

    /// Heartbeat JSON for periodic keep-alives.
    std::string heartbeat();

    SessionState snapshot() const;
    SchedulerState scheduler() const;
    Json status_json() const;
    HostStats stats() const;
    std::filesystem::path journal_path() const;

private:
    SessionHost(SessionState state, JournalWriter journal, Clock clock, Durability durability);

    Timestamp now_locked();
    void tick_locked(Timestamp now);
    void append_locked(EntryKind kind, Timestamp ts, Json payload);
    void apply_locked(Observation obs);
    void on_opened_locked(const PromptSpec& prompt, Timestamp now);
    void on_expired_locked(const PromptSpec& prompt, Timestamp now);
    void broadcast_locked(const StreamEvent& event);
    void maybe_close_prompt_locked(const PromptSpec& prompt);
    std::string heartbeat_locked();
    void sync_locked();

    mutable std::mutex mu_;
    std::string session_id_;
    SessionState state_;
    std::optional<SchedulerState> scheduler_;
    JournalWriter journal_;
    Clock clock_;
    Durability durability_;
    Timestamp last_now_{};

    std::map<std::string, std::string> tokens_;  // token -> observer id
    std::map<std::string, std::string> issued_;  // observer id -> token
    struct Ack {
        std::uint64_t seq;
        Timestamp logged_at;
        Selections selections;
        ObservationStatus status;
    };
    std::map<SubmissionKey, Ack> acks_;
    std::map<std::string, PromptOutcome> resolutions_;  // observers that answered the open prompt
    std::map<std::uint64_t, EventSink> subscribers_;
    std::uint64_t next_subscription_ = 1;
};

/// All sessions served by one process, keyed by session id, persisted under one directory.
class SessionRegistry {
public:
    SessionRegistry(std::filesystem::path data_dir, Clock clock, Durability durability = Durability::kSyncEachAppend);

    /// Recovers every `*.dlotj` journal in the data directory. Returns the
    /// number of sessions loaded; unreadable journals are reported via `errors`.
    std::size_t recover_all(std::vector<std::string>* errors = nullptr);

    struct CreateResult {
        std::shared_ptr<SessionHost> host;
        std::vector<Violation> violations;
    };

    /// Validates the document; throws kConflict for a duplicate session id.
    CreateResult create(const Json& document);

    std::shared_ptr<SessionHost> find(const std::string& session_id) const;
    std::vector<std::shared_ptr<SessionHost>> all() const;
    void tick_all();

    const Clock& clock() const { return clock_; }

private:
    std::filesystem::path data_dir_;
    Clock clock_;
    Durability durability_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<SessionHost>> hosts_;
};

}  // namespace dlot::service
