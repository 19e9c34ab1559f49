#include "dlot/service/session_host.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <random>

#include "dlot/error.hpp"

namespace dlot::service {

const char* to_string(RejectReason reason) {
    switch (reason) {
        case RejectReason::kBadToken: return "bad_token";
        case RejectReason::kNotRunning: return "not_running";
        case RejectReason::kUnknownPrompt: return "unknown_prompt";
        case RejectReason::kLate: return "late";
        case RejectReason::kSubjectMismatch: return "subject_mismatch";
        case RejectReason::kInvalidSelection: return "invalid_selection";
        case RejectReason::kKeyConflict: return "key_conflict";
        case RejectReason::kReadOnly: return "read_only";
    }
    return "rejected";
}

namespace {

std::string random_token() {
    std::random_device device;
    std::array<std::uint32_t, 4> words{};  // 128 bits
    for (auto& w : words) w = device();
    std::string token;
    char buf[9];
    for (auto w : words) {
        std::snprintf(buf, sizeof buf, "%08x", w);
        token += buf;
    }
    return token;
}

std::filesystem::path journal_file(const std::filesystem::path& dir, const std::string& session_id) {
    return dir / (session_id + std::string(kJournalExtension));
}

PromptOutcome outcome_of(ObservationStatus status) {
    return status == ObservationStatus::kSkipped ? PromptOutcome::kSkipped : PromptOutcome::kLogged;
}

SubmitResult reject(RejectReason reason, std::string message) {
    SubmitResult r;
    r.accepted = false;
    r.reason = reason;
    r.message = std::move(message);
    return r;
}

void drop_empty_groups(Selections& selections) {
    for (auto it = selections.begin(); it != selections.end();) {
        it = it->second.empty() ? selections.erase(it) : std::next(it);
    }
}

}  // namespace

SessionHost::SessionHost(SessionState state, JournalWriter journal, Clock clock, Durability durability)
    : session_id_(state.config().session_id),
      state_(std::move(state)),
      journal_(std::move(journal)),
      clock_(std::move(clock)),
      durability_(durability) {}

std::shared_ptr<SessionHost> SessionHost::create(SessionConfig config, const std::filesystem::path& dir, Clock clock,
                                                 Durability durability) {
    SessionState state = create_session(std::move(config));
    JournalWriter journal = JournalWriter::create(journal_file(dir, state.config().session_id), Durability::kDeferred);
    std::shared_ptr<SessionHost> host(new SessionHost(std::move(state), std::move(journal), std::move(clock), durability));
    std::lock_guard lock(host->mu_);
    const Timestamp now = host->now_locked();
    host->append_locked(EntryKind::kConfigSnapshot, now, config_snapshot(host->state_.config()));
    host->sync_locked();
    return host;
}

std::shared_ptr<SessionHost> SessionHost::recover(const std::filesystem::path& journal_path, Clock clock,
                                                  Durability durability) {
    ReplayResult replayed;
    JournalWriter journal = JournalWriter::open_existing(journal_path, &replayed, Durability::kDeferred);
    if (!replayed.state) throw Error(ErrorCode::kJournalCorrupt, journal_path.string() + " holds no config snapshot");

    std::shared_ptr<SessionHost> host(new SessionHost(*replayed.state, std::move(journal), std::move(clock), durability));
    std::lock_guard lock(host->mu_);
    const SessionConfig& config = host->state_.config();
    for (const auto& entry : replayed.entries) {
        host->last_now_ = std::max(host->last_now_, entry.ts);
        switch (entry.kind) {
            case EntryKind::kSessionStarted:
                host->scheduler_ = make_scheduler(entry.ts);
                break;
            case EntryKind::kPromptOpened: {
                PromptSpec p = prompt_from_json(entry.payload);
                host->scheduler_->next_index = p.prompt_index + 1;
                host->scheduler_->open_prompt = p;
                host->resolutions_.clear();
                break;
            }
            case EntryKind::kPromptExpired: {
                const PromptSpec p = prompt_from_json(entry.payload);
                auto& open = host->scheduler_->open_prompt;
                if (open && open->prompt_index == p.prompt_index) open.reset();
                break;
            }
            case EntryKind::kObservationLogged: {
                const Observation obs = observation_from_json(entry.payload);
                if (obs.status == ObservationStatus::kMissed) break;
                host->acks_[{obs.observer_id, obs.prompt_index, obs.subject_id}] = {entry.seq, obs.logged_at,
                                                                                    obs.selections, obs.status};
                const auto& open = host->scheduler_->open_prompt;
                if (open && open->prompt_index == obs.prompt_index) {
                    host->resolutions_[obs.observer_id] = outcome_of(obs.status);
                    if (config.scheduling_mode != SchedulingMode::kFreeSelect &&
                        host->resolutions_.size() == config.observer_ids.size()) {
                        host->scheduler_ = resolve_prompt(*host->scheduler_, open->prompt_index,
                                                          outcome_of(obs.status));
                        host->resolutions_.clear();
                    }
                }
                break;
            }
            case EntryKind::kConfigSnapshot:
            case EntryKind::kSessionEnded:
                break;
        }
    }
    if (host->scheduler_) host->scheduler_->last_now = host->last_now_;
    return host;
}

Timestamp SessionHost::now_locked() {
    // The injected clock is authoritative but must never run backwards for the scheduler.
    last_now_ = std::max(last_now_, clock_());
    return last_now_;
}

// Group commit: records appended by one operation are synced together before
// that operation acknowledges anything.
void SessionHost::sync_locked() {
    if (durability_ == Durability::kSyncEachAppend && !journal_.failed()) journal_.sync();
}

void SessionHost::append_locked(EntryKind kind, Timestamp ts, Json payload) {
    journal_.append({journal_.size(), kind, ts, std::move(payload)});
}

void SessionHost::apply_locked(Observation obs) {
    const std::uint64_t seq = journal_.size();
    journal_.append(observation_entry(seq, obs, state_.config().scheme));
    state_ = apply_observation(std::move(state_), std::move(obs));
}

void SessionHost::broadcast_locked(const StreamEvent& event) {
    for (auto& [id, sink] : subscribers_) sink(event);
}

void SessionHost::on_opened_locked(const PromptSpec& prompt, Timestamp now) {
    resolutions_.clear();
    append_locked(EntryKind::kPromptOpened, now, prompt_to_json(prompt));
    state_ = record_prompt_opened(std::move(state_));
    Json ev;
    ev["type"] = "prompt_opened";
    ev["prompt"] = prompt_to_json(prompt);
    ev["next_index"] = scheduler_->next_index;
    ev["server_time"] = format_iso8601(now);
    broadcast_locked({ev.dump(), false});
}

void SessionHost::on_expired_locked(const PromptSpec& prompt, Timestamp now) {
    append_locked(EntryKind::kPromptExpired, now, prompt_to_json(prompt));
    Json ev;
    ev["type"] = "prompt_expired";
    ev["prompt"] = prompt_to_json(prompt);
    ev["server_time"] = format_iso8601(now);
    broadcast_locked({ev.dump(), false});

    const SessionConfig& config = state_.config();
    if (config.scheduling_mode != SchedulingMode::kFreeSelect) {
        for (const auto& observer : config.observer_ids) {
            if (resolutions_.count(observer)) continue;
            Observation missed;
            missed.observer_id = observer;
            missed.subject_id = *prompt.subject_id;
            missed.prompt_index = prompt.prompt_index;
            missed.logged_at = prompt.deadline;
            missed.status = ObservationStatus::kMissed;
            apply_locked(std::move(missed));
        }
    }
    resolutions_.clear();
}

void SessionHost::tick_locked(Timestamp now) {
    if (state_.phase() != Phase::kRunning || !scheduler_) return;
    AdvanceResult result = advance(*scheduler_, state_.config(), now);
    scheduler_ = std::move(result.state);
    for (const auto& ev : result.events) {
        if (ev.kind == PromptEventKind::kOpened) {
            on_opened_locked(ev.prompt, now);
        } else {
            on_expired_locked(ev.prompt, now);
        }
    }
}

void SessionHost::maybe_close_prompt_locked(const PromptSpec& prompt) {
    const SessionConfig& config = state_.config();
    if (config.scheduling_mode == SchedulingMode::kFreeSelect) return;
    if (resolutions_.size() != config.observer_ids.size()) return;
    const bool any_logged = std::any_of(resolutions_.begin(), resolutions_.end(),
                                        [](const auto& r) { return r.second == PromptOutcome::kLogged; });
    scheduler_ = resolve_prompt(*scheduler_, prompt.prompt_index,
                                any_logged ? PromptOutcome::kLogged : PromptOutcome::kSkipped);
    resolutions_.clear();
}

std::string SessionHost::register_observer(const std::string& observer_id) {
    std::lock_guard lock(mu_);
    if (!state_.config().has_observer(observer_id)) {
        throw Error(ErrorCode::kUnknownObserver, "observer '" + observer_id + "' is not part of this session");
    }
    if (issued_.count(observer_id)) {
        throw Error(ErrorCode::kConflict, "observer '" + observer_id + "' already holds a token");
    }
    std::string token = random_token();
    while (tokens_.count(token)) token = random_token();
    tokens_[token] = observer_id;
    issued_[observer_id] = token;
    return token;
}

Timestamp SessionHost::start() {
    std::lock_guard lock(mu_);
    if (journal_.failed()) throw Error(ErrorCode::kIo, "journal is read-only after a write failure");
    const Timestamp now = now_locked();
    if (state_.phase() != Phase::kCreated) (void)start_session(state_, now);  // throws
    state_ = start_session(std::move(state_), now);
    append_locked(EntryKind::kSessionStarted, now, Json::object());
    scheduler_ = make_scheduler(now);
    tick_locked(now);
    sync_locked();
    return now;
}

void SessionHost::tick() {
    std::lock_guard lock(mu_);
    if (journal_.failed()) return;
    tick_locked(now_locked());
    sync_locked();
}

SubmitResult SessionHost::submit(const std::string& token, const SubmissionRequest& request) {
    std::lock_guard lock(mu_);
    const auto who = tokens_.find(token);
    if (who == tokens_.end()) return reject(RejectReason::kBadToken, "unknown or missing observer token");
    const std::string& observer = who->second;
    if (journal_.failed()) return reject(RejectReason::kReadOnly, "session is read-only after a journal failure");

    try {
        const Timestamp now = now_locked();
        tick_locked(now);
        if (state_.phase() != Phase::kRunning) {
            sync_locked();
            return reject(RejectReason::kNotRunning, std::string("session is ") + to_string(state_.phase()));
        }
        const SessionConfig& config = state_.config();

        std::string subject = request.subject_id;
        const bool free_select = config.scheduling_mode == SchedulingMode::kFreeSelect;
        if (subject.empty() && !free_select) subject = *prompt_at(config, scheduler_->session_start, request.prompt_index).subject_id;

        Selections selections = request.selections;
        drop_empty_groups(selections);

        const SubmissionKey key{observer, request.prompt_index, subject};
        if (const auto prior = acks_.find(key); prior != acks_.end()) {
            sync_locked();
            if (prior->second.selections == selections && prior->second.status == request.status) {
                SubmitResult r;
                r.accepted = true;
                r.duplicate = true;
                r.seq = prior->second.seq;
                r.logged_at = prior->second.logged_at;
                return r;
            }
            return reject(RejectReason::kKeyConflict, "a different observation was already accepted for this key");
        }

        if (request.prompt_index >= scheduler_->next_index) {
            sync_locked();
            return reject(RejectReason::kUnknownPrompt, "prompt " + std::to_string(request.prompt_index) + " has not opened");
        }
        const auto& open = scheduler_->open_prompt;
        if (!open || open->prompt_index != request.prompt_index) {
            sync_locked();
            return reject(RejectReason::kLate, "prompt " + std::to_string(request.prompt_index) + " is past its deadline");
        }
        const PromptSpec prompt = *open;
        if (!free_select && subject != *prompt.subject_id) {
            sync_locked();
            return reject(RejectReason::kSubjectMismatch,
                          "prompt " + std::to_string(prompt.prompt_index) + " targets '" + *prompt.subject_id + "'");
        }
        if (request.status == ObservationStatus::kMissed) {
            sync_locked();
            return reject(RejectReason::kInvalidSelection, "observers submit logged or skipped, never missed");
        }

        Observation obs{observer, subject, request.prompt_index, now, selections, request.status};
        try {
            check_observation(config, obs);
        } catch (const Error& e) {
            sync_locked();
            return reject(RejectReason::kInvalidSelection, e.what());
        }

        const std::uint64_t seq = journal_.size();
        apply_locked(obs);
        acks_[key] = {seq, now, std::move(selections), request.status};
        resolutions_[observer] = outcome_of(request.status);
        maybe_close_prompt_locked(prompt);
        sync_locked();

        SubmitResult r;
        r.accepted = true;
        r.seq = seq;
        r.logged_at = now;
        return r;
    } catch (const Error& e) {
        if (e.code() == ErrorCode::kIo) return reject(RejectReason::kReadOnly, e.what());
        throw;
    }
}

Timestamp SessionHost::end() {
    std::lock_guard lock(mu_);
    if (journal_.failed()) throw Error(ErrorCode::kIo, "journal is read-only after a write failure");
    const Timestamp now = now_locked();
    tick_locked(now);
    if (state_.phase() != Phase::kRunning) (void)end_session(state_, now);  // throws
    state_ = end_session(std::move(state_), now);
    append_locked(EntryKind::kSessionEnded, now, Json::object());
    sync_locked();
    Json ev;
    ev["type"] = "session_ended";
    ev["server_time"] = format_iso8601(now);
    broadcast_locked({ev.dump(), true});
    subscribers_.clear();
    return now;
}

std::string SessionHost::heartbeat_locked() {
    Json ev;
    ev["type"] = "heartbeat";
    ev["server_time"] = format_iso8601(last_now_);
    ev["phase"] = to_string(state_.phase());
    ev["next_index"] = scheduler_ ? scheduler_->next_index : 0;
    ev["open_prompt_index"] =
        scheduler_ && scheduler_->open_prompt ? Json(scheduler_->open_prompt->prompt_index) : Json(nullptr);
    return ev.dump();
}

std::string SessionHost::heartbeat() {
    std::lock_guard lock(mu_);
    if (!journal_.failed()) {
        tick_locked(now_locked());
        sync_locked();
    }
    return heartbeat_locked();
}

std::uint64_t SessionHost::subscribe(const std::string& token, EventSink sink) {
    std::lock_guard lock(mu_);
    if (!tokens_.count(token)) throw Error(ErrorCode::kUnauthorized, "unknown or missing observer token");
    if (!journal_.failed()) {
        tick_locked(now_locked());
        sync_locked();
    }
    if (state_.phase() == Phase::kEnded) {
        Json ev;
        ev["type"] = "session_ended";
        ev["server_time"] = format_iso8601(last_now_);
        sink({ev.dump(), true});
        return 0;
    }
    if (scheduler_ && scheduler_->open_prompt) {
        Json ev;
        ev["type"] = "prompt_opened";
        ev["replay"] = true;
        ev["prompt"] = prompt_to_json(*scheduler_->open_prompt);
        ev["next_index"] = scheduler_->next_index;
        ev["server_time"] = format_iso8601(last_now_);
        sink({ev.dump(), false});
    } else {
        sink({heartbeat_locked(), false});
    }
    const std::uint64_t id = next_subscription_++;
    subscribers_.emplace(id, std::move(sink));
    return id;
}

void SessionHost::unsubscribe(std::uint64_t subscription) {
    std::lock_guard lock(mu_);
    subscribers_.erase(subscription);
}

SessionState SessionHost::snapshot() const {
    std::lock_guard lock(mu_);
    return state_;
}

SchedulerState SessionHost::scheduler() const {
    std::lock_guard lock(mu_);
    return scheduler_.value_or(SchedulerState{});
}

Json SessionHost::status_json() const {
    std::lock_guard lock(mu_);
    Json doc;
    doc["session_id"] = session_id_;
    doc["title"] = state_.config().title;
    doc["phase"] = to_string(state_.phase());
    doc["prompts_issued"] = state_.prompts_issued();
    doc["observations"] = state_.observations().size();
    doc["journal_entries"] = journal_.size();
    doc["read_only"] = journal_.failed();
    doc["started_at"] = state_.started_at() ? Json(format_iso8601(*state_.started_at())) : Json(nullptr);
    doc["next_index"] = scheduler_ ? scheduler_->next_index : 0;
    doc["open_prompt"] =
        scheduler_ && scheduler_->open_prompt ? prompt_to_json(*scheduler_->open_prompt) : Json(nullptr);
    doc["config"] = config_to_json(state_.config());
    return doc;
}

HostStats SessionHost::stats() const {
    std::lock_guard lock(mu_);
    HostStats s;
    s.observations = state_.observations().size();
    s.idempotency_keys = acks_.size();
    s.open_prompt_resolutions = resolutions_.size();
    s.subscribers = subscribers_.size();
    s.tokens = tokens_.size();
    s.journal_entries = journal_.size();
    return s;
}

std::filesystem::path SessionHost::journal_path() const {
    std::lock_guard lock(mu_);
    return journal_.path();
}

SessionRegistry::SessionRegistry(std::filesystem::path data_dir, Clock clock, Durability durability)
    : data_dir_(std::move(data_dir)), clock_(std::move(clock)), durability_(durability) {
    std::filesystem::create_directories(data_dir_);
}

std::size_t SessionRegistry::recover_all(std::vector<std::string>* errors) {
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::directory_iterator(data_dir_)) {
        if (entry.is_regular_file() && entry.path().extension() == kJournalExtension) paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    std::size_t loaded = 0;
    for (const auto& path : paths) {
        try {
            auto host = SessionHost::recover(path, clock_, durability_);
            std::lock_guard lock(mu_);
            hosts_[host->session_id()] = std::move(host);
            ++loaded;
        } catch (const std::exception& e) {
            if (errors) errors->push_back(path.string() + ": " + e.what());
        }
    }
    return loaded;
}

SessionRegistry::CreateResult SessionRegistry::create(const Json& document) {
    auto validated = validate_config(document, clock_());
    if (!validated.ok()) return {nullptr, std::move(validated.violations)};
    const std::string id = validated.config->session_id;
    std::lock_guard lock(mu_);
    if (hosts_.count(id) || std::filesystem::exists(journal_file(data_dir_, id))) {
        throw Error(ErrorCode::kConflict, "session '" + id + "' already exists");
    }
    auto host = SessionHost::create(std::move(*validated.config), data_dir_, clock_, durability_);
    hosts_[id] = host;
    return {std::move(host), {}};
}

std::shared_ptr<SessionHost> SessionRegistry::find(const std::string& session_id) const {
    std::lock_guard lock(mu_);
    const auto it = hosts_.find(session_id);
    return it == hosts_.end() ? nullptr : it->second;
}

std::vector<std::shared_ptr<SessionHost>> SessionRegistry::all() const {
    std::lock_guard lock(mu_);
    std::vector<std::shared_ptr<SessionHost>> out;
    for (const auto& [id, host] : hosts_) out.push_back(host);
    return out;
}

void SessionRegistry::tick_all() {
    for (const auto& host : all()) host->tick();
}

}  // namespace dlot::service
