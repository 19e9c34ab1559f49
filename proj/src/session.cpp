#include "dlot/session.hpp"

#include "dlot/error.hpp"

namespace dlot {

bool SessionState::operator==(const SessionState& other) const {
    return *config_ == *other.config_ && phase_ == other.phase_ && prompts_issued_ == other.prompts_issued_ &&
           observations_ == other.observations_ && started_at_ == other.started_at_ &&
           ended_at_ == other.ended_at_;
}

namespace {

void require_valid(const SessionConfig& config) {
    const auto violations = check_config(config);
    if (!violations.empty()) {
        throw Error(ErrorCode::kInvalidArgument,
                    "invalid config: " + violations.front().path + ": " + violations.front().message);
    }
}

void require_running(const SessionState& state) {
    switch (state.phase()) {
        case Phase::kRunning: return;
        case Phase::kCreated: throw Error(ErrorCode::kNotRunning, "session not running");
        case Phase::kEnded: throw Error(ErrorCode::kSessionEnded, "session ended");
    }
}

}  // namespace

SessionState create_session(SessionConfig config) {
    require_valid(config);
    SessionState state;
    state.config_ = std::make_shared<const SessionConfig>(std::move(config));
    return state;
}

SessionState replace_config(const SessionState& state, SessionConfig config) {
    if (state.phase_ != Phase::kCreated) {
        throw Error(ErrorCode::kConfigFrozen, "config is frozen once the session has started");
    }
    return create_session(std::move(config));
}

SessionState start_session(SessionState state, Timestamp start_time) {
    if (state.phase_ == Phase::kRunning) throw Error(ErrorCode::kAlreadyRunning, "already running");
    if (state.phase_ == Phase::kEnded) throw Error(ErrorCode::kSessionEnded, "session ended");
    state.phase_ = Phase::kRunning;
    state.started_at_ = start_time;
    return state;
}

SessionState start_session(SessionConfig config, Timestamp start_time) {
    return start_session(create_session(std::move(config)), start_time);
}

SessionState record_prompt_opened(SessionState state) {
    require_running(state);
    ++state.prompts_issued_;
    return state;
}

void check_observation(const SessionConfig& config, const Observation& obs) {
    if (!config.roster.position(obs.subject_id)) {
        throw Error(ErrorCode::kUnknownSubject, "unknown subject '" + obs.subject_id + "'");
    }
    if (!config.has_observer(obs.observer_id)) {
        throw Error(ErrorCode::kUnknownObserver, "unknown observer '" + obs.observer_id + "'");
    }
    for (const auto& [group_name, labels] : obs.selections) {
        const CategoryGroup* group = config.scheme.find(group_name);
        if (group == nullptr) throw Error(ErrorCode::kUnknownGroup, "unknown group '" + group_name + "'");
        for (const auto& label : labels) {
            if (!group->label_position(label)) {
                throw Error(ErrorCode::kLabelNotInGroup,
                            "label '" + label + "' is not in group '" + group_name + "'");
            }
        }
    }
    if (obs.status != ObservationStatus::kLogged) {
        for (const auto& [group_name, labels] : obs.selections) {
            if (!labels.empty()) {
                throw Error(ErrorCode::kSelectionCardinality,
                            std::string(to_string(obs.status)) + " observation must not carry selections");
            }
        }
        return;
    }
    for (const auto& group : config.scheme.groups) {
        if (group.selection != Selection::kSingle) continue;
        const auto it = obs.selections.find(group.name);
        const std::size_t chosen = it == obs.selections.end() ? 0 : it->second.size();
        if (chosen != 1) {
            throw Error(ErrorCode::kSelectionCardinality, "single-selection group '" + group.name +
                                                              "' needs exactly one label, got " +
                                                              std::to_string(chosen));
        }
    }
}

SessionState apply_observation(SessionState state, Observation obs) {
    require_running(state);
    check_observation(*state.config_, obs);
    // Missed/skipped records keep an empty map rather than empty sets per key.
    if (obs.status != ObservationStatus::kLogged) obs.selections.clear();
    state.observations_.push_back(std::move(obs));
    return state;
}

SessionState end_session(SessionState state, Timestamp end_time) {
    require_running(state);
    state.phase_ = Phase::kEnded;
    state.ended_at_ = end_time;
    return state;
}

Json config_snapshot(const SessionConfig& config) {
    Json doc;
    doc["format_version"] = kFormatVersion;
    const Json body = config_to_json(config);
    for (const auto& [key, value] : body.items()) doc[key] = value;
    return doc;
}

const char* to_string(ObservationStatus status) {
    switch (status) {
        case ObservationStatus::kLogged: return "logged";
        case ObservationStatus::kMissed: return "missed";
        case ObservationStatus::kSkipped: return "skipped";
    }
    return "logged";
}

const char* to_string(Phase phase) {
    switch (phase) {
        case Phase::kCreated: return "created";
        case Phase::kRunning: return "running";
        case Phase::kEnded: return "ended";
    }
    return "created";
}

std::optional<ObservationStatus> observation_status_from_string(std::string_view text) {
    if (text == "logged") return ObservationStatus::kLogged;
    if (text == "missed") return ObservationStatus::kMissed;
    if (text == "skipped") return ObservationStatus::kSkipped;
    return std::nullopt;
}

namespace {

Json observation_header(const Observation& obs) {
    Json doc;
    doc["observer_id"] = obs.observer_id;
    doc["subject_id"] = obs.subject_id;
    doc["prompt_index"] = obs.prompt_index;
    doc["logged_at"] = format_iso8601(obs.logged_at);
    doc["status"] = to_string(obs.status);
    return doc;
}

}  // namespace

Json observation_to_json(const Observation& obs, const LabelScheme& scheme) {
    Json doc = observation_header(obs);
    Json selections = Json::object();
    for (const auto& group : scheme.groups) {
        const auto it = obs.selections.find(group.name);
        if (it == obs.selections.end()) continue;
        Json labels = Json::array();
        for (const auto& label : group.labels) {
            if (it->second.count(label)) labels.push_back(label);
        }
        selections[group.name] = std::move(labels);
    }
    // Groups unknown to the scheme still round-trip so the reducer can reject them.
    for (const auto& [name, labels] : obs.selections) {
        if (!scheme.find(name)) selections[name] = Json(labels);
    }
    doc["selections"] = std::move(selections);
    return doc;
}

Json observation_to_json(const Observation& obs) {
    Json doc = observation_header(obs);
    Json selections = Json::object();
    for (const auto& [name, labels] : obs.selections) selections[name] = Json(labels);
    doc["selections"] = std::move(selections);
    return doc;
}

Observation observation_from_json(const Json& doc) {
    auto fail = [](const std::string& what) -> Observation {
        throw Error(ErrorCode::kInvalidArgument, "malformed observation: " + what);
    };
    if (!doc.is_object()) return fail("not an object");
    Observation obs;
    try {
        obs.observer_id = doc.at("observer_id").get<std::string>();
        obs.subject_id = doc.at("subject_id").get<std::string>();
        const auto& index = doc.at("prompt_index");
        if (!index.is_number_unsigned() && !(index.is_number_integer() && index.get<long long>() >= 0)) {
            return fail("prompt_index must be a non-negative integer");
        }
        obs.prompt_index = index.get<std::uint64_t>();
        const auto ts = parse_iso8601(doc.at("logged_at").get<std::string>());
        if (!ts) return fail("logged_at is not an ISO 8601 UTC timestamp");
        obs.logged_at = *ts;
        const auto status = observation_status_from_string(doc.at("status").get<std::string>());
        if (!status) return fail("unknown status");
        obs.status = *status;
        if (const auto it = doc.find("selections"); it != doc.end()) {
            if (!it->is_object()) return fail("selections must be an object");
            for (const auto& [group, labels] : it->items()) {
                if (!labels.is_array()) return fail("selections." + group + " must be an array");
                auto& chosen = obs.selections[group];
                for (const auto& label : labels) chosen.insert(label.get<std::string>());
            }
        }
    } catch (const nlohmann::json::exception& e) {
        return fail(e.what());
    }
    return obs;
}

}  // namespace dlot
