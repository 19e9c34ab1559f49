#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dlot/config.hpp"
#include "dlot/time.hpp"

namespace dlot {

enum class ObservationStatus { kLogged, kMissed, kSkipped };

/// group name -> chosen labels
using Selections = std::map<std::string, std::set<std::string>>;

/// One observer's record of one subject at one prompt.
struct Observation {
    std::string observer_id;
    std::string subject_id;
    std::uint64_t prompt_index = 0;
    Timestamp logged_at{};
    Selections selections;
    ObservationStatus status = ObservationStatus::kLogged;

    bool operator==(const Observation&) const = default;
};

enum class Phase { kCreated, kRunning, kEnded };

/// Immutable session value. Transitions return a new state; the config is
/// shared between copies and never changes once the session has started.
class SessionState {
public:
    const SessionConfig& config() const { return *config_; }
    Phase phase() const { return phase_; }
    std::uint64_t prompts_issued() const { return prompts_issued_; }
    const std::vector<Observation>& observations() const { return observations_; }
    std::optional<Timestamp> started_at() const { return started_at_; }
    std::optional<Timestamp> ended_at() const { return ended_at_; }

    bool operator==(const SessionState& other) const;

private:
    std::shared_ptr<const SessionConfig> config_;
    Phase phase_ = Phase::kCreated;
    std::uint64_t prompts_issued_ = 0;
    std::vector<Observation> observations_;
    std::optional<Timestamp> started_at_;
    std::optional<Timestamp> ended_at_;

    friend SessionState create_session(SessionConfig config);
    friend SessionState replace_config(const SessionState& state, SessionConfig config);
    friend SessionState start_session(SessionState state, Timestamp start_time);
    friend SessionState record_prompt_opened(SessionState state);
    friend SessionState apply_observation(SessionState state, Observation obs);
    friend SessionState end_session(SessionState state, Timestamp end_time);
};

/// New session in phase `created`. Throws kInvalidArgument if the config fails check_config.
SessionState create_session(SessionConfig config);

/// Swaps the config of a session that has not started yet; throws kConfigFrozen otherwise.
SessionState replace_config(const SessionState& state, SessionConfig config);

/// created -> running. The caller journals config_snapshot(config) ahead of
/// the session_started event.
SessionState start_session(SessionState state, Timestamp start_time);
SessionState start_session(SessionConfig config, Timestamp start_time);

SessionState record_prompt_opened(SessionState state);

/// Validates `obs` against the session config, throwing the matching
/// ErrorCode on the first problem. Does not look at the phase.
void check_observation(const SessionConfig& config, const Observation& obs);

/// Appends `obs` if the session is running and the observation conforms.
/// Pure: pass an rvalue to avoid copying the observation store.
SessionState apply_observation(SessionState state, Observation obs);

SessionState end_session(SessionState state, Timestamp end_time);

/// Payload of the journal's first record: the config plus `format_version`.
Json config_snapshot(const SessionConfig& config);

const char* to_string(ObservationStatus status);
const char* to_string(Phase phase);
std::optional<ObservationStatus> observation_status_from_string(std::string_view text);

/// Selections are emitted in scheme order (groups, then labels) so the
/// encoding is canonical.
Json observation_to_json(const Observation& obs, const LabelScheme& scheme);
Json observation_to_json(const Observation& obs);
/// Throws kInvalidArgument on a malformed document.
Observation observation_from_json(const Json& doc);

}  // namespace dlot
