#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dlot/config.hpp"
#include "dlot/time.hpp"

namespace dlot {

/// One scheduled observation opportunity.
struct PromptSpec {
    std::uint64_t prompt_index = 0;
    std::optional<std::string> subject_id;  // unset in free_select mode
    Timestamp due_at{};
    Timestamp deadline{};

    bool operator==(const PromptSpec&) const = default;
};

enum class PromptEventKind { kOpened, kExpired };

struct PromptEvent {
    PromptEventKind kind;
    PromptSpec prompt;

    bool operator==(const PromptEvent&) const = default;
};

enum class PromptOutcome { kLogged, kSkipped };

struct SchedulerState {
    Timestamp session_start{};
    std::uint64_t next_index = 0;
    std::optional<PromptSpec> open_prompt;
    std::optional<Timestamp> last_now;

    bool operator==(const SchedulerState&) const = default;
};

struct AdvanceResult {
    std::vector<PromptEvent> events;
    SchedulerState state;
};

SchedulerState make_scheduler(Timestamp session_start);

/// Prompt `index` of a session: due at start + index * interval, open for one
/// full interval, targeting roster[index mod |roster|] in round-robin mode.
PromptSpec prompt_at(const SessionConfig& config, Timestamp session_start, std::uint64_t index);

/// Moves the scheduler to `now`. Emits the expiry of the open prompt once its
/// deadline has passed, then every prompt that has come due, in index order.
/// Prompts skipped over by a stall are opened and expired back to back, so
/// nothing is skipped or repeated. Throws kNonMonotoneClock if `now` goes backwards.
AdvanceResult advance(const SchedulerState& state, const SessionConfig& config, Timestamp now);

/// Closes the open prompt before its deadline. Throws kPromptNotOpen unless
/// `prompt_index` is the open prompt.
SchedulerState resolve_prompt(const SchedulerState& state, std::uint64_t prompt_index, PromptOutcome outcome);

const char* to_string(PromptEventKind kind);
const char* to_string(PromptOutcome outcome);

Json prompt_to_json(const PromptSpec& prompt);
/// Throws kInvalidArgument on malformed input.
PromptSpec prompt_from_json(const Json& doc);

}  // namespace dlot
