#include "dlot/scheduler.hpp"

#include "dlot/error.hpp"

namespace dlot {

SchedulerState make_scheduler(Timestamp session_start) {
    SchedulerState state;
    state.session_start = session_start;
    return state;
}

PromptSpec prompt_at(const SessionConfig& config, Timestamp session_start, std::uint64_t index) {
    PromptSpec p;
    p.prompt_index = index;
    const auto interval = config.timer.interval;
    p.due_at = session_start + interval * static_cast<long long>(index);
    p.deadline = p.due_at + interval;
    switch (config.scheduling_mode) {
        case SchedulingMode::kSingleSubject:
            p.subject_id = config.roster.subjects.front().id;
            break;
        case SchedulingMode::kRoundRobin:
            p.subject_id = config.roster.subjects[index % config.roster.subjects.size()].id;
            break;
        case SchedulingMode::kFreeSelect:
            break;
    }
    return p;
}

AdvanceResult advance(const SchedulerState& state, const SessionConfig& config, Timestamp now) {
    if (state.last_now && now < *state.last_now) {
        throw Error(ErrorCode::kNonMonotoneClock, "clock moved backwards: " + format_iso8601(now) + " < " +
                                                      format_iso8601(*state.last_now));
    }
    AdvanceResult result{{}, state};
    SchedulerState& next = result.state;
    next.last_now = now;

    if (next.open_prompt && now >= next.open_prompt->deadline) {
        result.events.push_back({PromptEventKind::kExpired, *next.open_prompt});
        next.open_prompt.reset();
    }
    for (;;) {
        PromptSpec p = prompt_at(config, next.session_start, next.next_index);
        if (p.due_at > now) break;
        ++next.next_index;
        result.events.push_back({PromptEventKind::kOpened, p});
        if (now >= p.deadline) {
            result.events.push_back({PromptEventKind::kExpired, p});
        } else {
            next.open_prompt = std::move(p);
        }
    }
    return result;
}

SchedulerState resolve_prompt(const SchedulerState& state, std::uint64_t prompt_index, PromptOutcome) {
    if (!state.open_prompt || state.open_prompt->prompt_index != prompt_index) {
        throw Error(ErrorCode::kPromptNotOpen,
                    "prompt " + std::to_string(prompt_index) + " is not open" +
                        (state.open_prompt ? " (open: " + std::to_string(state.open_prompt->prompt_index) + ")"
                                           : std::string{}));
    }
    SchedulerState next = state;
    next.open_prompt.reset();
    return next;
}

const char* to_string(PromptEventKind kind) {
    return kind == PromptEventKind::kOpened ? "prompt_opened" : "prompt_expired";
}

const char* to_string(PromptOutcome outcome) {
    return outcome == PromptOutcome::kLogged ? "logged" : "skipped";
}

Json prompt_to_json(const PromptSpec& prompt) {
    Json doc;
    doc["prompt_index"] = prompt.prompt_index;
    doc["subject_id"] = prompt.subject_id ? Json(*prompt.subject_id) : Json(nullptr);
    doc["due_at"] = format_iso8601(prompt.due_at);
    doc["deadline"] = format_iso8601(prompt.deadline);
    return doc;
}

PromptSpec prompt_from_json(const Json& doc) {
    try {
        PromptSpec p;
        p.prompt_index = doc.at("prompt_index").get<std::uint64_t>();
        if (const auto& s = doc.at("subject_id"); !s.is_null()) p.subject_id = s.get<std::string>();
        const auto due = parse_iso8601(doc.at("due_at").get<std::string>());
        const auto deadline = parse_iso8601(doc.at("deadline").get<std::string>());
        if (!due || !deadline) throw Error(ErrorCode::kInvalidArgument, "malformed prompt timestamps");
        p.due_at = *due;
        p.deadline = *deadline;
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kInvalidArgument, std::string("malformed prompt: ") + e.what());
    }
}

}  // namespace dlot
