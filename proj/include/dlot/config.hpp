#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dlot/time.hpp"

namespace dlot {

using Json = nlohmann::ordered_json;

/// Version stamped into every config snapshot written to a journal.
inline constexpr int kFormatVersion = 1;

enum class Selection { kSingle, kMultiple };

/// A named set of labels rendered either as radio buttons (single) or a checklist (multiple).
struct CategoryGroup {
    std::string name;
    std::vector<std::string> labels;
    Selection selection = Selection::kSingle;

    std::optional<std::size_t> label_position(std::string_view label) const;

    bool operator==(const CategoryGroup&) const = default;
};

struct LabelScheme {
    std::vector<CategoryGroup> groups;

    const CategoryGroup* find(std::string_view group_name) const;

    bool operator==(const LabelScheme&) const = default;
};

struct Subject {
    std::string id;
    std::string display_name;
    std::optional<std::string> group_tag;

    bool operator==(const Subject&) const = default;
};

struct Roster {
    std::vector<Subject> subjects;

    std::optional<std::size_t> position(std::string_view subject_id) const;
    std::size_t size() const { return subjects.size(); }

    bool operator==(const Roster&) const = default;
};

struct TimerPolicy {
    static constexpr Millis kDefaultInterval{10000};
    static constexpr Millis kMinimumInterval{500};

    Millis interval = kDefaultInterval;

    bool operator==(const TimerPolicy&) const = default;
};

enum class SchedulingMode { kSingleSubject, kRoundRobin, kFreeSelect };

/// Frozen description of one study session.
struct SessionConfig {
    std::string session_id;
    std::string title;
    LabelScheme scheme;
    Roster roster;
    TimerPolicy timer;
    SchedulingMode scheduling_mode = SchedulingMode::kRoundRobin;
    std::vector<std::string> observer_ids;
    Timestamp created_at{};

    bool has_observer(std::string_view observer_id) const;

    bool operator==(const SessionConfig&) const = default;
};

struct Violation {
    std::string path;
    std::string message;

    bool operator==(const Violation&) const = default;
};

struct ValidationResult {
    std::optional<SessionConfig> config;
    std::vector<Violation> violations;

    bool ok() const { return config.has_value(); }
};

/// Checks every invariant of an already-typed config. Empty result means valid.
std::vector<Violation> check_config(const SessionConfig& candidate);

/// Validates an arbitrary JSON document against the config schema and all
/// invariants, collecting every violation rather than stopping at the first.
/// A missing `created_at` is filled from `default_created_at`.
ValidationResult validate_config(const Json& raw, Timestamp default_created_at);

/// Same as above but parses `text` first; a parse failure is reported as a
/// violation at path "$".
ValidationResult validate_config_text(std::string_view text, Timestamp default_created_at);

Json config_to_json(const SessionConfig& config);

const char* to_string(Selection selection);
const char* to_string(SchedulingMode mode);
std::optional<Selection> selection_from_string(std::string_view text);
std::optional<SchedulingMode> scheduling_mode_from_string(std::string_view text);

/// Example config matching a classroom affect study: five affective states,
/// 30 students, a 5 s round-robin timer and three observers.
SessionConfig example_config();

}  // namespace dlot
