#include "dlot/config.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace dlot {

std::optional<std::size_t> CategoryGroup::label_position(std::string_view label) const {
    const auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) return std::nullopt;
    return static_cast<std::size_t>(it - labels.begin());
}

const CategoryGroup* LabelScheme::find(std::string_view group_name) const {
    for (const auto& g : groups) {
        if (g.name == group_name) return &g;
    }
    return nullptr;
}

std::optional<std::size_t> Roster::position(std::string_view subject_id) const {
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        if (subjects[i].id == subject_id) return i;
    }
    return std::nullopt;
}

bool SessionConfig::has_observer(std::string_view observer_id) const {
    return std::find(observer_ids.begin(), observer_ids.end(), observer_id) != observer_ids.end();
}

const char* to_string(Selection selection) {
    return selection == Selection::kSingle ? "single" : "multiple";
}

const char* to_string(SchedulingMode mode) {
    switch (mode) {
        case SchedulingMode::kSingleSubject: return "single_subject";
        case SchedulingMode::kRoundRobin: return "round_robin";
        case SchedulingMode::kFreeSelect: return "free_select";
    }
    return "round_robin";
}

std::optional<Selection> selection_from_string(std::string_view text) {
    if (text == "single") return Selection::kSingle;
    if (text == "multiple") return Selection::kMultiple;
    return std::nullopt;
}

std::optional<SchedulingMode> scheduling_mode_from_string(std::string_view text) {
    if (text == "single_subject") return SchedulingMode::kSingleSubject;
    if (text == "round_robin") return SchedulingMode::kRoundRobin;
    if (text == "free_select") return SchedulingMode::kFreeSelect;
    return std::nullopt;
}

namespace {

bool has_control_chars(std::string_view s) {
    return std::any_of(s.begin(), s.end(), [](char c) {
        const auto u = static_cast<unsigned char>(c);
        return u < 0x20 || u == 0x7f;
    });
}

bool valid_session_id(std::string_view id) {
    if (id.empty() || id.size() > 128 || id.front() == '.') return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
               c == '_' || c == '-';
    });
}

std::string indexed(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

class Checker {
public:
    explicit Checker(std::vector<Violation>& out) : out_(out) {}

    void add(std::string path, std::string message) { out_.push_back({std::move(path), std::move(message)}); }

    void text(const std::string& path, std::string_view value, bool required) {
        if (required && value.empty()) {
            add(path, "must be non-empty");
        } else if (has_control_chars(value)) {
            add(path, "must not contain control characters");
        }
    }

private:
    std::vector<Violation>& out_;
};

}  // namespace

std::vector<Violation> check_config(const SessionConfig& c) {
    std::vector<Violation> out;
    Checker check(out);

    if (!valid_session_id(c.session_id)) {
        check.add("session_id", c.session_id.empty()
                                    ? "must be non-empty"
                                    : "may only contain letters, digits, '.', '_' and '-' and must not start with '.'");
    }
    check.text("title", c.title, false);

    if (c.scheme.groups.empty()) check.add("scheme.groups", "scheme must contain at least one group");
    std::set<std::string> group_names;
    for (std::size_t gi = 0; gi < c.scheme.groups.size(); ++gi) {
        const auto& g = c.scheme.groups[gi];
        const auto gpath = indexed("scheme.groups", gi);
        check.text(gpath + ".name", g.name, true);
        if (!g.name.empty() && !group_names.insert(g.name).second) check.add(gpath + ".name", "duplicate group name");
        if (g.labels.empty()) check.add(gpath + ".labels", "group must contain at least one label");
        std::set<std::string> seen;
        for (std::size_t li = 0; li < g.labels.size(); ++li) {
            const auto& label = g.labels[li];
            const auto lpath = indexed(gpath + ".labels", li);
            check.text(lpath, label, true);
            if (label.find(';') != std::string::npos) check.add(lpath, "label must not contain ';'");
            if (!label.empty() && !seen.insert(label).second) check.add(lpath, "duplicate label");
        }
    }

    if (c.roster.subjects.empty()) check.add("roster", "roster must contain at least one subject");
    std::set<std::string> subject_ids;
    for (std::size_t i = 0; i < c.roster.subjects.size(); ++i) {
        const auto& s = c.roster.subjects[i];
        const auto spath = indexed("roster", i);
        check.text(spath + ".id", s.id, true);
        if (!s.id.empty() && !subject_ids.insert(s.id).second) check.add(spath + ".id", "duplicate subject id");
        check.text(spath + ".display_name", s.display_name, false);
        if (s.group_tag) check.text(spath + ".group_tag", *s.group_tag, false);
    }

    if (c.timer.interval < TimerPolicy::kMinimumInterval) {
        check.add("timer.interval_ms", "interval must be at least 500 ms");
    }
    if (c.scheduling_mode == SchedulingMode::kSingleSubject && c.roster.subjects.size() != 1) {
        check.add("scheduling_mode", "single_subject mode requires exactly one subject in the roster");
    }

    if (c.observer_ids.empty()) check.add("observer_ids", "at least one observer is required");
    std::set<std::string> observers;
    for (std::size_t i = 0; i < c.observer_ids.size(); ++i) {
        const auto opath = indexed("observer_ids", i);
        check.text(opath, c.observer_ids[i], true);
        if (!c.observer_ids[i].empty() && !observers.insert(c.observer_ids[i]).second) {
            check.add(opath, "duplicate observer id");
        }
    }
    return out;
}

namespace {

// Reads a JSON document into a candidate config, reporting shape errors.
class Reader {
public:
    explicit Reader(std::vector<Violation>& out) : out_(out) {}

    void add(const std::string& path, std::string message) {
        out_.push_back({path, std::move(message)});
        shape_errors_.insert(path);
    }

    bool reported(const std::string& path) const { return shape_errors_.count(path) != 0; }

    std::string string(const Json& obj, const char* key, const std::string& path, bool required) {
        const auto it = obj.find(key);
        if (it == obj.end()) {
            if (required) add(path, "is required");
            return {};
        }
        if (!it->is_string()) {
            add(path, "must be a string");
            return {};
        }
        return it->get<std::string>();
    }

    const Json* array(const Json& obj, const char* key, const std::string& path) {
        const auto it = obj.find(key);
        if (it == obj.end()) {
            add(path, "is required");
            return nullptr;
        }
        if (!it->is_array()) {
            add(path, "must be an array");
            return nullptr;
        }
        return &*it;
    }

    std::vector<std::string> strings(const Json& arr, const std::string& path) {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            if (!arr[i].is_string()) {
                add(indexed(path, i), "must be a string");
                continue;
            }
            out.push_back(arr[i].get<std::string>());
        }
        return out;
    }

private:
    std::vector<Violation>& out_;
    std::set<std::string> shape_errors_;
};

}  // namespace

ValidationResult validate_config(const Json& raw, Timestamp default_created_at) {
    ValidationResult result;
    if (!raw.is_object()) {
        result.violations.push_back({"$", "config must be a JSON object"});
        return result;
    }
    std::vector<Violation> shape;
    Reader in(shape);
    SessionConfig c;

    c.session_id = in.string(raw, "session_id", "session_id", true);
    c.title = in.string(raw, "title", "title", false);

    c.created_at = default_created_at;
    if (raw.contains("created_at")) {
        const auto text = in.string(raw, "created_at", "created_at", false);
        if (!in.reported("created_at")) {
            if (auto t = parse_iso8601(text)) {
                c.created_at = *t;
            } else {
                in.add("created_at", "must be an ISO 8601 UTC timestamp like 2024-01-31T09:00:00.000Z");
            }
        }
    }

    const auto mode = in.string(raw, "scheduling_mode", "scheduling_mode", false);
    if (!mode.empty()) {
        if (auto m = scheduling_mode_from_string(mode)) {
            c.scheduling_mode = *m;
        } else {
            in.add("scheduling_mode", "must be one of single_subject, round_robin, free_select");
        }
    }

    if (const auto it = raw.find("timer"); it != raw.end()) {
        if (!it->is_object()) {
            in.add("timer", "must be an object");
        } else if (const auto iv = it->find("interval_ms"); iv != it->end()) {
            if (!iv->is_number_integer()) {
                in.add("timer.interval_ms", "must be an integer number of milliseconds");
            } else {
                c.timer.interval = Millis{iv->get<long long>()};
            }
        }
    }

    if (const auto it = raw.find("scheme"); it == raw.end()) {
        in.add("scheme", "is required");
    } else if (!it->is_object()) {
        in.add("scheme", "must be an object");
    } else if (const Json* groups = in.array(*it, "groups", "scheme.groups")) {
        for (std::size_t gi = 0; gi < groups->size(); ++gi) {
            const auto& g = (*groups)[gi];
            const auto gpath = indexed("scheme.groups", gi);
            if (!g.is_object()) {
                in.add(gpath, "must be an object");
                continue;
            }
            CategoryGroup group;
            group.name = in.string(g, "name", gpath + ".name", true);
            const auto sel = in.string(g, "selection", gpath + ".selection", false);
            if (!sel.empty()) {
                if (auto s = selection_from_string(sel)) {
                    group.selection = *s;
                } else {
                    in.add(gpath + ".selection", "must be 'single' or 'multiple'");
                }
            }
            if (const Json* labels = in.array(g, "labels", gpath + ".labels")) {
                group.labels = in.strings(*labels, gpath + ".labels");
            }
            c.scheme.groups.push_back(std::move(group));
        }
    }

    if (const Json* roster = in.array(raw, "roster", "roster")) {
        for (std::size_t i = 0; i < roster->size(); ++i) {
            const auto& s = (*roster)[i];
            const auto spath = indexed("roster", i);
            if (!s.is_object()) {
                in.add(spath, "must be an object");
                continue;
            }
            Subject subject;
            subject.id = in.string(s, "id", spath + ".id", true);
            subject.display_name = in.string(s, "display_name", spath + ".display_name", false);
            if (subject.display_name.empty()) subject.display_name = subject.id;
            if (s.contains("group_tag") && !s["group_tag"].is_null()) {
                subject.group_tag = in.string(s, "group_tag", spath + ".group_tag", false);
            }
            c.roster.subjects.push_back(std::move(subject));
        }
    }

    if (const Json* observers = in.array(raw, "observer_ids", "observer_ids")) {
        c.observer_ids = in.strings(*observers, "observer_ids");
    }

    result.violations = shape;
    for (auto& v : check_config(c)) {
        // A field with a shape error would otherwise be reported twice.
        if (!in.reported(v.path)) result.violations.push_back(std::move(v));
    }
    if (result.violations.empty()) result.config = std::move(c);
    return result;
}

ValidationResult validate_config_text(std::string_view text, Timestamp default_created_at) {
    Json doc = Json::parse(text, nullptr, false);
    if (doc.is_discarded()) {
        ValidationResult result;
        result.violations.push_back({"$", "document is not valid JSON"});
        return result;
    }
    return validate_config(doc, default_created_at);
}

Json config_to_json(const SessionConfig& c) {
    Json groups = Json::array();
    for (const auto& g : c.scheme.groups) {
        groups.push_back({{"name", g.name}, {"selection", to_string(g.selection)}, {"labels", g.labels}});
    }
    Json roster = Json::array();
    for (const auto& s : c.roster.subjects) {
        Json entry = {{"id", s.id}, {"display_name", s.display_name}};
        if (s.group_tag) entry["group_tag"] = *s.group_tag;
        roster.push_back(std::move(entry));
    }
    Json doc;
    doc["session_id"] = c.session_id;
    doc["title"] = c.title;
    doc["created_at"] = format_iso8601(c.created_at);
    doc["scheduling_mode"] = to_string(c.scheduling_mode);
    doc["timer"] = {{"interval_ms", c.timer.interval.count()}};
    doc["scheme"] = {{"groups", std::move(groups)}};
    doc["roster"] = std::move(roster);
    doc["observer_ids"] = c.observer_ids;
    return doc;
}

SessionConfig example_config() {
    SessionConfig c;
    c.session_id = "class-a-affect";
    c.title = "Classroom affect observation";
    c.scheme.groups.push_back(
        {"affect", {"engaged", "boredom", "confusion", "frustration", "neutral"}, Selection::kSingle});
    c.scheme.groups.push_back({"behavior", {"on-task", "off-task", "on-task-conversation"}, Selection::kMultiple});
    for (int i = 1; i <= 30; ++i) {
        char id[8];
        std::snprintf(id, sizeof id, "s%02d", i);
        c.roster.subjects.push_back({id, std::string("Student ") + (id + 1), std::nullopt});
    }
    c.timer.interval = Millis{5000};
    c.scheduling_mode = SchedulingMode::kRoundRobin;
    c.observer_ids = {"r1", "r2", "r3"};
    c.created_at = *parse_iso8601("2024-01-15T09:00:00.000Z");
    return c;
}

}  // namespace dlot
