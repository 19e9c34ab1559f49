#include "dlot/merge.hpp"

#include <algorithm>
#include <map>
#include <optional>

#include "dlot/error.hpp"
#include "dlot/export.hpp"

namespace dlot {

ObservationKey key_of(const Observation& obs) { return {obs.observer_id, obs.prompt_index, obs.subject_id}; }

MergeResult merge_journals(const std::vector<MergeSource>& sources) {
    if (sources.empty()) throw Error(ErrorCode::kInvalidArgument, "merge needs at least one journal");

    struct Slot {
        Observation obs;
        std::string source;
        bool conflicted = false;
    };
    std::optional<Json> snapshot;
    std::optional<SessionState> base;
    std::optional<Timestamp> started;
    std::optional<Timestamp> ended;
    bool all_ended = true;
    std::map<ObservationKey, Slot> slots;
    std::map<ObservationKey, MergeConflict> conflicts;

    MergeReport report;
    for (const auto& source : sources) {
        report.sources.push_back(source.name);
        ReplayResult replayed;
        try {
            replayed = replay(source.bytes);
        } catch (const Error& e) {
            throw Error(ErrorCode::kJournalCorrupt, source.name + ": " + e.what());
        }
        if (!replayed.state) throw Error(ErrorCode::kJournalCorrupt, source.name + ": journal holds no config snapshot");
        const Json& this_snapshot = replayed.entries.front().payload;
        if (!snapshot) {
            snapshot = this_snapshot;
            base = create_session(replayed.state->config());
        } else if (*snapshot != this_snapshot) {
            throw Error(ErrorCode::kConflict, source.name + ": config snapshot differs from " + sources.front().name);
        }
        const SessionState& s = *replayed.state;
        if (s.started_at()) started = started ? std::min(*started, *s.started_at()) : *s.started_at();
        if (s.ended_at()) {
            ended = ended ? std::max(*ended, *s.ended_at()) : *s.ended_at();
        } else {
            all_ended = false;
        }
        for (const auto& obs : s.observations()) {
            const ObservationKey key = key_of(obs);
            auto [it, inserted] = slots.try_emplace(key, Slot{obs, source.name, false});
            if (inserted || it->second.obs == obs) continue;
            it->second.conflicted = true;
            // Keep the lexicographically smallest source pair so the report does not depend on input order.
            MergeConflict candidate{key, std::min(it->second.source, source.name), std::max(it->second.source, source.name)};
            auto existing = conflicts.find(key);
            if (existing == conflicts.end()) {
                conflicts.emplace(key, candidate);
            } else if (std::tie(candidate.first_source, candidate.second_source) <
                       std::tie(existing->second.first_source, existing->second.second_source)) {
                existing->second = candidate;
            }
        }
    }

    SessionState state = *base;
    if (started) {
        state = start_session(std::move(state), *started);
        std::vector<Observation> merged;
        for (auto& [key, slot] : slots) {
            if (!slot.conflicted) merged.push_back(std::move(slot.obs));
        }
        // Apply in export order so the stored order is independent of input order.
        const auto& roster = state.config().roster;
        std::stable_sort(merged.begin(), merged.end(), [&](const Observation& a, const Observation& b) {
            const auto pa = roster.position(a.subject_id).value_or(roster.size());
            const auto pb = roster.position(b.subject_id).value_or(roster.size());
            return std::tie(pa, a.logged_at, a.observer_id, a.prompt_index) <
                   std::tie(pb, b.logged_at, b.observer_id, b.prompt_index);
        });
        report.rows_merged = merged.size();
        for (auto& obs : merged) state = apply_observation(std::move(state), std::move(obs));
        if (all_ended && ended) state = end_session(std::move(state), *ended);
    }
    for (auto& [key, conflict] : conflicts) report.conflicts.push_back(std::move(conflict));
    return {std::move(state), std::move(report)};
}

MergeResult merge_journal_files(const std::vector<std::filesystem::path>& paths) {
    std::vector<MergeSource> sources;
    for (const auto& p : paths) sources.push_back({p.string(), read_file(p)});
    return merge_journals(sources);
}

std::string merged_journal_bytes(const SessionState& state) {
    std::string out;
    std::uint64_t seq = 0;
    const SessionConfig& config = state.config();
    out += encode_record({seq++, EntryKind::kConfigSnapshot, config.created_at, config_snapshot(config)});
    if (state.started_at()) {
        out += encode_record({seq++, EntryKind::kSessionStarted, *state.started_at(), Json::object()});
    }
    for (const auto& obs : state.observations()) out += encode_record(observation_entry(seq++, obs, config.scheme));
    if (state.ended_at()) out += encode_record({seq++, EntryKind::kSessionEnded, *state.ended_at(), Json::object()});
    return out;
}

Json merge_report_json(const MergeReport& report) {
    Json conflicts = Json::array();
    for (const auto& c : report.conflicts) {
        conflicts.push_back({{"observer_id", c.key.observer_id},
                             {"prompt_index", c.key.prompt_index},
                             {"subject_id", c.key.subject_id},
                             {"sources", {c.first_source, c.second_source}}});
    }
    Json doc;
    doc["sources"] = report.sources;
    doc["rows_merged"] = report.rows_merged;
    doc["conflicts"] = std::move(conflicts);
    return doc;
}

}  // namespace dlot
