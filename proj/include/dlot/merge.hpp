#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dlot/journal.hpp"
#include "dlot/session.hpp"

namespace dlot {

/// (observer, prompt, subject): the identity of one observation.
struct ObservationKey {
    std::string observer_id;
    std::uint64_t prompt_index = 0;
    std::string subject_id;

    auto operator<=>(const ObservationKey&) const = default;
};

ObservationKey key_of(const Observation& obs);

struct MergeConflict {
    ObservationKey key;
    std::string first_source;
    std::string second_source;

    bool operator==(const MergeConflict&) const = default;
};

struct MergeReport {
    std::vector<std::string> sources;
    std::size_t rows_merged = 0;
    std::vector<MergeConflict> conflicts;  // ordered by key
};

struct MergeResult {
    SessionState state;
    MergeReport report;
};

struct MergeSource {
    std::string name;
    std::string bytes;
};

/// Unions the observations of journals that share one config snapshot.
/// Identical duplicates collapse; keys whose payloads differ between sources
/// are left out and reported. Observations come out in export order. Throws
/// kJournalCorrupt for a damaged journal and kConflict for mismatched configs.
MergeResult merge_journals(const std::vector<MergeSource>& sources);
MergeResult merge_journal_files(const std::vector<std::filesystem::path>& paths);

/// Journal bytes for a merged dataset: config snapshot, start, observations, end.
std::string merged_journal_bytes(const SessionState& state);

Json merge_report_json(const MergeReport& report);

}  // namespace dlot
