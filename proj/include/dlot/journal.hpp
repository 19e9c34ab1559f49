#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dlot/config.hpp"
#include "dlot/crc32.hpp"
#include "dlot/session.hpp"
#include "dlot/time.hpp"

namespace dlot {

enum class EntryKind {
    kConfigSnapshot,
    kSessionStarted,
    kPromptOpened,
    kPromptExpired,
    kObservationLogged,
    kSessionEnded,
};

const char* to_string(EntryKind kind);
std::optional<EntryKind> entry_kind_from_string(std::string_view text);

struct JournalEntry {
    std::uint64_t seq = 0;
    EntryKind kind = EntryKind::kConfigSnapshot;
    Timestamp ts{};
    Json payload = Json::object();

    bool operator==(const JournalEntry&) const = default;
};

/// Journal file extension; one file per session named `<session_id>.dlotj`.
inline constexpr std::string_view kJournalExtension = ".dlotj";

/// `<crc32 as 8 lowercase hex> <json>\n`, the JSON object carrying seq, kind,
/// ts, payload in that order. The checksum covers exactly the JSON bytes.
std::string encode_record(const JournalEntry& entry);

struct JournalReport {
    std::uint64_t entries_read = 0;
    bool truncated_tail = false;
    std::optional<std::uint64_t> first_bad_line;  // 1-based
    std::string error;
    /// Length of the byte prefix holding the recovered records.
    std::uint64_t valid_bytes = 0;

    bool clean() const { return !truncated_tail && !first_bad_line; }
    bool operator==(const JournalReport&) const = default;
};

struct ReplayResult {
    std::optional<SessionState> state;  // absent when no record survived
    std::vector<JournalEntry> entries;
    JournalReport report;
};

/// Rebuilds the session by folding every intact record through the core
/// reducer. A torn or corrupt final record is dropped and flagged; any bad
/// record before it throws kJournalCorrupt naming the 1-based line.
ReplayResult replay(std::string_view bytes);

/// Same checks as replay, reported instead of thrown. Never fails.
JournalReport verify(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

enum class Durability {
    kSyncEachAppend,  // fdatasync before every acknowledgment
    kDeferred,        // caller invokes sync() (group commit within one prompt interval)
};

/// Single writer for one journal file, holding an exclusive advisory lock for
/// its lifetime. After a failed write the writer refuses further appends.
class JournalWriter {
public:
    /// Creates a new journal; fails if the file exists or is locked.
    static JournalWriter create(const std::filesystem::path& path, Durability durability = Durability::kSyncEachAppend);

    /// Opens an existing journal for appending. A torn tail is cut off so the
    /// next record starts on a clean line; `recovered` receives the replay.
    static JournalWriter open_existing(const std::filesystem::path& path, ReplayResult* recovered = nullptr,
                                       Durability durability = Durability::kSyncEachAppend);

    JournalWriter(JournalWriter&& other) noexcept;
    JournalWriter& operator=(JournalWriter&& other) noexcept;
    JournalWriter(const JournalWriter&) = delete;
    JournalWriter& operator=(const JournalWriter&) = delete;
    ~JournalWriter();

    /// Durable before return. Returns the acknowledged seq.
    std::uint64_t append(const JournalEntry& entry);
    void sync();

    std::uint64_t size() const { return length_; }
    bool sealed() const { return sealed_; }
    bool failed() const { return failed_; }
    const std::filesystem::path& path() const { return path_; }

private:
    JournalWriter(std::filesystem::path path, int fd, Durability durability);

    void close() noexcept;

    std::filesystem::path path_;
    int fd_ = -1;
    Durability durability_;
    std::uint64_t length_ = 0;
    bool sealed_ = false;
    bool failed_ = false;
    bool dirty_ = false;
};

JournalEntry observation_entry(std::uint64_t seq, const Observation& obs, const LabelScheme& scheme);

}  // namespace dlot
