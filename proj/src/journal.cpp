#include "dlot/journal.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dlot/error.hpp"
#include "dlot/scheduler.hpp"

namespace dlot {

const char* to_string(EntryKind kind) {
    switch (kind) {
        case EntryKind::kConfigSnapshot: return "config_snapshot";
        case EntryKind::kSessionStarted: return "session_started";
        case EntryKind::kPromptOpened: return "prompt_opened";
        case EntryKind::kPromptExpired: return "prompt_expired";
        case EntryKind::kObservationLogged: return "observation_logged";
        case EntryKind::kSessionEnded: return "session_ended";
    }
    return "config_snapshot";
}

std::optional<EntryKind> entry_kind_from_string(std::string_view text) {
    for (auto k : {EntryKind::kConfigSnapshot, EntryKind::kSessionStarted, EntryKind::kPromptOpened,
                   EntryKind::kPromptExpired, EntryKind::kObservationLogged, EntryKind::kSessionEnded}) {
        if (text == to_string(k)) return k;
    }
    return std::nullopt;
}

namespace {

std::string entry_json(const JournalEntry& entry) {
    Json doc;
    doc["seq"] = entry.seq;
    doc["kind"] = to_string(entry.kind);
    doc["ts"] = format_iso8601(entry.ts);
    doc["payload"] = entry.payload;
    return doc.dump(-1, ' ', false, Json::error_handler_t::replace);
}

std::optional<std::uint32_t> parse_hex8(std::string_view text) {
    if (text.size() != 8) return std::nullopt;
    std::uint32_t value = 0;
    for (char c : text) {
        value <<= 4;
        if (c >= '0' && c <= '9') {
            value |= static_cast<std::uint32_t>(c - '0');
        } else if (c >= 'a' && c <= 'f') {
            value |= static_cast<std::uint32_t>(c - 'a' + 10);
        } else {
            return std::nullopt;
        }
    }
    return value;
}

struct LineError {
    bool checksum;  // true: the record bytes are damaged; false: intact but invalid
    std::string message;
};

// Decodes one line (without its LF). Returns the entry or describes the defect.
std::optional<JournalEntry> decode_line(std::string_view line, LineError& err) {
    if (line.size() < 10 || line[8] != ' ') {
        err = {true, "record framing is malformed"};
        return std::nullopt;
    }
    const auto expected = parse_hex8(line.substr(0, 8));
    const std::string_view body = line.substr(9);
    if (!expected || *expected != crc32_ieee(body)) {
        err = {true, "checksum mismatch"};
        return std::nullopt;
    }
    const Json doc = Json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        err = {false, "record body is not a JSON object"};
        return std::nullopt;
    }
    JournalEntry entry;
    const auto seq = doc.find("seq");
    const auto kind = doc.find("kind");
    const auto ts = doc.find("ts");
    const auto payload = doc.find("payload");
    if (seq == doc.end() || !seq->is_number_unsigned() || kind == doc.end() || !kind->is_string() ||
        ts == doc.end() || !ts->is_string() || payload == doc.end()) {
        err = {false, "record is missing seq, kind, ts or payload"};
        return std::nullopt;
    }
    entry.seq = seq->get<std::uint64_t>();
    const auto k = entry_kind_from_string(kind->get<std::string>());
    const auto t = parse_iso8601(ts->get<std::string>());
    if (!k || !t) {
        err = {false, "record has an unknown kind or malformed ts"};
        return std::nullopt;
    }
    entry.kind = *k;
    entry.ts = *t;
    entry.payload = *payload;
    return entry;
}

SessionState config_from_snapshot(const Json& payload) {
    if (!payload.is_object()) throw Error(ErrorCode::kInvalidArgument, "config snapshot is not an object");
    const auto version = payload.find("format_version");
    if (version == payload.end() || !version->is_number_integer() || version->get<int>() < 1 ||
        version->get<int>() > kFormatVersion) {
        throw Error(ErrorCode::kInvalidArgument, "unsupported or missing format_version");
    }
    auto validated = validate_config(payload, Timestamp{});
    if (!validated.ok()) {
        const auto& v = validated.violations.front();
        throw Error(ErrorCode::kInvalidArgument, "invalid config snapshot: " + v.path + ": " + v.message);
    }
    return create_session(std::move(*validated.config));
}

// Folds one entry into the state. Throws dlot::Error on a reducer rejection.
void fold(std::optional<SessionState>& state, const JournalEntry& entry) {
    if (entry.kind == EntryKind::kConfigSnapshot) {
        if (state) throw Error(ErrorCode::kInvalidArgument, "config_snapshot may only be the first record");
        state = config_from_snapshot(entry.payload);
        return;
    }
    if (!state) throw Error(ErrorCode::kInvalidArgument, "first record must be config_snapshot");
    switch (entry.kind) {
        case EntryKind::kSessionStarted:
            state = start_session(std::move(*state), entry.ts);
            break;
        case EntryKind::kPromptOpened:
            prompt_from_json(entry.payload);
            state = record_prompt_opened(std::move(*state));
            break;
        case EntryKind::kPromptExpired:
            if (state->phase() != Phase::kRunning) throw Error(ErrorCode::kNotRunning, "session not running");
            prompt_from_json(entry.payload);
            break;
        case EntryKind::kObservationLogged:
            state = apply_observation(std::move(*state), observation_from_json(entry.payload));
            break;
        case EntryKind::kSessionEnded:
            state = end_session(std::move(*state), entry.ts);
            break;
        case EntryKind::kConfigSnapshot:
            break;
    }
}

struct Scan {
    ReplayResult result;
    std::string hard_error;
};

Scan scan(std::string_view bytes) {
    Scan out;
    auto& r = out.result;
    std::size_t pos = 0;
    std::uint64_t line_no = 0;
    while (pos < bytes.size()) {
        ++line_no;
        const std::size_t lf = bytes.find('\n', pos);
        const bool complete = lf != std::string_view::npos;
        const std::string_view line = bytes.substr(pos, complete ? lf - pos : std::string_view::npos);
        const std::size_t next = complete ? lf + 1 : bytes.size();
        const bool last = next >= bytes.size();

        if (!complete) {
            r.report.truncated_tail = true;
            break;
        }
        LineError err;
        auto entry = decode_line(line, err);
        if (!entry && err.checksum && last) {
            r.report.truncated_tail = true;
            break;
        }
        std::string problem;
        if (!entry) {
            problem = err.message;
        } else if (entry->seq != r.entries.size()) {
            problem = "sequence gap: expected seq " + std::to_string(r.entries.size()) + ", found " +
                      std::to_string(entry->seq);
        } else if (r.state && r.state->phase() == Phase::kEnded) {
            problem = "record follows session_ended";
        } else {
            try {
                fold(r.state, *entry);
            } catch (const Error& e) {
                problem = std::string(to_string(entry->kind)) + " rejected: " + e.what();
            }
        }
        if (!problem.empty()) {
            r.report.first_bad_line = line_no;
            r.report.error = "line " + std::to_string(line_no) + ": " + problem;
            break;
        }
        r.entries.push_back(std::move(*entry));
        pos = next;
        r.report.valid_bytes = pos;
    }
    r.report.entries_read = r.entries.size();
    return out;
}

}  // namespace

std::string encode_record(const JournalEntry& entry) {
    const std::string body = entry_json(entry);
    char crc[9];
    std::snprintf(crc, sizeof crc, "%08x", crc32_ieee(body));
    std::string record;
    record.reserve(body.size() + 10);
    record.append(crc, 8).append(1, ' ').append(body).append(1, '\n');
    return record;
}

ReplayResult replay(std::string_view bytes) {
    Scan s = scan(bytes);
    if (s.result.report.first_bad_line) throw Error(ErrorCode::kJournalCorrupt, s.result.report.error);
    return std::move(s.result);
}

JournalReport verify(std::string_view bytes) { return scan(bytes).result.report; }

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw Error(ErrorCode::kIo, "cannot read " + path.string());
    return std::move(buf).str();
}

namespace {

[[noreturn]] void throw_errno(const std::string& what) {
    throw Error(ErrorCode::kIo, what + ": " + std::strerror(errno));
}

int lock_or_close(int fd, const std::filesystem::path& path) {
    if (::flock(fd, LOCK_EX | LOCK_NB) != 0) {
        const int saved = errno;
        ::close(fd);
        errno = saved;
        throw_errno("journal " + path.string() + " is locked by another writer");
    }
    return fd;
}

}  // namespace

JournalWriter::JournalWriter(std::filesystem::path path, int fd, Durability durability)
    : path_(std::move(path)), fd_(fd), durability_(durability) {}

JournalWriter JournalWriter::create(const std::filesystem::path& path, Durability durability) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) throw_errno("cannot create journal " + path.string());
    return JournalWriter(path, lock_or_close(fd, path), durability);
}

JournalWriter JournalWriter::open_existing(const std::filesystem::path& path, ReplayResult* recovered,
                                           Durability durability) {
    const int fd = ::open(path.c_str(), O_RDWR | O_APPEND | O_CLOEXEC);
    if (fd < 0) throw_errno("cannot open journal " + path.string());
    JournalWriter writer(path, lock_or_close(fd, path), durability);

    ReplayResult result = replay(read_file(path));
    if (result.report.truncated_tail) {
        if (::ftruncate(writer.fd_, static_cast<off_t>(result.report.valid_bytes)) != 0 || ::fsync(writer.fd_) != 0) {
            throw_errno("cannot cut torn tail of " + path.string());
        }
    }
    writer.length_ = result.entries.size();
    writer.sealed_ = !result.entries.empty() && result.entries.back().kind == EntryKind::kSessionEnded;
    if (recovered) *recovered = std::move(result);
    return writer;
}

JournalWriter::JournalWriter(JournalWriter&& other) noexcept
    : path_(std::move(other.path_)),
      fd_(std::exchange(other.fd_, -1)),
      durability_(other.durability_),
      length_(other.length_),
      sealed_(other.sealed_),
      failed_(other.failed_),
      dirty_(other.dirty_) {}

JournalWriter& JournalWriter::operator=(JournalWriter&& other) noexcept {
    if (this != &other) {
        close();
        path_ = std::move(other.path_);
        fd_ = std::exchange(other.fd_, -1);
        durability_ = other.durability_;
        length_ = other.length_;
        sealed_ = other.sealed_;
        failed_ = other.failed_;
        dirty_ = other.dirty_;
    }
    return *this;
}

JournalWriter::~JournalWriter() { close(); }

void JournalWriter::close() noexcept {
    if (fd_ >= 0) {
        if (dirty_ && !failed_) ::fdatasync(fd_);
        ::close(fd_);  // releases the flock
        fd_ = -1;
    }
}

std::uint64_t JournalWriter::append(const JournalEntry& entry) {
    if (failed_) throw Error(ErrorCode::kIo, "journal is read-only after a write failure");
    if (sealed_) throw Error(ErrorCode::kJournalSealed, "journal sealed by session_ended");
    if (entry.seq != length_) {
        throw Error(ErrorCode::kSequenceGap, "sequence gap: expected seq " + std::to_string(length_) + ", got " +
                                                 std::to_string(entry.seq));
    }
    if ((entry.seq == 0) != (entry.kind == EntryKind::kConfigSnapshot)) {
        throw Error(ErrorCode::kInvalidArgument, "config_snapshot must be exactly the first record");
    }
    const std::string record = encode_record(entry);
    std::size_t written = 0;
    while (written < record.size()) {
        const ssize_t n = ::write(fd_, record.data() + written, record.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            failed_ = true;
            throw_errno("journal write failed");
        }
        written += static_cast<std::size_t>(n);
    }
    dirty_ = true;
    if (durability_ == Durability::kSyncEachAppend) sync();
    ++length_;
    if (entry.kind == EntryKind::kSessionEnded) sealed_ = true;
    return entry.seq;
}

void JournalWriter::sync() {
    if (!dirty_) return;
    if (::fdatasync(fd_) != 0) {
        failed_ = true;
        throw_errno("journal sync failed");
    }
    dirty_ = false;
}

JournalEntry observation_entry(std::uint64_t seq, const Observation& obs, const LabelScheme& scheme) {
    return {seq, EntryKind::kObservationLogged, obs.logged_at, observation_to_json(obs, scheme)};
}

}  // namespace dlot
