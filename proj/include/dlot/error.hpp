#pragma once

#include <stdexcept>
#include <string>

namespace dlot {

enum class ErrorCode {
    kInvalidArgument,
    kAlreadyRunning,
    kSessionEnded,
    kNotRunning,
    kConfigFrozen,
    kUnknownSubject,
    kUnknownObserver,
    kUnknownGroup,
    kLabelNotInGroup,
    kSelectionCardinality,
    kNonMonotoneClock,
    kPromptNotOpen,
    kSequenceGap,
    kJournalSealed,
    kJournalCorrupt,
    kIo,
    kUndefined,
    kNotFound,
    kConflict,
    kUnauthorized,
    kLate,
    kUnknownPrompt,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace dlot
