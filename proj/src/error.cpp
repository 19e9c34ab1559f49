#include "dlot/error.hpp"

namespace dlot {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::kInvalidArgument: return "invalid_argument";
        case ErrorCode::kAlreadyRunning: return "already_running";
        case ErrorCode::kSessionEnded: return "session_ended";
        case ErrorCode::kNotRunning: return "not_running";
        case ErrorCode::kConfigFrozen: return "config_frozen";
        case ErrorCode::kUnknownSubject: return "unknown_subject";
        case ErrorCode::kUnknownObserver: return "unknown_observer";
        case ErrorCode::kUnknownGroup: return "unknown_group";
        case ErrorCode::kLabelNotInGroup: return "label_not_in_group";
        case ErrorCode::kSelectionCardinality: return "selection_cardinality";
        case ErrorCode::kNonMonotoneClock: return "non_monotone_clock";
        case ErrorCode::kPromptNotOpen: return "prompt_not_open";
        case ErrorCode::kSequenceGap: return "sequence_gap";
        case ErrorCode::kJournalSealed: return "journal_sealed";
        case ErrorCode::kJournalCorrupt: return "journal_corrupt";
        case ErrorCode::kIo: return "io";
        case ErrorCode::kUndefined: return "undefined";
        case ErrorCode::kNotFound: return "not_found";
        case ErrorCode::kConflict: return "conflict";
        case ErrorCode::kUnauthorized: return "unauthorized";
        case ErrorCode::kLate: return "late";
        case ErrorCode::kUnknownPrompt: return "unknown_prompt";
    }
    return "unknown";
}

}  // namespace dlot
