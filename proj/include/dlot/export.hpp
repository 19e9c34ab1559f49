#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dlot/config.hpp"
#include "dlot/session.hpp"

namespace dlot {

/// One exported observation. `cells` holds one entry per category group in
/// scheme order: the chosen label for single-selection groups, or the chosen
/// labels joined by ';' in scheme label order for multiple-selection groups.
struct ExportRow {
    std::string session_id;
    std::string subject_id;
    std::string subject_name;
    std::string observer_id;
    std::uint64_t prompt_index = 0;
    std::string timestamp;
    std::string status;
    std::vector<std::string> cells;

    bool operator==(const ExportRow&) const = default;
};

inline constexpr char kMultiSelectJoiner = ';';
inline constexpr std::size_t kFixedColumns = 7;
inline constexpr std::string_view kSheetName = "observations";

std::vector<std::string> export_header(const LabelScheme& scheme);
std::vector<std::string> row_cells(const ExportRow& row);

/// Rows ordered by subject (roster order), then timestamp, then observer id.
std::vector<ExportRow> to_rows(const SessionState& state);

/// RFC 4180: header first, CRLF endings, quoting only where needed, no BOM.
std::string write_csv(const LabelScheme& scheme, std::span<const ExportRow> rows);
std::string write_csv_matrix(const std::vector<std::vector<std::string>>& matrix);

/// Minimal workbook: one sheet named "observations", inline strings, stored ZIP.
std::string write_xlsx(const LabelScheme& scheme, std::span<const ExportRow> rows);

/// RFC 4180 reader used by the analytics commands. Accepts CRLF or LF line
/// endings. Throws kInvalidArgument on an unterminated quoted field.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace dlot
