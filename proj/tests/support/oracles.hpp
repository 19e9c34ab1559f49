#pragma once

// Test-only reference implementations. None of these call into the code they
// check: they re-derive results by a different route.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dlot::testing {

/// Cohen's kappa by pairwise enumeration: chance agreement is the fraction of
/// all (i, j) item pairs where rater A's label on i equals rater B's on j.
struct BruteKappa {
    double observed;
    double chance;
    double kappa;
    bool defined;
};
BruteKappa brute_cohen(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Fleiss' kappa by enumerating ordered rater pairs per item and all pairs of
/// ratings across the whole table. `table[item][rater]`.
BruteKappa brute_fleiss(const std::vector<std::vector<std::string>>& table);

/// Strict RFC 4180 parser (CRLF record separators only).
std::vector<std::vector<std::string>> strict_csv_parse(std::string_view text);

/// Bitwise CRC-32 (reflected 0xEDB88320), no lookup table.
std::uint32_t bitwise_crc32(std::string_view bytes);

struct ZipPart {
    std::string name;
    std::string data;
    std::uint16_t method;
};

/// Reads a ZIP through its central directory; stored entries only. Throws
/// std::runtime_error on any structural or CRC problem.
std::vector<ZipPart> read_zip(std::string_view archive);

/// Cell matrix of the first worksheet in an XLSX archive, rows padded to the
/// width of the first row. Also returns the first sheet's name.
struct SheetMatrix {
    std::string sheet_name;
    std::vector<std::string> part_names;
    std::vector<std::vector<std::string>> cells;
};
SheetMatrix read_xlsx(std::string_view archive);

}  // namespace dlot::testing
