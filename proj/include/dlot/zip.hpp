#pragma once

#include <string>
#include <utility>
#include <vector>

namespace dlot {

/// Builds a ZIP archive with every entry stored uncompressed, in the given
/// order, with the DOS timestamp pinned to 1980-01-01 00:00 so identical
/// input yields identical bytes.
std::string zip_store(const std::vector<std::pair<std::string, std::string>>& entries);

}  // namespace dlot
