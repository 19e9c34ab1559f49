#pragma once

#include <cstdint>
#include <string_view>

namespace dlot {

/// CRC-32 with the IEEE 802.3 polynomial (the zlib/PNG/ZIP variant).
std::uint32_t crc32_ieee(std::string_view bytes);

}  // namespace dlot
