#include "dlot/crc32.hpp"

#include <zlib.h>

namespace dlot {

std::uint32_t crc32_ieee(std::string_view bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

}  // namespace dlot
