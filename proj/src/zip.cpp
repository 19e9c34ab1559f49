#include "dlot/zip.hpp"

#include <cstdint>
#include <limits>

#include "dlot/error.hpp"
#include "dlot/crc32.hpp"

namespace dlot {

namespace {

constexpr std::uint16_t kVersion = 20;
constexpr std::uint16_t kDosTime = 0;
constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;  // 1980-01-01

void put16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}

void put32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t checked32(std::size_t v) {
    if (v > std::numeric_limits<std::uint32_t>::max()) {
        throw Error(ErrorCode::kInvalidArgument, "zip entry too large for a non-ZIP64 archive");
    }
    return static_cast<std::uint32_t>(v);
}

}  // namespace

std::string zip_store(const std::vector<std::pair<std::string, std::string>>& entries) {
    std::string out;
    std::string central;
    for (const auto& [name, data] : entries) {
        const std::uint32_t crc = crc32_ieee(data);
        const std::uint32_t size = checked32(data.size());
        const std::uint32_t offset = checked32(out.size());

        put32(out, 0x04034b50);
        put16(out, kVersion);
        put16(out, 0);  // flags
        put16(out, 0);  // stored
        put16(out, kDosTime);
        put16(out, kDosDate);
        put32(out, crc);
        put32(out, size);
        put32(out, size);
        put16(out, static_cast<std::uint16_t>(name.size()));
        put16(out, 0);
        out += name;
        out += data;

        put32(central, 0x02014b50);
        put16(central, kVersion);
        put16(central, kVersion);
        put16(central, 0);
        put16(central, 0);
        put16(central, kDosTime);
        put16(central, kDosDate);
        put32(central, crc);
        put32(central, size);
        put32(central, size);
        put16(central, static_cast<std::uint16_t>(name.size()));
        put16(central, 0);  // extra
        put16(central, 0);  // comment
        put16(central, 0);  // disk
        put16(central, 0);  // internal attrs
        put32(central, 0);  // external attrs
        put32(central, offset);
        central += name;
    }
    const std::uint32_t central_offset = checked32(out.size());
    out += central;
    put32(out, 0x06054b50);
    put16(out, 0);
    put16(out, 0);
    put16(out, static_cast<std::uint16_t>(entries.size()));
    put16(out, static_cast<std::uint16_t>(entries.size()));
    put32(out, checked32(central.size()));
    put32(out, central_offset);
    put16(out, 0);
    return out;
}

}  // namespace dlot
