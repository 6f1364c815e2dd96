#include "driftgce/io.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

namespace driftgce {

void Fnv1a::update(std::string_view bytes) {
    for (unsigned char c : bytes) {
        state_ ^= c;
        state_ *= 0x100000001b3ULL;
    }
}

void Fnv1a::update(double value) {
    // +0.0 and -0.0 hash alike
    const auto bits = std::bit_cast<std::uint64_t>(value == 0.0 ? 0.0 : value);
    for (int i = 0; i < 8; ++i) {
        state_ ^= (bits >> (8 * i)) & 0xffU;
        state_ *= 0x100000001b3ULL;
    }
}

void Fnv1a::update(std::span<const double> values) {
    for (double v : values) {
        update(v);
    }
}

void Fnv1a::update(std::int64_t value) {
    const auto bits = static_cast<std::uint64_t>(value);
    for (int i = 0; i < 8; ++i) {
        state_ ^= (bits >> (8 * i)) & 0xffU;
        state_ *= 0x100000001b3ULL;
    }
}

std::string hex_hash(std::uint64_t h) {
    char buf[17];
    auto [ptr, ec] = std::to_chars(buf, buf + 16, h, 16);
    std::string s(buf, ptr);
    return std::string(16 - s.size(), '0') + s;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open for reading: " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + path.string());
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) {
        throw std::runtime_error("format_double failed");
    }
    return std::string(buf, ptr);
}

}  // namespace driftgce
