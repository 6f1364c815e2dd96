#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace driftgce {

// FNV-1a 64-bit, used for provenance hashes of windows, models and configs.
class Fnv1a {
public:
    void update(std::string_view bytes);
    void update(double value);
    void update(std::span<const double> values);
    void update(std::int64_t value);
    std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hex_hash(std::uint64_t h);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// Shortest round-trip representation ("%.17g" trimmed); locale-independent.
std::string format_double(double v);

}  // namespace driftgce
