#include "bmfpca/format.hpp"

#include <array>
#include <charconv>
#include <cstdio>

namespace bmfpca {

std::string format_double(double value) {
  std::array<char, 40> buffer{};
  auto [ptr, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value,
                                 std::chars_format::general, 17);
  if (ec != std::errc()) return "nan";
  return std::string(buffer.data(), ptr);
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
  std::string quoted = "\"";
  for (char c : text) {
    if (c == '"') quoted += "\\\"";
    else quoted += c;
  }
  quoted += '"';
  return quoted;
}

void Fingerprint::add(const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < bytes; ++k) {
    state_ ^= p[k];
    state_ *= 1099511628211ULL;
  }
}

std::string Fingerprint::hex() const {
  std::array<char, 17> buffer{};
  std::snprintf(buffer.data(), buffer.size(), "%016llx", state_);
  return std::string(buffer.data(), 16);
}

}  // namespace bmfpca
