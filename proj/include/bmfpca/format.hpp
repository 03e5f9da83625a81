#pragma once

#include <string>
#include <string_view>

namespace bmfpca {

// Shortest-free fixed 17 significant digit rendering; parses back bit-exact.
std::string format_double(double value);

// Quotes a CSV field when it contains separators, quotes or line breaks.
std::string csv_field(std::string_view text);

// FNV-1a accumulator used for dataset fingerprints.
class Fingerprint {
 public:
  void add(const void* data, std::size_t bytes);
  void add(double value) { add(&value, sizeof value); }
  void add(std::string_view text) { add(text.data(), text.size()); }
  std::string hex() const;

 private:
  unsigned long long state_ = 1469598103934665603ULL;
};

}  // namespace bmfpca
