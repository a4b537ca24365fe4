#include "groundgen/common.hpp"

#include <cstdio>

namespace groundgen {

void log_info(const std::string& msg) {
  std::fprintf(stderr, "[groundgen] %s\n", msg.c_str());
}

void log_warn(const std::string& msg) {
  std::fprintf(stderr, "[groundgen] warning: %s\n", msg.c_str());
}

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace groundgen
