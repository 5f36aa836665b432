#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>

namespace histloss {

// Shortest decimal that round-trips a double (17 significant digits).
inline std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// FNV-1a, used for dataset/trunk fingerprints in run echoes.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a(std::span<const double> xs, std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a(xs.data(), xs.size() * sizeof(double), h);
}

}  // namespace histloss
