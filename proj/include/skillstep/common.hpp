#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace skillstep {

// Error taxonomy:
//   ConfigError — structural problems (shape mismatch between modules, bad
//                 config files, incompatible checkpoints).
//   UsageError  — caller violated an API precondition.
//   DataError   — bad input data (invalid trajectories, corrupt files,
//                 generation failures).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// FNV-1a, used for config/maze hashing inside file headers.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a(s.data(), s.size(), h);
}

// Deterministic seed derivation: one master seed fans out into independent
// streams keyed by purpose and index.
inline uint64_t derive_seed(uint64_t master, uint64_t stream, uint64_t index = 0) {
  uint64_t x = master * 0x9e3779b97f4a7c15ull + stream;
  x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27; x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  x += index * 0xd1342543de82ef95ull;
  x ^= x >> 29; x *= 0xff51afd7ed558ccdull;
  x ^= x >> 32;
  return x;
}

}  // namespace skillstep
