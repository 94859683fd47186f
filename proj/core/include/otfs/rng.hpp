#pragma once

#include <cstdint>
#include <random>

namespace otfs {

/// splitmix64 finalizer; decorrelates nearby seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic child stream `stream_id` of a master seed. Streams with
/// different ids are independent for all practical purposes.
inline std::mt19937_64 seeded_stream(std::uint64_t master, std::uint64_t stream_id) {
  return std::mt19937_64(splitmix64(master + 0x632be59bd9b4e019ULL * (stream_id + 1)));
}

}  // namespace otfs
