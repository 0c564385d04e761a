#include "qcpd/rng.hpp"

#include "qcpd/error.hpp"

namespace qcpd {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInsufficientData: return "InsufficientData";
    case ErrorCode::kNonFiniteObjective: return "NonFiniteObjective";
    case ErrorCode::kAllZeroMatrix: return "AllZeroMatrix";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNoObservations: return "NoObservations";
    case ErrorCode::kMissingCriticalValue: return "MissingCriticalValue";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kFormatError: return "FormatError";
  }
  return "Unknown";
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t substream_key(std::uint64_t seed,
                            std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t key = mix64(seed);
  for (std::uint64_t index : path) {
    key = mix64(key ^ mix64(index + 0x632be59bd9b4e019ULL));
  }
  return key;
}

std::uint64_t hash_name(std::string_view name) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace qcpd
