#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace mlcvqa {

/// Base class for every error raised by the toolkit. The CLI turns these
/// into machine-readable error reports.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on the caller's input failed (shape, coverage, range).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent file contents.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// SplitMix64 finalizer. Used to derive independent per-task seeds from one
/// root seed so that results do not depend on how tasks map to workers.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(mix_seed(seed, stream));
}

}  // namespace mlcvqa
