#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dptext {

// Error taxonomy used across modules. Everything derives from std::runtime_error
// so callers that do not care about the distinction can catch one type.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t line, std::size_t byte_offset)
      : std::runtime_error(msg), line_(line), byte_offset_(byte_offset) {}
  std::size_t line() const { return line_; }
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t line_ = 0;
  std::size_t byte_offset_ = 0;
};

class CapabilityError : public std::runtime_error {
 public:
  explicit CapabilityError(const std::string& msg) : std::runtime_error(msg) {}
};

class PhaseError : public std::runtime_error {
 public:
  explicit PhaseError(const std::string& msg) : std::runtime_error(msg) {}
};

class TransportError : public std::runtime_error {
 public:
  explicit TransportError(const std::string& msg) : std::runtime_error(msg) {}
};

// 64-bit FNV-1a. Used for config digests and parameter digests; stable across
// runs and platforms, which the run manifests rely on.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fnv1a64_hex(std::string_view data);

// Seeded randomness source shared by the stochastic stages. Gaussian draws use
// an explicit Box-Muller transform instead of std::normal_distribution so the
// stream is fully specified by the seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return draws_; }

  double uniform() {
    ++draws_;
    // 53-bit mantissa in [0,1)
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    ++draws_;
    return n == 0 ? 0 : engine_() % n;
  }

  // Derive an independent child stream; deterministic in (seed, salt).
  Rng child(std::uint64_t salt) const {
    std::uint64_t mixed = seed_ ^ (salt + 0x9e3779b97f4a7c15ULL + (seed_ << 6) + (seed_ >> 2));
    return Rng(mixed);
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_ = 0;
  std::uint64_t draws_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Deterministic per-item seed derivation for work that fans out (contexts,
// completions). Pure function of the inputs.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t h = base;
  h ^= a + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h ^= b + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

}  // namespace dptext
