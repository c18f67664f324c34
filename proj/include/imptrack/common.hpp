#pragma once

#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace imptrack {

// Error categories map onto CLI exit codes (1 usage, 2 data, 3 numeric).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Portable random stream. The standard distributions are implementation
// defined, so uniform/normal draws are derived from raw mt19937_64 bits here
// to keep generated data identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  uint64_t below(uint64_t n);
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  uint64_t state_[312];
  int index_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent stream seed from a base seed and a salt.
uint64_t mix_seed(uint64_t seed, uint64_t salt);

// Wraps an angle into (-pi, pi].
double wrap_angle(double a);

uint64_t fnv1a64(std::span<const unsigned char> bytes);
uint64_t fnv1a64(std::string_view text);
std::string to_hex(uint64_t value);

std::string base64_encode(std::span<const unsigned char> bytes);
std::vector<unsigned char> base64_decode(std::string_view text);

}  // namespace imptrack
