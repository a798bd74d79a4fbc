#pragma once
// Shared basic types: error classes, deterministic RNG with named substreams,
// one-hot encoding, and plain-text float formatting used by every on-disk format.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sit {

using Vec = std::vector<double>;

// Configuration/input errors (bad config file, unknown key, bad shapes at the API
// boundary). The CLI maps these to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced non-finite losses or parameters. CLI exit code 3.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// Deterministic 64-bit generator wrapper. All uniform draws are derived from the
// raw 64-bit output stream with fixed arithmetic, so sequences are identical
// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // Uniform on [0, 1).
  double uniform();
  // Uniform on [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer on [0, n). n must be positive.
  int uniform_int(int n);

 private:
  std::uint64_t state_[4];
};

// Derives the seed of a named substream from a master seed. The same
// (seed, name) pair always yields the same stream; different names decorrelate.
std::uint64_t stream_seed(std::uint64_t master_seed, const std::string& name);

// One-hot encoding of `index` into a vector of length `n`.
Vec onehot(int index, int n);

// Formats a double with 17 significant digits ("%.17g"): enough for an exact
// value round trip through text.
std::string format_real(double x);

// Parses a real number, throwing ConfigError with `context` on failure.
double parse_real(const std::string& text, const std::string& context);

double mean_of(const Vec& xs);
// Population standard deviation (divides by N).
double stddev_of(const Vec& xs);
double median_of(Vec xs);  // by value: needs to sort

bool all_finite(const Vec& xs);

}  // namespace sit
