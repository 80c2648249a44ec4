#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace puiq {

// 2-D image grid, indexed (row, col).
using Grid = Eigen::ArrayXXd;

enum class Domain { SDR, HDR };

std::string to_string(Domain d);
Domain domain_from_string(std::string_view s);

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Input value outside the mathematical domain of an operation.
struct DomainError : Error {
  using Error::Error;
};
// Invalid configuration (model parameters, weights, flags).
struct ConfigError : Error {
  using Error::Error;
};
// Mismatched shapes.
struct DimensionError : Error {
  using Error::Error;
};
// Dataset / file-content problems.
struct DataError : Error {
  using Error::Error;
};
// Operation called in the wrong state (stale cache, double normalization).
struct StateError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t splitmix64(std::uint64_t x);

// Deterministic random source. All distributions are implemented explicitly
// so that sequences are fully specified by the seed, independent of the
// standard library's distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Derives an independent stream from a master seed and a stream name.
  static Rng substream(std::uint64_t seed, std::string_view name);

  std::uint64_t next_u64();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  std::uint64_t uniform_int(std::uint64_t bound);  // [0, bound), bound > 0
  double normal(double mean, double sigma);

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Runs fn(i) for i in [begin, end). Worker count is capped by the
// PUIQ_THREADS environment variable (0 or unset = auto).
void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn);

int max_threads();

}  // namespace puiq
