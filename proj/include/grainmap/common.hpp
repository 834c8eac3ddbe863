#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace grainmap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Error categories map onto the CLI exit codes (2 config, 3 data, 4 solver).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

/// Caps the number of worker threads used by parallel loops (0 = hardware).
void set_thread_count(unsigned threads);
unsigned thread_count();

/// Runs fn(begin, end) over fixed-size chunks of [0, count). Chunk boundaries
/// depend only on `count` and `grain`, never on the thread count, so any
/// per-chunk work is reproducible regardless of schedule.
void parallel_for(std::size_t count, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace grainmap
